#pragma once

#include "ogdbz/linalg.hpp"

#include <optional>
#include <string>

namespace ogdbz {

/// x_{t+1} = A x_t + B u_t + w_t with ||w_t||_inf <= w_bar.
struct LinearSystem {
  Mat A;
  Mat B;
  double w_bar = 0.0;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }

  /// Throws InvalidArgument on shape mismatch, negative w_bar or non-finite data.
  void validate() const;
};

/// Polytopic constraints Dx x <= dx, Du u <= du. The origin must be strictly interior.
struct ConstraintSpec {
  Mat Dx;
  Vec dx;
  Mat Du;
  Vec du;

  int kx() const { return static_cast<int>(Dx.rows()); }
  int ku() const { return static_cast<int>(Du.rows()); }
  int kc() const { return kx() + ku(); }

  void validate(int n, int m) const;
};

/// A gain with a (kappa, gamma) strong-stability certificate:
/// A - B K = Q^{-1} L Q, ||L||_2 <= 1 - gamma, max(||Q||_2, ||Q^{-1}||_2, ||K||_2) <= kappa.
struct StableGain {
  Mat K;
  double kappa = 1.0;
  double gamma = 1.0;
  Mat Q;
  Mat L;
};

/// Translation from physical coordinates: x_work = x_phys - x_eq, u_work = u_phys - u_eq.
struct CoordinateShift {
  Vec x_eq;
  Vec u_eq;
};

struct ProblemInstance {
  LinearSystem system;
  ConstraintSpec constraints;
  StableGain base_gain;
  int T = 0;
  std::optional<CoordinateShift> coordinate_shift;
  std::string name;
};

/// Raised when a gain cannot be certified; the message names the violated inequality.
class CertificationFailure : public Error {
public:
  using Error::Error;
};

/// Verifies that K is (kappa, gamma)-strongly stable for (A, B).
/// The similarity comes from a real modal (eigenvector) form of A - BK, or from a real
/// Schur form when the eigenvector basis is numerically singular.
StableGain certify_strong_stability(const Mat& A, const Mat& B, const Mat& K, double kappa,
                                    double gamma);

/// Certifies K with the smallest kappa and largest gamma the modal factorization admits.
StableGain certify_tightest(const Mat& A, const Mat& B, const Mat& K);

/// (A - BK)^k.
Mat closed_loop_power(const StableGain& gain, const Mat& A, const Mat& B, int k);

/// max(||B||_2, 1).
double kappa_B(const LinearSystem& sys);

/// Infinite-horizon discrete LQR gain (u = -K x) by Riccati value iteration.
Mat lqr_gain(const Mat& A, const Mat& B, const Mat& Qc, const Mat& Rc, int max_iter = 100000,
             double tol = 1e-13);

/// Scalar room thermal model, discretized by forward Euler.
struct HvacConfig {
  double upsilon = 100.0;    // thermal capacitance
  double zeta = 6.0;         // thermal resistance
  double theta_out = 30.0;   // outdoor temperature
  double pi_heat = 1.5;      // constant heat gain
  double dt = 60.0;          // step length
  double theta_set = 24.0;   // setpoint, also the working origin
  double x_min = 22.0;
  double x_max = 26.0;
  double u_min = 0.0;
  double u_max = 5.0;
  double w_min = -2.0;
  double w_max = 2.0;
  double q = 2.0;            // state cost weight
  double r_min = 0.1;        // action cost weight r_t ~ U(r_min, r_max)
  double r_max = 4.0;
  // Fixed K: the smallest |K| on a 0.05 grid for which Omega_0.4 is nonempty at H = 7.
  double base_gain = -0.1;
  int T = 2000;

  bool operator==(const HvacConfig&) const = default;
};

/// Raw Euler map x' = a x + b u + c + s w in physical units.
struct HvacRawMap {
  double a, b, c, s;
};

HvacRawMap hvac_raw_map(const HvacConfig& cfg);

/// Shifted scalar instance with x_0 = 0 at the setpoint. The base gain is certified with
/// certify_tightest and its (kappa, gamma) are stored in base_gain.
ProblemInstance build_hvac_instance(const HvacConfig& cfg);

/// Physical-frame state/action from working coordinates (identity when no shift is recorded).
Vec to_physical_state(const ProblemInstance& inst, const Vec& x);
Vec to_physical_action(const ProblemInstance& inst, const Vec& u);

}  // namespace ogdbz
