#pragma once

#include "ogdbz/linalg.hpp"
#include "ogdbz/system_model.hpp"

#include <vector>

namespace ogdbz {

/// Disturbance-action policy u_t = -K x_t + sum_{i=1}^H M^[i] w_{t-i}.
///
/// `mats[i-1]` holds M^[i] (m x n). The flattened coordinate order used by the lifted
/// polytope and the gradient is block i = 1..H, then column-major inside each block:
/// index((i, r, c)) = (i - 1) m n + c m + r.
struct DacPolicy {
  int H = 0;
  std::vector<Mat> mats;

  static DacPolicy zeros(int H, int m, int n);
  static DacPolicy unflatten(const Vec& v, int H, int m, int n);

  int m() const { return mats.empty() ? 0 : static_cast<int>(mats.front().rows()); }
  int n() const { return mats.empty() ? 0 : static_cast<int>(mats.front().cols()); }
  int dim() const { return H * m() * n(); }

  Vec flatten() const;
  double frobenius_norm() const;
  void validate() const;

  DacPolicy& operator+=(const DacPolicy& o);
  DacPolicy& operator-=(const DacPolicy& o);
  DacPolicy& operator*=(double s);
};

DacPolicy operator+(DacPolicy a, const DacPolicy& b);
DacPolicy operator-(DacPolicy a, const DacPolicy& b);
DacPolicy operator*(double s, DacPolicy a);

/// H + 1 policies M_{t-H}, ..., M_t, oldest first.
using PolicyWindow = std::vector<DacPolicy>;

/// phi_x[k-1] and phi_u[k-1] for k = 1..2H.
struct PhiTable {
  std::vector<Mat> phi_x;
  std::vector<Mat> phi_u;
};

/// A_K = A - B K for a fixed base gain, with cached powers A_K^j and A_K^j B for j < depth.
class ClosedLoop {
public:
  ClosedLoop(const Mat& A, const Mat& B, const Mat& K, int depth);
  ClosedLoop(const LinearSystem& sys, const StableGain& base, int H);

  const Mat& A() const { return A_; }
  const Mat& B() const { return B_; }
  const Mat& K() const { return K_; }
  const Mat& AK() const { return pow_[1]; }
  int n() const { return static_cast<int>(A_.rows()); }
  int m() const { return static_cast<int>(B_.cols()); }
  int depth() const { return static_cast<int>(pow_.size()) - 1; }

  /// A_K^j for 0 <= j <= depth.
  const Mat& power(int j) const;
  /// A_K^j B for 0 <= j <= depth.
  const Mat& power_B(int j) const;

private:
  Mat A_, B_, K_;
  std::vector<Mat> pow_;
  std::vector<Mat> pow_B_;
};

/// Fixed-depth ring of past disturbances; lag(k) = w_{t-k}. Zero-filled before the first
/// push, which encodes w_s = 0 for s < 0.
class DisturbanceHistory {
public:
  DisturbanceHistory(int depth, int n);
  /// From an explicit list with lags[k-1] = w_{t-k}; missing lags are zero.
  DisturbanceHistory(const std::vector<Vec>& lags, int depth, int n);

  /// The pushed value becomes lag 1.
  void push(const Vec& w);
  const Vec& lag(int k) const;
  int depth() const { return depth_; }

private:
  int depth_;
  int head_ = 0;
  std::vector<Vec> buf_;
};

/// Phi_k^x(M_{t-H:t-1}) for 1 <= k <= 2H.
///
/// `window_states` is M_{t-H}, ..., M_{t-1} (oldest first), so M_{t-i} is
/// window_states[H - i]. Term i of the sum uses block [k - i] of M_{t-i}:
///
///   k | i = 1            | i = 2            | ... | i = H
///   1 | (none)           | (none)           |     | (none)
///   2 | M_{t-1}^[1]      | (none)           |     | (none)
///   3 | M_{t-1}^[2]      | M_{t-2}^[1]      |     | (none)
///  H+1| M_{t-1}^[H]      | M_{t-2}^[H-1]    |     | M_{t-H}^[1]
///  2H | (none)           | (none)           |     | M_{t-H}^[H]
///
/// and each M term is premultiplied by A_K^{i-1} B. The free term A_K^{k-1} appears for k <= H.
Mat phi_x(int k, const std::vector<DacPolicy>& window_states, const ClosedLoop& cl);

/// Phi_k^u(M_{t-H:t}) = M_t^[k] 1{k <= H} - K Phi_k^x(M_{t-H:t-1}).
Mat phi_u(int k, const PolicyWindow& window, const ClosedLoop& cl);

/// Table for a full window.
PhiTable window_phi(const PolicyWindow& window, const ClosedLoop& cl);

/// Table with every window slot equal to `policy`.
PhiTable ring_phi(const DacPolicy& policy, const ClosedLoop& cl);

/// x~_t = sum_{k=1}^{2H} Phi_k^x w_{t-k}; needs a history of depth >= 2H.
Vec approx_state(const std::vector<DacPolicy>& window_states, const DisturbanceHistory& hist,
                 const ClosedLoop& cl);

/// u~_t = -K x~_t + sum_i M_t^[i] w_{t-i}.
Vec approx_action(const PolicyWindow& window, const DisturbanceHistory& hist,
                  const ClosedLoop& cl);

/// u_t = -K x_t + sum_{i=1}^H M^[i] w_{t-i}.
Vec control_action(const Vec& x, const DacPolicy& policy, const DisturbanceHistory& hist,
                   const Mat& K);

/// M^[i](K) = (K_base - K)(A - B K)^{i-1}, i = 1..H.
DacPolicy policy_from_gain(const StableGain& gain, const StableGain& base, const Mat& A,
                           const Mat& B, int H);

/// Row-sum bound of the policy set: 2 sqrt(n) kappa^3 (1 - gamma)^{i-1}.
double m_set_bound(int i, int n, double kappa, double gamma);

struct MSetReport {
  bool inside = true;
  double worst_slack = 0.0;  // min_i (bound_i - ||M^[i]||_inf)
  int worst_index = 1;       // 1-based block attaining the minimum
};

MSetReport in_M_set(const DacPolicy& policy, double kappa, double gamma, double tol = 0.0);

}  // namespace ogdbz
