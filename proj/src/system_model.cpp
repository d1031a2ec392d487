#include "ogdbz/system_model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <sstream>
#include <vector>

namespace ogdbz {

namespace {

constexpr double kRelTol = 1e-9;
constexpr double kMaxModalCondition = 1e10;

bool leq_tol(double a, double b) { return a <= b * (1.0 + kRelTol) + kRelTol * 1e-3; }

struct Similarity {
  Mat Q;
  Mat L;
  bool valid = false;
};

// A_K = V L V^{-1} with L block diagonal (1x1 real or 2x2 rotation-scaling blocks).
// Returns Q = c V^{-1} with c balancing ||Q||_2 = ||Q^{-1}||_2.
Similarity modal_similarity(const Mat& AK) {
  const auto n = AK.rows();
  Similarity out;
  Eigen::EigenSolver<Mat> es(AK, true);
  if (es.info() != Eigen::Success) return out;
  const auto& lam = es.eigenvalues();
  const auto& vecs = es.eigenvectors();
  const double imag_tol = 1e-12 * std::max(1.0, norm2(AK));

  Mat V(n, n);
  Mat L = Mat::Zero(n, n);
  Eigen::Index col = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double im = lam(j).imag();
    if (std::abs(im) <= imag_tol) {
      Vec v = vecs.col(j).real();
      const double nv = v.norm();
      if (nv == 0.0 || col >= n) return out;
      V.col(col) = v / nv;
      L(col, col) = lam(j).real();
      ++col;
    } else if (im > 0.0) {
      if (col + 2 > n) return out;
      Vec vr = vecs.col(j).real();
      Vec vi = vecs.col(j).imag();
      const double nv = std::sqrt(vr.squaredNorm() + vi.squaredNorm());
      V.col(col) = vr / nv;
      V.col(col + 1) = vi / nv;
      L(col, col) = lam(j).real();
      L(col, col + 1) = im;
      L(col + 1, col) = -im;
      L(col + 1, col + 1) = lam(j).real();
      col += 2;
    }
  }
  if (col != n) return out;

  Eigen::JacobiSVD<Mat> svd(V);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(n - 1);
  if (!(smin > 0.0) || smax / smin > kMaxModalCondition) return out;

  Eigen::PartialPivLU<Mat> lu(V);
  Mat Vinv = lu.inverse();
  const double recon = (V * L * Vinv - AK).norm();
  if (!(recon <= kRelTol * std::max(1.0, AK.norm()))) return out;

  const double c = 1.0 / std::sqrt(smax * smin);
  out.Q = c * Vinv;
  out.L = L;
  out.valid = true;
  return out;
}

Similarity schur_similarity(const Mat& AK) {
  Similarity out;
  Eigen::RealSchur<Mat> rs(AK, true);
  if (rs.info() != Eigen::Success) return out;
  out.Q = rs.matrixU().transpose();
  out.L = rs.matrixT();
  out.valid = true;
  return out;
}

// Empty string when every inequality holds, else a description of the first violation.
std::string first_violation(const Similarity& s, const Mat& K, const Mat& AK, double kappa,
                            double gamma) {
  std::ostringstream os;
  const Mat Qinv = s.Q.inverse();
  const double recon = (Qinv * s.L * s.Q - AK).norm();
  if (!(recon <= kRelTol * std::max(1.0, AK.norm()))) {
    os << "A - BK = Q^{-1} L Q fails (residual " << recon << ")";
    return os.str();
  }
  const double nL = norm2(s.L);
  if (!leq_tol(nL, 1.0 - gamma)) {
    os << "||L||_2 <= 1 - gamma fails (" << nL << " > " << 1.0 - gamma << ")";
    return os.str();
  }
  const double nQ = norm2(s.Q);
  if (!leq_tol(nQ, kappa)) {
    os << "||Q||_2 <= kappa fails (" << nQ << " > " << kappa << ")";
    return os.str();
  }
  const double nQi = norm2(Qinv);
  if (!leq_tol(nQi, kappa)) {
    os << "||Q^{-1}||_2 <= kappa fails (" << nQi << " > " << kappa << ")";
    return os.str();
  }
  const double nK = norm2(K);
  if (!leq_tol(nK, kappa)) {
    os << "||K||_2 <= kappa fails (" << nK << " > " << kappa << ")";
    return os.str();
  }
  return {};
}

Mat closed_loop(const Mat& A, const Mat& B, const Mat& K) {
  require(A.rows() == A.cols(), "A must be square");
  require(B.rows() == A.rows(), "B must have as many rows as A");
  require(K.rows() == B.cols() && K.cols() == A.cols(), "K must be m x n");
  if (!all_finite(A) || !all_finite(B) || !all_finite(K))
    throw InvalidArgument("non-finite entry in A, B or K");
  return A - B * K;
}

}  // namespace

void LinearSystem::validate() const {
  require(A.rows() >= 1 && A.rows() == A.cols(), "LinearSystem: A must be square with n >= 1");
  require(B.rows() == A.rows() && B.cols() >= 1, "LinearSystem: B must be n x m with m >= 1");
  require(std::isfinite(w_bar) && w_bar >= 0.0, "LinearSystem: w_bar must be finite and >= 0");
  require(all_finite(A) && all_finite(B), "LinearSystem: non-finite entry in A or B");
}

void ConstraintSpec::validate(int n, int m) const {
  require(Dx.cols() == n && dx.size() == Dx.rows(), "ConstraintSpec: Dx/dx shape mismatch");
  require(Du.cols() == m && du.size() == Du.rows(), "ConstraintSpec: Du/du shape mismatch");
  require(all_finite(Dx) && all_finite(dx) && all_finite(Du) && all_finite(du),
          "ConstraintSpec: non-finite entry");
  require((dx.array() > 0.0).all(), "ConstraintSpec: origin must be strictly inside Dx x <= dx");
  require((du.array() > 0.0).all(), "ConstraintSpec: origin must be strictly inside Du u <= du");
}

StableGain certify_strong_stability(const Mat& A, const Mat& B, const Mat& K, double kappa,
                                    double gamma) {
  require(std::isfinite(kappa) && kappa >= 1.0, "certify_strong_stability: kappa must be >= 1");
  require(std::isfinite(gamma) && gamma > 0.0 && gamma <= 1.0,
          "certify_strong_stability: gamma must lie in (0, 1]");
  const Mat AK = closed_loop(A, B, K);
  const double rho = spectral_radius(AK);
  if (!(rho < 1.0)) {
    std::ostringstream os;
    os << "spectral radius of A - BK is " << rho << " >= 1";
    throw CertificationFailure(os.str());
  }

  std::string modal_reason = "eigenvector basis is numerically singular";
  Similarity modal = modal_similarity(AK);
  if (modal.valid) {
    modal_reason = first_violation(modal, K, AK, kappa, gamma);
    if (modal_reason.empty()) return StableGain{K, kappa, gamma, modal.Q, modal.L};
  }
  Similarity schur = schur_similarity(AK);
  if (schur.valid) {
    const std::string reason = first_violation(schur, K, AK, kappa, gamma);
    if (reason.empty()) return StableGain{K, kappa, gamma, schur.Q, schur.L};
    if (!modal.valid) modal_reason = reason;
  }
  throw CertificationFailure("strong stability not certified: " + modal_reason);
}

StableGain certify_tightest(const Mat& A, const Mat& B, const Mat& K) {
  const Mat AK = closed_loop(A, B, K);
  const double rho = spectral_radius(AK);
  if (!(rho < 1.0)) {
    std::ostringstream os;
    os << "spectral radius of A - BK is " << rho << " >= 1";
    throw CertificationFailure(os.str());
  }
  Similarity s = modal_similarity(AK);
  if (!s.valid || !(norm2(s.L) < 1.0)) s = schur_similarity(AK);
  const double nL = norm2(s.L);
  if (!(nL < 1.0))
    throw CertificationFailure("no similarity with ||L||_2 < 1 found for A - BK");
  const double kappa =
      std::max({1.0, norm2(s.Q), norm2(Mat(s.Q.inverse())), norm2(K)});
  const double gamma = std::min(1.0, 1.0 - nL);
  return certify_strong_stability(A, B, K, kappa, gamma);
}

Mat closed_loop_power(const StableGain& gain, const Mat& A, const Mat& B, int k) {
  return matrix_power(closed_loop(A, B, gain.K), k);
}

double kappa_B(const LinearSystem& sys) { return std::max(norm2(sys.B), 1.0); }

Mat lqr_gain(const Mat& A, const Mat& B, const Mat& Qc, const Mat& Rc, int max_iter,
             double tol) {
  Mat P = Qc;
  for (int it = 0; it < max_iter; ++it) {
    const Mat S = Rc + B.transpose() * P * B;
    const Mat G = S.ldlt().solve(B.transpose() * P * A);
    Mat Pn = Qc + A.transpose() * P * A - A.transpose() * P * B * G;
    Pn = 0.5 * (Pn + Pn.transpose());
    const double diff = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (diff <= tol * std::max(1.0, P.cwiseAbs().maxCoeff())) break;
  }
  const Mat S = Rc + B.transpose() * P * B;
  return S.ldlt().solve(B.transpose() * P * A);
}

HvacRawMap hvac_raw_map(const HvacConfig& c) {
  require(c.upsilon > 0.0 && c.zeta > 0.0 && c.dt > 0.0, "HvacConfig: upsilon, zeta, dt must be > 0");
  HvacRawMap r{};
  r.a = 1.0 - c.dt / (c.upsilon * c.zeta);
  r.b = -c.dt / c.upsilon;
  r.c = c.dt * (c.theta_out / (c.upsilon * c.zeta) + c.pi_heat / c.upsilon);
  r.s = c.dt / c.upsilon;
  return r;
}

ProblemInstance build_hvac_instance(const HvacConfig& c) {
  require(c.w_min <= c.w_max, "HvacConfig: disturbance range is reversed");
  require(c.x_min < c.x_max && c.u_min < c.u_max, "HvacConfig: bounds are reversed");
  require(c.T >= 0, "HvacConfig: T must be >= 0");
  require(c.q > 0.0 && c.r_min > 0.0 && c.r_min <= c.r_max, "HvacConfig: cost weights must be positive");
  const HvacRawMap r = hvac_raw_map(c);
  const double w_center = 0.5 * (c.w_min + c.w_max);
  const double w_half = 0.5 * (c.w_max - c.w_min);
  const double u_eq = (c.theta_set * (1.0 - r.a) - r.c - r.s * w_center) / r.b;
  if (!(u_eq > c.u_min && u_eq < c.u_max)) {
    std::ostringstream os;
    os << "equilibrium action " << u_eq << " is not inside (" << c.u_min << ", " << c.u_max << ")";
    throw InvalidArgument(os.str());
  }
  if (!(c.theta_set > c.x_min && c.theta_set < c.x_max))
    throw InvalidArgument("setpoint is not strictly inside the state bounds");

  ProblemInstance inst;
  inst.name = "hvac";
  inst.system.A = Mat::Constant(1, 1, r.a);
  inst.system.B = Mat::Constant(1, 1, r.b);
  inst.system.w_bar = std::abs(r.s) * w_half;
  inst.constraints.Dx = (Mat(2, 1) << 1.0, -1.0).finished();
  inst.constraints.dx = (Vec(2) << c.x_max - c.theta_set, c.theta_set - c.x_min).finished();
  inst.constraints.Du = (Mat(2, 1) << 1.0, -1.0).finished();
  inst.constraints.du = (Vec(2) << c.u_max - u_eq, u_eq - c.u_min).finished();
  inst.T = c.T;
  inst.coordinate_shift = CoordinateShift{Vec::Constant(1, c.theta_set), Vec::Constant(1, u_eq)};
  inst.system.validate();
  inst.constraints.validate(1, 1);
  inst.base_gain =
      certify_tightest(inst.system.A, inst.system.B, Mat::Constant(1, 1, c.base_gain));
  return inst;
}

Vec to_physical_state(const ProblemInstance& inst, const Vec& x) {
  return inst.coordinate_shift ? Vec(x + inst.coordinate_shift->x_eq) : x;
}

Vec to_physical_action(const ProblemInstance& inst, const Vec& u) {
  return inst.coordinate_shift ? Vec(u + inst.coordinate_shift->u_eq) : u;
}

}  // namespace ogdbz
