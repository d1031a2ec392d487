#include "ogdbz/dac_policy.hpp"

#include <cmath>
#include <limits>

namespace ogdbz {

DacPolicy DacPolicy::zeros(int H, int m, int n) {
  require(H >= 1 && m >= 1 && n >= 1, "DacPolicy::zeros: H, m, n must be >= 1");
  DacPolicy p;
  p.H = H;
  p.mats.assign(H, Mat::Zero(m, n));
  return p;
}

DacPolicy DacPolicy::unflatten(const Vec& v, int H, int m, int n) {
  require(v.size() == static_cast<Eigen::Index>(H) * m * n, "DacPolicy::unflatten: size mismatch");
  DacPolicy p = zeros(H, m, n);
  for (int i = 0; i < H; ++i)
    p.mats[i] = Eigen::Map<const Mat>(v.data() + static_cast<Eigen::Index>(i) * m * n, m, n);
  return p;
}

Vec DacPolicy::flatten() const {
  const Eigen::Index blk = static_cast<Eigen::Index>(m()) * n();
  Vec v(blk * H);
  for (int i = 0; i < H; ++i)
    Eigen::Map<Mat>(v.data() + i * blk, m(), n()) = mats[i];
  return v;
}

double DacPolicy::frobenius_norm() const {
  double s = 0.0;
  for (const auto& M : mats) s += M.squaredNorm();
  return std::sqrt(s);
}

void DacPolicy::validate() const {
  require(H >= 1 && static_cast<int>(mats.size()) == H, "DacPolicy: needs exactly H >= 1 blocks");
  for (const auto& M : mats) {
    require(M.rows() == mats.front().rows() && M.cols() == mats.front().cols(),
            "DacPolicy: blocks must share one shape");
    require(all_finite(M), "DacPolicy: non-finite entry");
  }
}

DacPolicy& DacPolicy::operator+=(const DacPolicy& o) {
  require(o.H == H, "DacPolicy: memory length mismatch");
  for (int i = 0; i < H; ++i) mats[i] += o.mats[i];
  return *this;
}

DacPolicy& DacPolicy::operator-=(const DacPolicy& o) {
  require(o.H == H, "DacPolicy: memory length mismatch");
  for (int i = 0; i < H; ++i) mats[i] -= o.mats[i];
  return *this;
}

DacPolicy& DacPolicy::operator*=(double s) {
  for (auto& M : mats) M *= s;
  return *this;
}

DacPolicy operator+(DacPolicy a, const DacPolicy& b) { return a += b; }
DacPolicy operator-(DacPolicy a, const DacPolicy& b) { return a -= b; }
DacPolicy operator*(double s, DacPolicy a) { return a *= s; }

ClosedLoop::ClosedLoop(const Mat& A, const Mat& B, const Mat& K, int depth)
    : A_(A), B_(B), K_(K) {
  require(A.rows() == A.cols() && B.rows() == A.rows(), "ClosedLoop: A, B shape mismatch");
  require(K.rows() == B.cols() && K.cols() == A.cols(), "ClosedLoop: K must be m x n");
  require(depth >= 1, "ClosedLoop: depth must be >= 1");
  const Mat AK = A - B * K;
  pow_.reserve(depth + 1);
  pow_B_.reserve(depth + 1);
  pow_.push_back(Mat::Identity(A.rows(), A.cols()));
  pow_B_.push_back(B);
  for (int j = 1; j <= depth; ++j) {
    pow_.push_back(AK * pow_.back());
    pow_B_.push_back(AK * pow_B_.back());
  }
}

ClosedLoop::ClosedLoop(const LinearSystem& sys, const StableGain& base, int H)
    : ClosedLoop(sys.A, sys.B, base.K, 2 * std::max(H, 1)) {}

const Mat& ClosedLoop::power(int j) const {
  require(j >= 0 && j <= depth(), "ClosedLoop::power: exponent out of cached range");
  return pow_[j];
}

const Mat& ClosedLoop::power_B(int j) const {
  require(j >= 0 && j <= depth(), "ClosedLoop::power_B: exponent out of cached range");
  return pow_B_[j];
}

DisturbanceHistory::DisturbanceHistory(int depth, int n)
    : depth_(depth), buf_(static_cast<size_t>(std::max(depth, 1)), Vec::Zero(n)) {
  require(depth >= 1 && n >= 1, "DisturbanceHistory: depth and n must be >= 1");
}

DisturbanceHistory::DisturbanceHistory(const std::vector<Vec>& lags, int depth, int n)
    : DisturbanceHistory(depth, n) {
  require(static_cast<int>(lags.size()) <= depth, "DisturbanceHistory: more lags than depth");
  for (int k = static_cast<int>(lags.size()); k >= 1; --k) {
    require(lags[k - 1].size() == n, "DisturbanceHistory: lag dimension mismatch");
    push(lags[k - 1]);
  }
}

void DisturbanceHistory::push(const Vec& w) {
  head_ = (head_ + 1) % depth_;
  buf_[head_] = w;
}

const Vec& DisturbanceHistory::lag(int k) const {
  require(k >= 1 && k <= depth_, "DisturbanceHistory::lag: lag out of range");
  return buf_[(head_ - (k - 1) + depth_ * 2) % depth_];
}

namespace {

void check_window_states(const std::vector<DacPolicy>& ws, const ClosedLoop& cl) {
  require(!ws.empty(), "window must not be empty");
  const int H = ws.front().H;
  require(static_cast<int>(ws.size()) == H, "window_states must hold exactly H policies");
  for (const auto& p : ws) {
    require(p.H == H, "window policies must share H");
    require(p.m() == cl.m() && p.n() == cl.n(), "policy shape does not match the system");
  }
  require(cl.depth() >= H, "ClosedLoop depth is smaller than H");
}

}  // namespace

Mat phi_x(int k, const std::vector<DacPolicy>& ws, const ClosedLoop& cl) {
  check_window_states(ws, cl);
  const int H = ws.front().H;
  require(k >= 1 && k <= 2 * H, "phi_x: k must lie in [1, 2H]");
  Mat out = (k <= H) ? cl.power(k - 1) : Mat::Zero(cl.n(), cl.n());
  const int i_lo = std::max(1, k - H);
  const int i_hi = std::min(H, k - 1);
  for (int i = i_lo; i <= i_hi; ++i) out.noalias() += cl.power_B(i - 1) * ws[H - i].mats[k - i - 1];
  return out;
}

Mat phi_u(int k, const PolicyWindow& window, const ClosedLoop& cl) {
  require(!window.empty(), "phi_u: empty window");
  const int H = window.front().H;
  require(static_cast<int>(window.size()) == H + 1, "phi_u: window must hold H + 1 policies");
  std::vector<DacPolicy> ws(window.begin(), window.end() - 1);
  Mat out = -cl.K() * phi_x(k, ws, cl);
  if (k <= H) out += window.back().mats[k - 1];
  return out;
}

PhiTable window_phi(const PolicyWindow& window, const ClosedLoop& cl) {
  require(!window.empty(), "window_phi: empty window");
  const int H = window.front().H;
  PhiTable t;
  std::vector<DacPolicy> ws(window.begin(), window.end() - 1);
  for (int k = 1; k <= 2 * H; ++k) {
    t.phi_x.push_back(phi_x(k, ws, cl));
    Mat u = -cl.K() * t.phi_x.back();
    if (k <= H) u += window.back().mats[k - 1];
    t.phi_u.push_back(std::move(u));
  }
  return t;
}

PhiTable ring_phi(const DacPolicy& policy, const ClosedLoop& cl) {
  PolicyWindow w(static_cast<size_t>(policy.H) + 1, policy);
  return window_phi(w, cl);
}

Vec approx_state(const std::vector<DacPolicy>& ws, const DisturbanceHistory& hist,
                 const ClosedLoop& cl) {
  check_window_states(ws, cl);
  const int H = ws.front().H;
  require(hist.depth() >= 2 * H, "approx_state: history depth must be >= 2H");
  Vec x = Vec::Zero(cl.n());
  for (int k = 1; k <= 2 * H; ++k) x.noalias() += phi_x(k, ws, cl) * hist.lag(k);
  return x;
}

Vec approx_action(const PolicyWindow& window, const DisturbanceHistory& hist,
                  const ClosedLoop& cl) {
  require(!window.empty(), "approx_action: empty window");
  const int H = window.front().H;
  require(static_cast<int>(window.size()) == H + 1, "approx_action: window must hold H + 1 policies");
  std::vector<DacPolicy> ws(window.begin(), window.end() - 1);
  Vec u = -cl.K() * approx_state(ws, hist, cl);
  for (int i = 1; i <= H; ++i) u.noalias() += window.back().mats[i - 1] * hist.lag(i);
  return u;
}

Vec control_action(const Vec& x, const DacPolicy& policy, const DisturbanceHistory& hist,
                   const Mat& K) {
  require(hist.depth() >= policy.H, "control_action: history depth must be >= H");
  Vec u = -K * x;
  for (int i = 1; i <= policy.H; ++i) u.noalias() += policy.mats[i - 1] * hist.lag(i);
  return u;
}

DacPolicy policy_from_gain(const StableGain& gain, const StableGain& base, const Mat& A,
                           const Mat& B, int H) {
  require(H >= 1, "policy_from_gain: H must be >= 1");
  require(gain.K.rows() == base.K.rows() && gain.K.cols() == base.K.cols(),
          "policy_from_gain: gain shapes differ");
  const Mat AK = A - B * gain.K;
  const Mat diff = base.K - gain.K;
  DacPolicy p = DacPolicy::zeros(H, static_cast<int>(B.cols()), static_cast<int>(A.rows()));
  Mat P = Mat::Identity(A.rows(), A.cols());
  for (int i = 1; i <= H; ++i) {
    p.mats[i - 1] = diff * P;
    P = AK * P;
  }
  return p;
}

double m_set_bound(int i, int n, double kappa, double gamma) {
  return 2.0 * std::sqrt(static_cast<double>(n)) * kappa * kappa * kappa *
         std::pow(1.0 - gamma, i - 1);
}

MSetReport in_M_set(const DacPolicy& policy, double kappa, double gamma, double tol) {
  MSetReport r;
  r.worst_slack = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= policy.H; ++i) {
    const double slack = m_set_bound(i, policy.n(), kappa, gamma) - norm_inf(policy.mats[i - 1]);
    if (slack < r.worst_slack) {
      r.worst_slack = slack;
      r.worst_index = i;
    }
  }
  r.inside = r.worst_slack >= -tol;
  return r;
}

}  // namespace ogdbz
