#include "ogdbz/constraints.hpp"

#include <cmath>
#include <sstream>

namespace ogdbz {

double horizon_threshold(double kappa, double gamma) {
  if (gamma >= 1.0) return 0.0;
  return std::log(2.0 * kappa * kappa) / std::log(1.0 / (1.0 - gamma));
}

BufferParams compute_buffers(const ProblemInstance& inst, int H, double eta, double G,
                             double gf_constant) {
  const double thr = horizon_threshold(inst.base_gain.kappa, inst.base_gain.gamma);
  if (H < thr - 1e-12) {
    std::ostringstream os;
    os << "H = " << H << " is below log(2 kappa^2)/log(1/(1-gamma)) = " << thr;
    throw InvalidArgument(os.str());
  }
  return compute_buffers_unchecked(inst, H, eta, G, gf_constant);
}

BufferParams compute_buffers_unchecked(const ProblemInstance& inst, int H, double eta, double G,
                                       double gf_constant) {
  require(H >= 1, "compute_buffers: H must be >= 1");
  require(eta >= 0.0 && std::isfinite(eta), "compute_buffers: eta must be finite and >= 0");
  require(G >= 0.0 && std::isfinite(G), "compute_buffers: G must be finite and >= 0");
  const double kappa = inst.base_gain.kappa;
  const double gamma = inst.base_gain.gamma;
  BufferParams p;
  p.H = H;
  p.eta = eta;
  p.G = G;
  p.gf_constant = gf_constant;
  p.h_threshold = horizon_threshold(kappa, gamma);
  const double n = inst.system.n();
  const double m = inst.system.m();
  const double wb = inst.system.w_bar;
  const double kB = kappa_B(inst.system);
  const double maxD = std::max(norm_inf(inst.constraints.Dx), norm_inf(inst.constraints.Du));
  const double rH = std::pow(1.0 - gamma, H);
  const double k2 = kappa * kappa, k3 = k2 * kappa, k5 = k3 * k2, k9 = k5 * k3 * kappa;
  p.kappa_B = kB;
  p.max_D_inf = maxD;
  p.phi = 2.0 * k5 * kB * std::sqrt(m * n);
  const double contraction = 1.0 - k2 * rH;
  p.b = contraction > 0.0 ? kappa * std::sqrt(n) * wb * (k2 + p.phi * H) / (contraction * gamma) +
                                2.0 * std::sqrt(m * n) * k3 * wb / gamma
                          : std::numeric_limits<double>::infinity();
  p.c1 = 8.0 * wb * k9 * kB * maxD / gamma;
  p.eps1 = p.c1 * n * std::sqrt(m) * H * rH;
  p.Lg = wb * std::sqrt(n) * maxD * k3 * kB * std::sqrt(static_cast<double>(H));
  p.Gf = gf_constant * G * p.b * (1.0 + kappa) * std::sqrt(n) * wb * k2 * kB *
         std::sqrt(static_cast<double>(H)) * (1.0 + gamma) / gamma;
  p.eps2 = p.Lg * eta * p.Gf / (gamma * gamma);
  p.c2 = p.Lg * p.Gf / (gamma * gamma * n * n * std::sqrt(m) * H * H);
  p.c3 = maxD * 2.0 * k5 * wb / gamma;
  p.eps3 = p.c3 * std::sqrt(n) * rH;
  return p;
}

namespace {

int resolve_lag(int max_lag, int H) {
  if (max_lag < 0) return 2 * H;
  require(max_lag <= 2 * H, "max_lag must not exceed 2H");
  return max_lag;
}

}  // namespace

double g_x(int i, const std::vector<DacPolicy>& ws, const ClosedLoop& cl, const Mat& Dx,
           double w_bar, int max_lag) {
  require(!ws.empty(), "g_x: empty window");
  require(i >= 0 && i < Dx.rows(), "g_x: row index out of range");
  const int L = resolve_lag(max_lag, ws.front().H);
  double s = 0.0;
  for (int k = 1; k <= L; ++k) s += (Dx.row(i) * phi_x(k, ws, cl)).cwiseAbs().sum();
  return s * w_bar;
}

double g_u(int j, const PolicyWindow& window, const ClosedLoop& cl, const Mat& Du,
           double w_bar, int max_lag) {
  require(!window.empty(), "g_u: empty window");
  require(j >= 0 && j < Du.rows(), "g_u: row index out of range");
  const int L = resolve_lag(max_lag, window.front().H);
  double s = 0.0;
  for (int k = 1; k <= L; ++k) s += (Du.row(j) * phi_u(k, window, cl)).cwiseAbs().sum();
  return s * w_bar;
}

double ring_g_x(int i, const DacPolicy& policy, const ClosedLoop& cl, const Mat& Dx,
                double w_bar) {
  std::vector<DacPolicy> ws(static_cast<size_t>(policy.H), policy);
  return g_x(i, ws, cl, Dx, w_bar);
}

double ring_g_u(int j, const DacPolicy& policy, const ClosedLoop& cl, const Mat& Du,
                double w_bar) {
  PolicyWindow w(static_cast<size_t>(policy.H) + 1, policy);
  return g_u(j, w, cl, Du, w_bar);
}

double LiftedPolytope::group_value(const AbsGroup& g, const Vec& m) const {
  return g.weight * (g.A * m + g.b).cwiseAbs().sum();
}

double LiftedPolytope::worst_slack(const Vec& m) const {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& g : groups) worst = std::min(worst, group_rhs(g) - group_value(g, m));
  return worst;
}

bool LiftedPolytope::contains(const DacPolicy& p, double tol) const {
  return worst_slack(p.flatten()) >= -tol;
}

int LiftedPolytope::term_var(const AbsGroup& g, int t) const {
  if (g.kind == GroupKind::policy) return layout.z(g.index / layout.m + 1, g.index % layout.m, t);
  return g.var_offset + t;
}

Vec LiftedPolytope::lift(const DacPolicy& p) const {
  Vec v = Vec::Zero(layout.dim);
  const Vec m = p.flatten();
  require(m.size() == layout.n_M, "LiftedPolytope::lift: policy dimension mismatch");
  v.segment(layout.off_M, layout.n_M) = m;
  for (const auto& g : groups) {
    const Vec a = (g.A * m + g.b).cwiseAbs();
    for (Eigen::Index t = 0; t < a.size(); ++t) v(term_var(g, static_cast<int>(t))) = a(t);
  }
  return v;
}

DacPolicy LiftedPolytope::policy_block(const Vec& v) const {
  require(v.size() == layout.dim, "LiftedPolytope::policy_block: dimension mismatch");
  return DacPolicy::unflatten(v.segment(layout.off_M, layout.n_M), layout.H, layout.m, layout.n);
}

LiftedPolytope LiftedPolytope::with_epsilon(double eps) const {
  LiftedPolytope out = *this;
  out.epsilon = eps;
  for (const auto& g : out.groups) out.h(g.sum_row) = out.group_rhs(g);
  return out;
}

LiftedPolytope build_lifted_polytope(const ProblemInstance& inst, int H, double epsilon) {
  require(H >= 1, "build_lifted_polytope: H must be >= 1");
  inst.system.validate();
  const int n = inst.system.n(), m = inst.system.m();
  inst.constraints.validate(n, m);
  const ClosedLoop cl(inst.system, inst.base_gain, H);
  const Mat& Dx = inst.constraints.Dx;
  const Mat& Du = inst.constraints.Du;

  LiftedPolytope P;
  P.epsilon = epsilon;
  P.kappa = inst.base_gain.kappa;
  P.gamma = inst.base_gain.gamma;
  P.w_bar = inst.system.w_bar;
  LiftedLayout& L = P.layout;
  L.H = H;
  L.m = m;
  L.n = n;
  L.kx = inst.constraints.kx();
  L.ku = inst.constraints.ku();
  L.n_M = H * m * n;
  L.off_Yx = L.n_M;
  L.n_Yx = L.kx * 2 * H * n;
  L.off_Yu = L.off_Yx + L.n_Yx;
  L.n_Yu = L.ku * 2 * H * n;
  L.off_Z = L.off_Yu + L.n_Yu;
  L.n_Z = H * m * n;
  L.dim = L.off_Z + L.n_Z;
  const int n_sum = L.kx + L.ku + H * m;
  L.rows = n_sum + 2 * (L.n_Yx + L.n_Yu + L.n_Z);
  const int mn = m * n;

  // Affine map M -> D' Phi_k^x(M) (row form), shared by state and action groups.
  auto add_state_terms = [&](const Eigen::RowVectorXd& d, Mat& A, Vec& b) {
    for (int k = 1; k <= 2 * H; ++k) {
      const Eigen::RowVectorXd free_term =
          (k <= H) ? Eigen::RowVectorXd(d * cl.power(k - 1)) : Eigen::RowVectorXd::Zero(n);
      for (int l = 0; l < n; ++l) {
        const int t = (k - 1) * n + l;
        b(t) += free_term(l);
        for (int j = std::max(1, k - H); j <= std::min(H, k - 1); ++j) {
          const Eigen::RowVectorXd c = d * cl.power_B(k - j - 1);
          for (int p = 0; p < m; ++p) A(t, (j - 1) * mn + l * m + p) += c(p);
        }
      }
    }
  };

  int sum_row = 0;
  int abs_row = n_sum;
  for (int i = 0; i < L.kx; ++i) {
    AbsGroup g;
    g.kind = GroupKind::state;
    g.index = i;
    g.A = Mat::Zero(2 * H * n, L.n_M);
    g.b = Vec::Zero(2 * H * n);
    add_state_terms(Dx.row(i), g.A, g.b);
    g.weight = inst.system.w_bar;
    g.base_rhs = inst.constraints.dx(i);
    g.buffered = true;
    g.var_offset = L.yx(i, 1, 0);
    g.sum_row = sum_row++;
    g.abs_row = abs_row;
    abs_row += 2 * static_cast<int>(g.A.rows());
    P.groups.push_back(std::move(g));
  }
  for (int j = 0; j < L.ku; ++j) {
    AbsGroup g;
    g.kind = GroupKind::action;
    g.index = j;
    g.A = Mat::Zero(2 * H * n, L.n_M);
    g.b = Vec::Zero(2 * H * n);
    add_state_terms(Eigen::RowVectorXd(-Du.row(j) * inst.base_gain.K), g.A, g.b);
    for (int k = 1; k <= H; ++k)
      for (int l = 0; l < n; ++l)
        for (int p = 0; p < m; ++p) g.A((k - 1) * n + l, (k - 1) * mn + l * m + p) += Du(j, p);
    g.weight = inst.system.w_bar;
    g.base_rhs = inst.constraints.du(j);
    g.buffered = true;
    g.var_offset = L.yu(j, 1, 0);
    g.sum_row = sum_row++;
    g.abs_row = abs_row;
    abs_row += 2 * static_cast<int>(g.A.rows());
    P.groups.push_back(std::move(g));
  }
  // Policy-set rows follow the Y blocks in the abs-row order, matching the variable order.
  for (int i = 1; i <= H; ++i)
    for (int r = 0; r < m; ++r) {
      AbsGroup g;
      g.kind = GroupKind::policy;
      g.index = (i - 1) * m + r;
      g.A = Mat::Zero(n, L.n_M);
      g.b = Vec::Zero(n);
      for (int c = 0; c < n; ++c) g.A(c, (i - 1) * mn + c * m + r) = 1.0;
      g.weight = 1.0;
      g.base_rhs = m_set_bound(i, n, P.kappa, P.gamma);
      g.buffered = false;
      g.var_offset = -1;  // Z entries of one row are strided; see term_var
      g.sum_row = sum_row++;
      g.abs_row = abs_row;
      abs_row += 2 * n;
      P.groups.push_back(std::move(g));
    }

  std::vector<Eigen::Triplet<double>> trip;
  P.h = Vec::Zero(L.rows);
  for (const auto& g : P.groups) {
    const int terms = static_cast<int>(g.A.rows());
    for (int t = 0; t < terms; ++t) {
      const int var = P.term_var(g, t);
      if (g.weight != 0.0) trip.emplace_back(g.sum_row, var, g.weight);
      const int rp = g.abs_row + 2 * t, rm = rp + 1;
      for (int c = 0; c < L.n_M; ++c) {
        const double a = g.A(t, c);
        if (a != 0.0) {
          trip.emplace_back(rp, c, a);
          trip.emplace_back(rm, c, -a);
        }
      }
      trip.emplace_back(rp, var, -1.0);
      trip.emplace_back(rm, var, -1.0);
      P.h(rp) = -g.b(t);
      P.h(rm) = g.b(t);
    }
    P.h(g.sum_row) = P.group_rhs(g);
  }
  P.C.resize(L.rows, L.dim);
  P.C.setFromTriplets(trip.begin(), trip.end());
  P.C.makeCompressed();
  return P;
}

NonemptyResult check_nonempty(const LiftedPolytope& poly) {
  const SlackLpResult r = maximize_min_slack(poly.C, poly.h);
  NonemptyResult out;
  out.nonempty = r.feasible;
  out.max_min_slack = r.slack;
  out.degenerate = r.hit_cap;
  if (r.v.size() == poly.layout.dim) {
    out.lifted_witness = r.v;
    out.witness = poly.policy_block(r.v);
  }
  return out;
}

namespace {

// Bounds from a precomputed window table with lags limited to max_lag.
double table_g(const Eigen::RowVectorXd& d, const std::vector<Mat>& phis, int max_lag,
               double w_bar) {
  double s = 0.0;
  for (int k = 1; k <= max_lag; ++k) s += (d * phis[k - 1]).cwiseAbs().sum();
  return s * w_bar;
}

}  // namespace

MarginTrace worst_case_margins(const std::vector<DacPolicy>& policies,
                               const std::vector<Vec>* states, const ProblemInstance& inst,
                               double b_bound) {
  MarginTrace out;
  if (policies.empty()) return out;
  const int H = policies.front().H;
  const int T = static_cast<int>(policies.size()) - 1;
  if (states) require(static_cast<int>(states->size()) >= T + 1, "worst_case_margins: too few states");
  const ClosedLoop cl(inst.system, inst.base_gain, H);
  const Mat& Dx = inst.constraints.Dx;
  const Mat& Du = inst.constraints.Du;
  const Mat& K = inst.base_gain.K;
  const Mat DxAH = Dx * cl.power(H);
  const Mat DuKAH = Du * K * cl.power(H);
  Vec rx(Dx.rows()), ru(Du.rows());
  for (int i = 0; i < Dx.rows(); ++i) rx(i) = DxAH.row(i).norm();
  for (int j = 0; j < Du.rows(); ++j) ru(j) = DuKAH.row(j).norm();

  PolicyWindow window(static_cast<size_t>(H) + 1);
  for (int t = 0; t <= T; ++t) {
    for (int s = 0; s <= H; ++s) window[s] = policies[std::max(0, t - H + s)];
    const PhiTable tab = window_phi(window, cl);
    const int lag = std::min(t, 2 * H);
    double xnorm = 0.0;
    if (t - H >= 0) xnorm = states ? (*states)[t - H].norm() : b_bound;
    Vec mx(Dx.rows()), mu(Du.rows());
    for (int i = 0; i < Dx.rows(); ++i)
      mx(i) = rx(i) * xnorm + table_g(Dx.row(i), tab.phi_x, lag, inst.system.w_bar) -
              inst.constraints.dx(i);
    for (int j = 0; j < Du.rows(); ++j)
      mu(j) = ru(j) * xnorm + table_g(Du.row(j), tab.phi_u, lag, inst.system.w_bar) -
              inst.constraints.du(j);
    const double w = std::max(mx.size() ? mx.maxCoeff() : -INFINITY, mu.size() ? mu.maxCoeff() : -INFINITY);
    if (w > out.worst) {
      out.worst = w;
      out.worst_stage = t;
    }
    out.x_margin.push_back(std::move(mx));
    out.u_margin.push_back(std::move(mu));
  }
  return out;
}

double linear_gain_margin(const Mat& K, const ProblemInstance& inst) {
  const Mat AK = inst.system.A - inst.system.B * K;
  if (!(spectral_radius(AK) < 1.0)) return -std::numeric_limits<double>::infinity();
  const auto& cs = inst.constraints;
  Mat R(cs.kx() + cs.ku(), inst.system.n());
  R.topRows(cs.kx()) = cs.Dx;
  R.bottomRows(cs.ku()) = cs.Du * K;
  Vec d(cs.kc());
  d << cs.dx, cs.du;
  // The x rows bound D x_t; the u rows bound D (-K x_t) via |.| symmetry of the box set.
  Vec sup = Vec::Zero(cs.kc());
  const double scale = std::max(1.0, R.cwiseAbs().maxCoeff());
  for (int s = 0; s < 10000000; ++s) {
    sup += R.cwiseAbs().rowwise().sum();
    R = R * AK;
    if (R.cwiseAbs().maxCoeff() < 1e-18 * scale) break;
  }
  sup *= inst.system.w_bar;
  return (d - sup).minCoeff();
}

EpsStarResult epsilon_star_probe(const ProblemInstance& inst, const std::vector<Mat>& grid,
                                 double kappa, double gamma) {
  EpsStarResult out;
  out.eps_star = -std::numeric_limits<double>::infinity();
  out.candidates = static_cast<int>(grid.size());
  for (const auto& K : grid) {
    double margin = -std::numeric_limits<double>::infinity();
    try {
      certify_strong_stability(inst.system.A, inst.system.B, K, kappa, gamma);
      margin = linear_gain_margin(K, inst);
    } catch (const CertificationFailure&) {
    }
    out.margins.push_back(margin);
    if (margin >= 0.0) {
      ++out.admissible;
      if (margin > out.eps_star) {
        out.eps_star = margin;
        out.K_star = K;
      }
    }
  }
  if (out.admissible == 0)
    throw InfeasibleError("epsilon_star_probe: no candidate gain is strongly stable and safe");
  return out;
}

std::vector<Mat> gain_grid(int m, int n, double radius, int per_axis) {
  require(m >= 1 && n >= 1 && per_axis >= 1, "gain_grid: bad shape");
  const int d = m * n;
  std::vector<double> axis(per_axis);
  for (int k = 0; k < per_axis; ++k)
    axis[k] = per_axis == 1 ? 0.0 : -radius + 2.0 * radius * k / (per_axis - 1);
  std::vector<Mat> out;
  std::vector<int> idx(d, 0);
  while (true) {
    Mat K(m, n);
    for (int e = 0; e < d; ++e) K(e % m, e / m) = axis[idx[e]];
    out.push_back(std::move(K));
    int e = 0;
    while (e < d && ++idx[e] == per_axis) idx[e++] = 0;
    if (e == d) break;
  }
  return out;
}

}  // namespace ogdbz
