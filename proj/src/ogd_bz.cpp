#include "ogdbz/ogd_bz.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace ogdbz {

CostFunction quadratic_cost(const Mat& Q, const Mat& R) {
  require(Q.rows() == Q.cols() && R.rows() == R.cols(), "quadratic_cost: Q and R must be square");
  CostFunction f;
  f.c = [Q, R](const Vec& x, const Vec& u) { return x.dot(Q * x) + u.dot(R * u); };
  f.grad_x = [Q](const Vec& x, const Vec&) -> Vec { return (Q + Q.transpose()) * x; };
  f.grad_u = [R](const Vec&, const Vec& u) -> Vec { return (R + R.transpose()) * u; };
  f.G = 2.0 * std::max(norm2(Q), norm2(R));
  return f;
}

const char* to_string(StepSchedule::Kind k) {
  switch (k) {
    case StepSchedule::Kind::constant: return "constant";
    case StepSchedule::Kind::floored_inv_sqrt: return "floored_inv_sqrt";
    case StepSchedule::Kind::inv_sqrt: return "inv_sqrt";
  }
  return "unknown";
}

double StepSchedule::eta(int t) const {
  switch (kind) {
    case Kind::constant: return eta0;
    case Kind::floored_inv_sqrt: return eta0 / std::sqrt(static_cast<double>(std::max(t + 1, floor)));
    case Kind::inv_sqrt: return eta0 / std::sqrt(static_cast<double>(t + 1));
  }
  return eta0;
}

double StepSchedule::max_eta(int T) const {
  // Every schedule here is nonincreasing in t.
  (void)T;
  return eta(0);
}

const char* to_string(SelectionMode m) {
  return m == SelectionMode::theorem1 ? "theorem1" : "corollary2";
}

OgdBzParams make_params(const ProblemInstance& inst, int H, double epsilon,
                        const StepSchedule& schedule, int T, double G,
                        std::optional<double> eps_star, double gf_constant) {
  require(T >= 0, "make_params: T must be >= 0");
  require(std::isfinite(epsilon), "make_params: epsilon must be finite");
  OgdBzParams p;
  p.H = H;
  p.epsilon = epsilon;
  p.schedule = schedule;
  p.T = T;
  p.eps_star = eps_star;
  p.buffers = compute_buffers_unchecked(inst, H, schedule.max_eta(T), G, gf_constant);
  p.buffers.epsilon = epsilon;
  const BufferParams& b = p.buffers;
  p.horizon_condition = H >= b.h_threshold - 1e-12;
  p.safety_condition = epsilon >= b.eps1 + b.eps2;
  p.nonempty_condition = eps_star.has_value() && epsilon <= *eps_star - b.eps1 - b.eps3;
  p.eps2_extrapolated = !schedule.is_constant();
  return p;
}

namespace {

int horizon_from(double c, double n, double m, int T, double eps_star, double gamma) {
  if (gamma >= 1.0) return 1;
  const double arg = 8.0 * c * n * std::sqrt(m) * T / eps_star;
  if (!(arg > 1.0)) return 1;
  const double h = std::ceil(std::log(arg) / std::log(1.0 / (1.0 - gamma)));
  require(h < 1e6, "select_parameters: required H exceeds 1e6");
  return static_cast<int>(h);
}

std::string describe(const OgdBzParams& p) {
  std::ostringstream os;
  os << "H = " << p.H << ", eta = " << p.buffers.eta << ", epsilon = " << p.epsilon
     << ", eps1 = " << p.buffers.eps1 << ", eps2 = " << p.buffers.eps2
     << ", eps3 = " << p.buffers.eps3;
  if (p.eps_star) os << ", eps_star = " << *p.eps_star;
  return os.str();
}

}  // namespace

OgdBzParams select_parameters(const ProblemInstance& inst, int T, double eps_star,
                              SelectionMode mode, double G, double gf_constant) {
  if (!(eps_star > 0.0))
    throw InvalidArgument("select_parameters: eps_star must be > 0 (no strictly safe linear gain)");
  require(T >= 1, "select_parameters: T must be >= 1");
  const double n = inst.system.n(), m = inst.system.m();
  const double kappa = inst.base_gain.kappa, gamma = inst.base_gain.gamma;
  const int h_min = std::max(1, static_cast<int>(std::ceil(horizon_threshold(kappa, gamma) - 1e-12)));
  const double sqrtm = std::sqrt(m);

  OgdBzParams p;
  if (mode == SelectionMode::theorem1) {
    const BufferParams probe = compute_buffers_unchecked(inst, h_min, 0.0, G, gf_constant);
    const int H = std::max(h_min, horizon_from(probe.c1 + probe.c3, n, m, T, eps_star, gamma));
    const double c2 = compute_buffers_unchecked(inst, H, 0.0, G, gf_constant).c2;
    // With c2 = 0 the stepsize bound is vacuous; the corollary2 rate is used instead.
    const double eta = c2 > 0.0 ? eps_star / (8.0 * c2 * n * n * sqrtm * H * H)
                                : 1.0 / (n * n * sqrtm * H * std::sqrt(static_cast<double>(T)));
    p = make_params(inst, H, 0.5 * eps_star, StepSchedule::constant(eta), T, G, eps_star, gf_constant);
  } else {
    int H = h_min;
    for (int iter = 0;; ++iter) {
      require(iter < 200, "select_parameters: horizon iteration did not settle");
      const BufferParams b = compute_buffers_unchecked(inst, H, 0.0, G, gf_constant);
      const int next = std::max(h_min, horizon_from(b.c1 + b.c2, n, m, T, eps_star, gamma));
      if (next <= H) break;
      H = next;
    }
    const double eta = 1.0 / (n * n * sqrtm * H * std::sqrt(static_cast<double>(T)));
    const BufferParams b = compute_buffers_unchecked(inst, H, eta, G, gf_constant);
    p = make_params(inst, H, b.eps1 + b.eps2, StepSchedule::constant(eta), T, G, eps_star, gf_constant);
  }
  if (!p.nonempty_condition)
    throw InfeasibleError("condition ε ≤ ε★ − ε₁ − ε₃ fails (" + describe(p) + ")");
  if (!p.safety_condition)
    throw InfeasibleError("condition ε ≥ ε₁ + ε₂ fails (" + describe(p) + ")");
  return p;
}

namespace {

struct RingState {
  Vec x, u;
};

RingState ring_state(const DacPolicy& policy, const DisturbanceHistory& hist, const ClosedLoop& cl) {
  const int H = policy.H;
  require(hist.depth() >= 2 * H, "ring state: history depth must be >= 2H");
  const PhiTable tab = ring_phi(policy, cl);
  RingState s{Vec::Zero(cl.n()), Vec::Zero(cl.m())};
  for (int k = 1; k <= 2 * H; ++k) {
    s.x.noalias() += tab.phi_x[k - 1] * hist.lag(k);
    s.u.noalias() += tab.phi_u[k - 1] * hist.lag(k);
  }
  return s;
}

}  // namespace

double ring_f(const DacPolicy& policy, const CostFunction& cost, const DisturbanceHistory& hist,
              const ClosedLoop& cl) {
  const RingState s = ring_state(policy, hist, cl);
  return cost.c(s.x, s.u);
}

DacPolicy grad_ring_f(const DacPolicy& policy, const CostFunction& cost,
                      const DisturbanceHistory& hist, const ClosedLoop& cl) {
  const int H = policy.H;
  const RingState s = ring_state(policy, hist, cl);
  const Vec gx = cost.grad_x(s.x, s.u);
  const Vec gu = cost.grad_u(s.x, s.u);
  if (!all_finite(gx) || !all_finite(gu)) throw Error("grad_ring_f: cost gradient is not finite");
  // Through x~ = sum_{i,j} A_K^{i-1} B M^[j] w_{t-i-j} and u~ = -K x~ + sum_j M^[j] w_{t-j}.
  const Vec gt = gx - cl.K().transpose() * gu;
  std::vector<Vec> v(H);
  for (int i = 1; i <= H; ++i) v[i - 1] = cl.power_B(i - 1).transpose() * gt;
  DacPolicy g = DacPolicy::zeros(H, cl.m(), cl.n());
  for (int j = 1; j <= H; ++j) {
    Mat& Gj = g.mats[j - 1];
    Gj.noalias() = gu * hist.lag(j).transpose();
    for (int i = 1; i <= H; ++i) Gj.noalias() += v[i - 1] * hist.lag(i + j).transpose();
  }
  return g;
}

double RolloutTrace::replay_error(const LinearSystem& sys) const {
  double err = 0.0;
  for (size_t t = 0; t < stages.size(); ++t) {
    const Vec& next = t + 1 < stages.size() ? stages[t + 1].x : final_state;
    const Vec w = next - sys.A * stages[t].x - sys.B * stages[t].u;
    err = std::max(err, (w - stages[t].w).cwiseAbs().maxCoeff());
  }
  return err;
}

std::vector<DacPolicy> RolloutTrace::policies() const {
  std::vector<DacPolicy> out;
  out.reserve(stages.size());
  for (const auto& s : stages) out.push_back(s.M);
  return out;
}

std::vector<Vec> RolloutTrace::states() const {
  std::vector<Vec> out;
  out.reserve(stages.size() + 1);
  for (const auto& s : stages) out.push_back(s.x);
  if (final_state.size()) out.push_back(final_state);
  return out;
}

OgdBzDriver::OgdBzDriver(const ProblemInstance& inst, const OgdBzParams& params, DacPolicy M0,
                         LiftedPolytope poly)
    : inst_(&inst),
      params_(params),
      cl_(inst.system, inst.base_gain, params.H),
      hist_(2 * params.H, inst.system.n()),
      proj_(std::move(poly)),
      M_(std::move(M0)) {
  M_.validate();
  require(M_.H == params.H && M_.m() == inst.system.m() && M_.n() == inst.system.n(),
          "OgdBzDriver: initial policy shape mismatch");
}

Vec OgdBzDriver::act(const Vec& x) {
  require(!acted_, "OgdBzDriver::act called twice without observe");
  x_ = x;
  u_ = control_action(x, M_, hist_, inst_->base_gain.K);
  if (!all_finite(u_)) throw Error("OgdBzDriver: non-finite action");
  acted_ = true;
  return u_;
}

StageRecord OgdBzDriver::observe(const Vec& x_next, const CostFunction& cost) {
  require(acted_, "OgdBzDriver::observe called before act");
  const LinearSystem& sys = inst_->system;
  StageRecord r;
  r.t = t_;
  r.x = x_;
  r.u = u_;
  r.w = x_next - sys.A * x_ - sys.B * u_;
  r.M = M_;
  r.cost = cost.c(x_, u_);
  const double eta = params_.schedule.eta(t_);
  DacPolicy target = M_;
  if (eta != 0.0) target -= eta * grad_ring_f(M_, cost, hist_, cl_);
  const ProjectionResult pr = proj_.project(target);
  r.proj_infeasibility = pr.kkt.primal_infeasibility;
  r.proj_kkt = pr.kkt.worst_kkt();
  r.proj_path = pr.path;
  r.motion = (pr.M - M_).frobenius_norm();
  r.motion_ok = r.motion <= eta * params_.buffers.Gf * (1.0 + 1e-12) + 1e-15;
  M_ = pr.M;
  hist_.push(r.w);
  ++t_;
  acted_ = false;
  return r;
}

OgdBzSetup prepare_ogd_bz(const ProblemInstance& inst, const OgdBzParams& params) {
  OgdBzSetup s{build_lifted_polytope(inst, params.H, params.epsilon), {}};
  try {
    s.feasibility = solve_feasibility_lp(s.poly);
  } catch (const InfeasibleError& e) {
    std::ostringstream os;
    os << e.what() << "; condition ε ≤ ε★ − ε₁ − ε₃ ";
    if (params.eps_star)
      os << (params.nonempty_condition ? "holds" : "fails") << " (" << describe(params) << ")";
    else
      os << "cannot be checked without eps_star (" << describe(params) << ")";
    throw InfeasibleError(os.str());
  }
  return s;
}

DacPolicy initial_policy(const OgdBzSetup& setup) {
  const LiftedLayout& L = setup.poly.layout;
  DacPolicy zero = DacPolicy::zeros(L.H, L.m, L.n);
  return setup.poly.worst_slack(zero.flatten()) >= 0.0 ? zero : setup.feasibility.witness;
}

RolloutTrace run_ogd_bz(const ProblemInstance& inst, const OgdBzParams& params,
                        const OgdBzSetup& setup, const CostStream& costs,
                        DisturbanceSource& disturbances, const RunOptions& opts) {
  const LinearSystem& sys = inst.system;
  require(disturbances.n() == sys.n(), "run_ogd_bz: disturbance dimension mismatch");
  DacPolicy M0 = opts.M0 ? *opts.M0 : initial_policy(setup);
  require(setup.poly.worst_slack(M0.flatten()) >= -1e-9, "run_ogd_bz: M0 is outside Omega_epsilon");
  OgdBzDriver driver(inst, params, std::move(M0), setup.poly);
  RolloutTrace trace;
  trace.stages.reserve(static_cast<size_t>(params.T) + 1);
  Vec x = Vec::Zero(sys.n());
  for (int t = 0; t <= params.T; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const Vec u = driver.act(x);
    const Vec w = disturbances.next();
    Vec x_next = sys.A * x + sys.B * u + w;
    StageRecord rec = driver.observe(x_next, costs(t));
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!opts.record_policies) rec.M = DacPolicy{};
    trace.total_cost += rec.cost;
    if (!rec.motion_ok) ++trace.motion_flags;
    trace.stages.push_back(std::move(rec));
    x = std::move(x_next);
  }
  trace.final_state = x;
  return trace;
}

RolloutTrace run_ogd_bz(const ProblemInstance& inst, const OgdBzParams& params,
                        const CostStream& costs, DisturbanceSource& disturbances) {
  const OgdBzSetup setup = prepare_ogd_bz(inst, params);
  return run_ogd_bz(inst, params, setup, costs, disturbances);
}

}  // namespace ogdbz
