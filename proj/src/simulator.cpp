#include "ogdbz/simulator.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

namespace ogdbz {

Vec LinearGainController::act(int, const Vec& x) { return -K_ * x; }

DacController::DacController(const LinearSystem& sys, Mat K, DacPolicy M)
    : sys_(&sys), K_(std::move(K)), M_(std::move(M)), hist_(std::max(1, M_.H), sys.n()) {
  M_.validate();
}

Vec DacController::act(int, const Vec& x) {
  x_ = x;
  u_ = control_action(x, M_, hist_, K_);
  return u_;
}

void DacController::observe(int, const Vec& x_next, const CostFunction&, StageRecord& rec) {
  hist_.push(x_next - sys_->A * x_ - sys_->B * u_);
  rec.M = M_;
}

Vec OgdBzController::act(int, const Vec& x) { return driver_.act(x); }

void OgdBzController::observe(int, const Vec& x_next, const CostFunction& cost, StageRecord& rec) {
  const StageRecord r = driver_.observe(x_next, cost);
  rec.M = r.M;
  rec.proj_infeasibility = r.proj_infeasibility;
  rec.proj_kkt = r.proj_kkt;
  rec.proj_path = r.proj_path;
  rec.motion = r.motion;
  rec.motion_ok = r.motion_ok;
}

RolloutTrace rollout(Controller& controller, const ProblemInstance& inst,
                     DisturbanceSource& disturbances, const CostStream& costs, int T) {
  require(T >= 0, "rollout: T must be >= 0");
  const LinearSystem& sys = inst.system;
  require(disturbances.n() == sys.n(), "rollout: disturbance dimension mismatch");
  RolloutTrace trace;
  trace.stages.reserve(static_cast<size_t>(T) + 1);
  Vec x = Vec::Zero(sys.n());
  for (int t = 0; t <= T; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const Vec u = controller.act(t, x);
    require(u.size() == sys.m(), "rollout: controller action has the wrong dimension");
    if (!all_finite(u)) throw Error("rollout: controller emitted a non-finite action");
    const Vec w = disturbances.next();
    Vec x_next = sys.A * x + sys.B * u + w;
    const CostFunction c = costs(t);
    StageRecord rec;
    rec.t = t;
    rec.x = x;
    rec.u = u;
    rec.w = x_next - sys.A * x - sys.B * u;
    rec.cost = c.c(x, u);
    controller.observe(t, x_next, c, rec);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trace.total_cost += rec.cost;
    if (!rec.motion_ok) ++trace.motion_flags;
    trace.stages.push_back(std::move(rec));
    x = std::move(x_next);
  }
  trace.final_state = x;
  return trace;
}

CostStream HvacCosts::stream() const {
  auto r_ptr = std::make_shared<const std::vector<double>>(r);
  const double qq = q;
  const double rmax = r_max;
  return [r_ptr, qq, rmax](int t) {
    require(t >= 0 && t < static_cast<int>(r_ptr->size()), "HVAC cost stream: t out of range");
    const double rt = (*r_ptr)[t];
    CostFunction f;
    f.c = [qq, rt](const Vec& x, const Vec& u) { return qq * x.squaredNorm() + rt * u.squaredNorm(); };
    f.grad_x = [qq](const Vec& x, const Vec&) -> Vec { return 2.0 * qq * x; };
    f.grad_u = [rt](const Vec&, const Vec& u) -> Vec { return 2.0 * rt * u; };
    f.G = 2.0 * std::max(qq, rmax);
    return f;
  };
}

HvacCosts hvac_costs(std::uint64_t seed, int T, double q, double r_lo, double r_hi) {
  require(T >= 0 && r_lo > 0.0 && r_hi >= r_lo && q > 0.0, "hvac_costs: bad arguments");
  HvacCosts c;
  c.q = q;
  c.r_max = r_hi;
  std::mt19937_64 rng(derive_seed(seed, kCostStream));
  std::uniform_real_distribution<double> U(r_lo, r_hi);
  c.r.resize(static_cast<size_t>(T) + 1);
  for (auto& v : c.r) v = U(rng);
  return c;
}

std::vector<Vec> uniform_disturbances(int n, double w_bar, std::uint64_t seed, int T) {
  DisturbanceSource src = DisturbanceSource::uniform(n, w_bar, seed);
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) out.push_back(src.next());
  return out;
}

SafetyReport audit_safety(const RolloutTrace& trace, const ConstraintSpec& spec, double epsilon,
                          const CoordinateShift* shift) {
  SafetyReport r;
  r.epsilon = epsilon;
  auto check = [&](const Mat& D, const Vec& d, const Vec& z, int t) {
    if (D.rows() == 0) return;
    const Vec excess = D * z - d;
    const double worst = excess.maxCoeff();
    r.worst_excess = std::max(r.worst_excess, worst);
    r.min_slack = std::min(r.min_slack, -worst);
    for (Eigen::Index i = 0; i < excess.size(); ++i)
      if (excess(i) > 0.0) {
        ++r.violations;
        if (r.first_violation < 0 || t < r.first_violation) r.first_violation = t;
      }
  };
  const auto xs = trace.states();
  for (size_t t = 0; t < xs.size(); ++t)
    check(spec.Dx, spec.dx, shift ? Vec(xs[t] + shift->x_eq) : xs[t], static_cast<int>(t));
  for (const auto& s : trace.stages)
    check(spec.Du, spec.du, shift ? Vec(s.u + shift->u_eq) : s.u, s.t);
  r.strictly_safe = r.min_slack >= epsilon;
  r.loosely_safe = r.worst_excess <= epsilon;
  return r;
}

ConstraintSpec physical_constraints(const ProblemInstance& inst) {
  ConstraintSpec c = inst.constraints;
  if (inst.coordinate_shift) {
    c.dx += c.Dx * inst.coordinate_shift->x_eq;
    c.du += c.Du * inst.coordinate_shift->u_eq;
  }
  return c;
}

std::vector<Mat> admissible_gains(const ProblemInstance& inst, const std::vector<Mat>& grid,
                                  double kappa, double gamma) {
  std::vector<Mat> out;
  for (const auto& K : grid) {
    try {
      certify_strong_stability(inst.system.A, inst.system.B, K, kappa, gamma);
    } catch (const CertificationFailure&) {
      continue;
    }
    if (linear_gain_margin(K, inst) >= 0.0) out.push_back(K);
  }
  return out;
}

std::vector<double> linear_stage_costs(const Mat& K, const ProblemInstance& inst,
                                       const std::vector<Vec>& ws, const CostStream& costs, int T) {
  require(static_cast<int>(ws.size()) >= T + 1, "linear_stage_costs: too few disturbances");
  const LinearSystem& sys = inst.system;
  std::vector<double> out(static_cast<size_t>(T) + 1);
  Vec x = Vec::Zero(sys.n());
  for (int t = 0; t <= T; ++t) {
    const Vec u = -K * x;
    out[t] = costs(t).c(x, u);
    x = sys.A * x + sys.B * u + ws[t];
  }
  return out;
}

LinearBenchmark best_linear_in_hindsight(const ProblemInstance& inst, const CostStream& costs,
                                         const std::vector<Vec>& ws, int T,
                                         const std::vector<Mat>& grid) {
  const std::vector<Mat> candidates =
      admissible_gains(inst, grid, inst.base_gain.kappa, inst.base_gain.gamma);
  if (candidates.empty())
    throw InfeasibleError("best_linear_in_hindsight: no admissible candidate gain");
  LinearBenchmark b;
  b.grid_size = static_cast<int>(grid.size());
  b.admissible = static_cast<int>(candidates.size());
  b.J = std::numeric_limits<double>::infinity();
  for (const auto& K : candidates) {
    auto sc = linear_stage_costs(K, inst, ws, costs, T);
    double J = 0.0;
    for (double c : sc) J += c;
    if (J < b.J) {
      b.J = J;
      b.K_star = K;
      b.stage_costs = std::move(sc);
    }
  }
  return b;
}

std::vector<Mat> default_gain_grid(const ProblemInstance& inst, int per_axis) {
  const int d = inst.system.m() * inst.system.n();
  require(d <= 4, "default_gain_grid: grid search needs m n <= 4");
  return gain_grid(inst.system.m(), inst.system.n(), inst.base_gain.kappa, per_axis);
}

std::vector<CostFunction> materialize(const CostStream& costs, int T) {
  std::vector<CostFunction> out;
  out.reserve(static_cast<size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) out.push_back(costs(t));
  return out;
}

double ring_objective(const DacPolicy& M, const ProblemInstance& inst, const std::vector<Vec>& ws,
                      const std::vector<CostFunction>& costs, DacPolicy* grad) {
  const int T = static_cast<int>(costs.size()) - 1;
  require(static_cast<int>(ws.size()) >= T, "ring_objective: too few disturbances");
  const ClosedLoop cl(inst.system, inst.base_gain, M.H);
  DisturbanceHistory hist(2 * M.H, inst.system.n());
  if (grad) *grad = DacPolicy::zeros(M.H, M.m(), M.n());
  double total = 0.0;
  for (int t = 0; t <= T; ++t) {
    total += ring_f(M, costs[t], hist, cl);
    if (grad) *grad += grad_ring_f(M, costs[t], hist, cl);
    if (t < T) hist.push(ws[t]);
  }
  return total;
}

FixedPolicyBenchmark best_fixed_policy_in_hindsight(const LiftedPolytope& poly,
                                                    const ProblemInstance& inst,
                                                    const std::vector<CostFunction>& costs,
                                                    const std::vector<Vec>& ws, double tol,
                                                    int max_iter) {
  const NonemptyResult start = solve_feasibility_lp(poly);
  OmegaProjector proj(poly);
  FixedPolicyBenchmark out;
  DacPolicy M = start.witness;
  DacPolicy g;
  double F = ring_objective(M, inst, ws, costs, &g);
  double L = 1.0;  // inverse stepsize, adapted by backtracking
  for (int it = 0; it < max_iter; ++it) {
    DacPolicy next;
    double Fn = 0.0;
    for (int bt = 0; bt < 80; ++bt) {
      next = proj.project(M - (1.0 / L) * g).M;
      const DacPolicy d = next - M;
      Fn = ring_objective(next, inst, ws, costs);
      double lin = 0.0;
      for (int i = 0; i < M.H; ++i) lin += (g.mats[i].array() * d.mats[i].array()).sum();
      const double dn = d.frobenius_norm();
      if (Fn <= F + lin + 0.5 * L * dn * dn + 1e-12 * std::abs(F)) break;
      L *= 2.0;
    }
    out.last_step = (next - M).frobenius_norm();
    out.iterations = it + 1;
    M = std::move(next);
    F = ring_objective(M, inst, ws, costs, &g);
    if (out.last_step <= tol) {
      out.M_star = M;
      out.objective = F;
      return out;
    }
    L = std::max(1e-12, 0.7 * L);
  }
  throw SolverError("best_fixed_policy_in_hindsight: iteration cap reached");
}

RegretReport regret_report(const std::vector<double>& alg, const std::vector<double>& bench,
                           std::string benchmark) {
  require(alg.size() == bench.size(), "regret_report: horizons differ");
  RegretReport r;
  r.benchmark = std::move(benchmark);
  r.averaged.resize(alg.size());
  double cum = 0.0;
  for (size_t t = 0; t < alg.size(); ++t) {
    r.J_alg += alg[t];
    r.J_bench += bench[t];
    cum += alg[t] - bench[t];
    r.averaged[t] = cum / static_cast<double>(t + 1);
  }
  r.regret = r.J_alg - r.J_bench;
  return r;
}

std::vector<double> stage_costs(const RolloutTrace& trace) {
  std::vector<double> out;
  out.reserve(trace.stages.size());
  for (const auto& s : trace.stages) out.push_back(s.cost);
  return out;
}

Band band(const std::vector<std::vector<double>>& series) {
  Band b;
  if (series.empty()) return b;
  const size_t n = series.front().size();
  b.mean.assign(n, 0.0);
  b.lo.assign(n, std::numeric_limits<double>::infinity());
  b.hi.assign(n, -std::numeric_limits<double>::infinity());
  for (const auto& s : series) {
    require(s.size() == n, "band: series lengths differ");
    for (size_t t = 0; t < n; ++t) {
      b.mean[t] += s[t];
      b.lo[t] = std::min(b.lo[t], s[t]);
      b.hi[t] = std::max(b.hi[t], s[t]);
    }
  }
  for (auto& v : b.mean) v /= static_cast<double>(series.size());
  return b;
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, count);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (error) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace ogdbz
