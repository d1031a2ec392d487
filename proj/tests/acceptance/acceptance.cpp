// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only when all pass.
// Usage: ogdbz_acceptance [criterion ...]   (default: 1-9)

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace ogdbz;
using namespace ogdbz::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

// HVAC run for one seed at (H, epsilon) with the preset schedule; disturbances and costs follow
// the CLI's seed streams.
struct HvacRun {
  RolloutTrace trace;
  std::vector<Vec> ws;
  CostStream costs;
};

HvacRun hvac_run(const ProblemInstance& inst, const OgdBzParams& p, const OgdBzSetup& setup, std::uint64_t seed) {
  HvacRun r;
  r.ws = uniform_disturbances(1, inst.system.w_bar, seed, p.T);
  r.costs = hvac_costs(seed, p.T).stream();
  DisturbanceSource d = DisturbanceSource::fixed(r.ws, inst.system.w_bar);
  r.trace = run_ogd_bz(inst, p, setup, r.costs, d);
  return r;
}

double hvac_eps_star(const ProblemInstance& inst) {
  return epsilon_star_probe(inst, default_gain_grid(inst), inst.base_gain.kappa, inst.base_gain.gamma).eps_star;
}

Outcome criterion1() {
  Rng rng(1001);
  double worst = 0.0;
  int checks = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = uniform_int(rng, 1, 3), m = uniform_int(rng, 1, 2), H = uniform_int(rng, 1, 8);
    const int T = uniform_int(rng, 2 * H, 60);
    const ProblemInstance inst = random_instance(rng, n, m, uniform(rng, 0.1, 2.0));
    const Mat& K = inst.base_gain.K;
    const ClosedLoop cl(inst.system, inst.base_gain, H);
    std::vector<DacPolicy> pol;
    for (int t = 0; t <= T; ++t)
      pol.push_back(random_policy_in_M(rng, H, m, n, inst.base_gain.kappa, inst.base_gain.gamma, uniform(rng, 0.2, 1.0)));
    const std::vector<Vec> w = random_disturbances(rng, n, inst.system.w_bar, T + 1);
    const Simulation sim = simulate_dac(inst.system, K, pol, w, Vec::Zero(n));
    DisturbanceHistory hist(2 * H, n);
    for (int t = 0; t <= T; ++t) {
      if (t >= H) {
        const std::vector<DacPolicy> states(pol.begin() + (t - H), pol.begin() + t);
        const PolicyWindow window(pol.begin() + (t - H), pol.begin() + t + 1);
        const Vec transient = cl.power(H) * sim.x[t - H];
        worst = std::max(worst, rel_err(transient + approx_state(states, hist, cl), sim.x[t]));
        worst = std::max(worst, rel_err(-K * transient + approx_action(window, hist, cl), sim.u[t]));
        checks += 2;
      }
      hist.push(w[t]);
    }
  }
  return {worst <= 1e-9, "200 instances, " + std::to_string(checks) + " identities, max relative error " + fmt(worst)};
}

Outcome criterion2() {
  Rng rng(1002);
  double worst = 0.0;
  int instances = 0, values = 0;
  while (instances < 120) {
    const int n = uniform_int(rng, 1, 3), m = uniform_int(rng, 1, 2);
    const int H = uniform_int(rng, 1, 6);
    if (2 * H * n > 12) continue;
    const ProblemInstance inst = random_instance(rng, n, m, uniform(rng, 0.2, 1.5));
    const ClosedLoop cl(inst.system, inst.base_gain, H);
    const Mat Dx = random_mat(rng, 3, n, 1.0), Du = random_mat(rng, 2, m, 1.0);
    PolicyWindow window;
    for (int k = 0; k <= H; ++k)
      window.push_back(random_policy_in_M(rng, H, m, n, inst.base_gain.kappa, inst.base_gain.gamma, uniform(rng, 0.1, 1.0)));
    const std::vector<DacPolicy> states(window.begin(), window.end() - 1);
    for (int i = 0; i < Dx.rows(); ++i) {
      const double brute = brute_sup_state(Dx.row(i).transpose(), states, inst.system, inst.base_gain.K);
      const double g = g_x(i, states, cl, Dx, inst.system.w_bar);
      worst = std::max(worst, std::abs(g - brute) / std::max(1.0, std::abs(brute)));
      ++values;
    }
    for (int j = 0; j < Du.rows(); ++j) {
      const double brute = brute_sup_action(Du.row(j).transpose(), window, inst.system, inst.base_gain.K);
      const double g = g_u(j, window, cl, Du, inst.system.w_bar);
      worst = std::max(worst, std::abs(g - brute) / std::max(1.0, std::abs(brute)));
      ++values;
    }
    ++instances;
  }
  return {worst <= 1e-9, std::to_string(instances) + " instances (<= 12 disturbance coordinates), " +
                             std::to_string(values) + " values, max relative error " + fmt(worst)};
}

Outcome criterion3() {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const int T = 2000, seeds = 1000;
  const OgdBzParams p = make_params(inst, 7, 0.04, StepSchedule::hvac(), T, hvac_costs(1, 0).G(), hvac_eps_star(inst));
  const OgdBzSetup setup = prepare_ogd_bz(inst, p);
  const ConstraintSpec phys = physical_constraints(inst);
  std::vector<int> violations(seeds, 0);
  std::vector<double> margin(seeds, 0.0);
  std::vector<std::string> errors(seeds);
  parallel_for(seeds, 0, [&](int i) {
    try {
      const HvacRun r = hvac_run(inst, p, setup, static_cast<std::uint64_t>(i + 1));
      violations[i] = audit_safety(r.trace, phys, 0.0, &*inst.coordinate_shift).violations;
      const std::vector<Vec> states = r.trace.states();
      margin[i] = worst_case_margins(r.trace.policies(), &states, inst).worst;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  const int total = std::accumulate(violations.begin(), violations.end(), 0);
  const int failed = static_cast<int>(std::count_if(errors.begin(), errors.end(), [](const std::string& s) { return !s.empty(); }));
  const double max_margin = *std::max_element(margin.begin(), margin.end());
  const bool flags = p.theorem1_safe();
  const bool margins_ok = !flags || max_margin <= 1e-9;
  std::string detail = std::to_string(seeds) + " seeds, T = 2000: " + std::to_string(total) +
                       " physical-frame violations, " + std::to_string(failed) + " solver failures; flags " +
                       (flags ? "hold" : "do not hold") + ", max certified margin " + fmt(max_margin);
  return {total == 0 && failed == 0 && margins_ok, detail};
}

// Mean averaged regret series against the best safe linear gain, over seeds 1..count.
std::vector<double> mean_averaged_regret(const ProblemInstance& inst, const OgdBzParams& p, const OgdBzSetup& setup,
                                         int count, std::vector<double>* totals,
                                         std::vector<std::vector<double>>* x_phys) {
  const std::vector<Mat> grid = default_gain_grid(inst, 201);
  std::vector<std::vector<double>> avg(count);
  totals->assign(count, 0.0);
  if (x_phys) x_phys->assign(count, {});
  parallel_for(count, 0, [&](int i) {
    const HvacRun r = hvac_run(inst, p, setup, static_cast<std::uint64_t>(i + 1));
    const LinearBenchmark lb = best_linear_in_hindsight(inst, r.costs, r.ws, p.T, grid);
    const RegretReport rr = regret_report(stage_costs(r.trace), lb.stage_costs, "linear");
    avg[i] = rr.averaged;
    (*totals)[i] = rr.regret;
    if (x_phys)
      for (const StageRecord& s : r.trace.stages) (*x_phys)[i].push_back(to_physical_state(inst, s.x)(0));
  });
  return band(avg).mean;
}

Outcome criterion4() {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const OgdBzParams p = make_params(inst, 7, 0.04, StepSchedule::hvac(), 2000, hvac_costs(1, 0).G(), hvac_eps_star(inst));
  const OgdBzSetup setup = prepare_ogd_bz(inst, p);
  std::vector<double> totals;
  const std::vector<double> mean = mean_averaged_regret(inst, p, setup, 100, &totals, nullptr);
  const double ratio = mean[2000] / mean[100];
  return {ratio <= 0.25, "100 seeds, 201-point gain grid: averaged regret " + fmt(mean[100]) + " at t = 100, " +
                             fmt(mean[2000]) + " at t = 2000, ratio " + fmt(ratio) + " (needs <= 0.25)"};
}

Outcome criterion5() {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const double es = hvac_eps_star(inst);
  const int seeds = 100;
  struct Cell {
    std::vector<double> totals;
    std::vector<std::vector<double>> x;
    double lo = 0.0, hi = 0.0;
  };
  Cell cells[2];
  const double eps[2] = {0.04, 0.4};
  for (int k = 0; k < 2; ++k) {
    const OgdBzParams p = make_params(inst, 7, eps[k], StepSchedule::hvac(), 2000, hvac_costs(1, 0).G(), es);
    const OgdBzSetup setup = prepare_ogd_bz(inst, p);
    mean_averaged_regret(inst, p, setup, seeds, &cells[k].totals, &cells[k].x);
    const Band b = band(cells[k].x);
    cells[k].lo = *std::min_element(b.lo.begin(), b.lo.end());
    cells[k].hi = *std::max_element(b.hi.begin(), b.hi.end());
  }
  const double r_small = std::accumulate(cells[0].totals.begin(), cells[0].totals.end(), 0.0) / seeds;
  const double r_large = std::accumulate(cells[1].totals.begin(), cells[1].totals.end(), 0.0) / seeds;
  const bool inside = cells[1].lo >= cells[0].lo && cells[1].hi <= cells[0].hi;
  const bool narrower = cells[1].hi - cells[1].lo < cells[0].hi - cells[0].lo;
  return {r_large > r_small && inside && narrower,
          "100 common seeds: mean regret " + fmt(r_small) + " (eps 0.04) vs " + fmt(r_large) +
              " (eps 0.4); state band [" + fmt(cells[0].lo) + ", " + fmt(cells[0].hi) + "] vs [" +
              fmt(cells[1].lo) + ", " + fmt(cells[1].hi) + "]"};
}

Outcome criterion6() {
  Rng rng(1006);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = uniform_int(rng, 1, 3), m = uniform_int(rng, 1, 2), H = uniform_int(rng, 1, 6);
    const ProblemInstance inst = random_instance(rng, n, m, uniform(rng, 0.2, 1.5));
    const ClosedLoop cl(inst.system, inst.base_gain, H);
    const DacPolicy M = random_policy_in_M(rng, H, m, n, inst.base_gain.kappa, inst.base_gain.gamma, uniform(rng, 0.1, 1.0));
    const std::vector<Vec> lags = random_disturbances(rng, n, inst.system.w_bar, 2 * H);
    Mat Rq = random_mat(rng, n, n, 1.0), Rr = random_mat(rng, m, m, 1.0);
    const Mat Q = Rq * Rq.transpose() + 0.1 * Mat::Identity(n, n), R = Rr * Rr.transpose() + 0.1 * Mat::Identity(m, m);
    const Vec xs = random_mat(rng, n, 1, 0.5), us = random_mat(rng, m, 1, 0.5);
    // Tracking cost with a smooth non-quadratic state term.
    CostFunction c;
    c.c = [=](const Vec& x, const Vec& u) {
      const Vec dx = x - xs, du = u - us;
      return dx.dot(Q * dx) + du.dot(R * du) + 0.05 * dx.array().pow(4).sum();
    };
    c.grad_x = [=](const Vec& x, const Vec&) {
      const Vec dx = x - xs;
      return Vec(2.0 * Q * dx + 0.2 * dx.array().pow(3).matrix());
    };
    c.grad_u = [=](const Vec&, const Vec& u) { return Vec(2.0 * R * (u - us)); };
    const Vec g = grad_ring_f(M, c, DisturbanceHistory(lags, 2 * H, n), cl).flatten();
    const auto f = [&](const Vec& v) {
      const auto [x, u] = truncated_state_action(DacPolicy::unflatten(v, H, m, n), inst.system, inst.base_gain.K, lags);
      return c.c(x, u);
    };
    const Vec v = M.flatten();
    Vec fd(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) fd(i) = central_difference(f, v, static_cast<int>(i), 1e-5);
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, fd.norm()));
  }
  return {worst <= 1e-5, "100 triples, max relative error " + fmt(worst)};
}

// Scalar instance with one or two state rows and one action row, so H = 1 keeps the lifted
// polytope within 20 rows.
ProblemInstance small_scalar(Rng& rng, int kx) {
  ProblemInstance inst;
  const auto scalar = [](double v) { return Mat::Constant(1, 1, v); };
  for (;;) {
    const double a = uniform(rng, -0.9, 1.1), b = uniform(rng, 0.3, 1.5) * (uniform(rng, 0, 1) < 0.5 ? -1 : 1);
    const double k = uniform(rng, -0.5, 0.5);
    if (std::abs(a - b * k) > 0.85) continue;
    try {
      inst.base_gain = certify_tightest(scalar(a), scalar(b), scalar(k));
    } catch (const CertificationFailure&) {
      continue;
    }
    inst.system = {scalar(a), scalar(b), uniform(rng, 0.1, 0.6)};
    break;
  }
  inst.constraints.Dx = kx == 1 ? scalar(1.0) : Mat((Mat(2, 1) << 1.0, -1.0).finished());
  inst.constraints.dx = Vec::Constant(kx, uniform(rng, 1.0, 3.0));
  inst.constraints.Du = scalar(uniform(rng, 0, 1) < 0.5 ? 1.0 : -1.0);
  inst.constraints.du = Vec::Constant(1, uniform(rng, 0.5, 2.0));
  return inst;
}

Outcome criterion7() {
  Rng rng(1007);
  int solved = 0, max_rows = 0, certified = 0;
  double worst = 0.0;
  while (solved < 50) {
    const ProblemInstance inst = small_scalar(rng, 1 + solved % 2);
    const LiftedPolytope P = build_lifted_polytope(inst, 1, uniform(rng, 0.0, 0.3));
    if (P.layout.rows > 20 || !check_nonempty(P).nonempty) continue;
    max_rows = std::max(max_rows, P.layout.rows);
    const Vec target = Vec::Constant(1, uniform(rng, -6.0, 6.0));
    const DacPolicy got = project_onto_omega(DacPolicy::unflatten(target, 1, 1, 1), P);
    OmegaProjector proj(P);
    const ProjectionResult res = proj.project(DacPolicy::unflatten(target, 1, 1, 1));
    // Oracle: enumerate active sets of the lifted QP with a small weight on the auxiliaries.
    const LiftedLayout& L = P.layout;
    Vec weights = Vec::Constant(L.dim, kAuxRegularization);
    weights.segment(L.off_M, L.n_M).setOnes();
    Vec full = Vec::Zero(L.dim);
    full.segment(L.off_M, L.n_M) = target;
    const OracleSolution o = active_set_oracle(QpProblem::projection(weights, full, P.C, P.h), 1e-9);
    if (!o.found) return {false, "oracle found no feasible active set"};
    worst = std::max(worst, std::abs(got.mats[0](0, 0) - o.v(L.off_M)));
    worst = std::max(worst, std::abs(res.M.mats[0](0, 0) - o.v(L.off_M)));
    if (res.kkt.certified(1e-6, 1e-6)) ++certified;
    ++solved;
  }
  return {worst <= 1e-6 && certified == solved,
          "50 polytopes (<= " + std::to_string(max_rows) + " rows), max deviation " + fmt(worst) + ", " +
              std::to_string(certified) + "/50 KKT-certified"};
}

Outcome criterion8() {
  Rng rng(1008);
  // (a) power bound for certified gains.
  double worst_a = -INFINITY;
  int gains = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = uniform_int(rng, 1, 4), m = uniform_int(rng, 1, 3);
    const ProblemInstance inst = random_instance(rng, n, m, 1.0);
    std::vector<StableGain> certs{inst.base_gain};
    try {
      certs.push_back(certify_tightest(inst.system.A, inst.system.B, inst.base_gain.K + random_mat(rng, m, n, 0.2)));
    } catch (const CertificationFailure&) {
    }
    for (const StableGain& g : certs) {
      const Mat AK = inst.system.A - inst.system.B * g.K;
      Mat pw = Mat::Identity(n, n);
      for (int k = 0; k <= 50; ++k) {
        const double bound = g.kappa * g.kappa * std::pow(1.0 - g.gamma, k);
        worst_a = std::max(worst_a, norm2(pw) - bound * (1.0 + 1e-9) - 1e-14);
        pw = AK * pw;
      }
      ++gains;
    }
  }
  const bool a_ok = worst_a <= 0.0;

  // (b) the safest grid gain's linear policy stays in the reduced set.
  const ProblemInstance hv = build_hvac_instance(HvacConfig{});
  const EpsStarResult es = epsilon_star_probe(hv, default_gain_grid(hv), hv.base_gain.kappa, hv.base_gain.gamma);
  const StableGain star = certify_strong_stability(hv.system.A, hv.system.B, es.K_star, hv.base_gain.kappa, hv.base_gain.gamma);
  bool b_ok = true;
  std::string b_detail;
  for (const int H : {7, 60}) {
    const BufferParams bp = compute_buffers(hv, H, 0.0, hvac_costs(1, 0).G());
    const double eps = es.eps_star - bp.eps1 - bp.eps3;
    const DacPolicy M = policy_from_gain(star, hv.base_gain, hv.system.A, hv.system.B, H);
    const bool in = build_lifted_polytope(hv, H, eps).contains(M, 1e-12);
    b_ok = b_ok && in;
    b_detail += " H=" + std::to_string(H) + " eps=" + fmt(eps) + (in ? " in" : " OUT");
  }

  // (c) policy_from_gain outputs lie in the policy set.
  int checked = 0, inside = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = uniform_int(rng, 1, 3), m = uniform_int(rng, 1, 2);
    const ProblemInstance inst = random_instance(rng, n, m, 1.0);
    const Mat K2 = inst.base_gain.K + random_mat(rng, m, n, 0.3);
    StableGain g2;
    try {
      g2 = certify_tightest(inst.system.A, inst.system.B, K2);
    } catch (const CertificationFailure&) {
      continue;
    }
    const double kappa = std::max(g2.kappa, inst.base_gain.kappa);
    const double gamma = std::min(g2.gamma, inst.base_gain.gamma);
    const StableGain a = certify_strong_stability(inst.system.A, inst.system.B, K2, kappa, gamma);
    const StableGain b = certify_strong_stability(inst.system.A, inst.system.B, inst.base_gain.K, kappa, gamma);
    const DacPolicy M = policy_from_gain(a, b, inst.system.A, inst.system.B, uniform_int(rng, 1, 20));
    ++checked;
    if (in_M_set(M, kappa, gamma, 1e-12).inside) ++inside;
  }
  const bool c_ok = checked > 0 && inside == checked;
  return {a_ok && b_ok && c_ok, "(a) " + std::to_string(gains) + " gains, k <= 50, " + (a_ok ? "bound holds" : "bound FAILS") +
                                    "; (b) eps0 " + fmt(es.eps_star) + b_detail + "; (c) " + std::to_string(inside) +
                                    "/" + std::to_string(checked) + " policies in the set"};
}

Outcome criterion9() {
  const ProblemInstance inst = widened_hvac(3000.0, -0.5);
  const double es = hvac_eps_star(inst);
  const std::vector<Mat> grid = default_gain_grid(inst, 201);
  const int seeds = 20;
  std::vector<double> logT, logR;
  std::string detail = "widened instance, 20 seeds:";
  for (const int T : {250, 500, 1000, 2000, 4000}) {
    const OgdBzParams p = select_parameters(inst, T, es, SelectionMode::corollary2, hvac_costs(1, 0).G());
    const OgdBzSetup setup = prepare_ogd_bz(inst, p);
    std::vector<double> reg(seeds);
    parallel_for(seeds, 0, [&](int i) {
      const HvacRun r = hvac_run(inst, p, setup, static_cast<std::uint64_t>(i + 1));
      const LinearBenchmark lb = best_linear_in_hindsight(inst, r.costs, r.ws, T, grid);
      reg[i] = regret_report(stage_costs(r.trace), lb.stage_costs, "linear").regret;
    });
    const double mean = std::accumulate(reg.begin(), reg.end(), 0.0) / seeds;
    detail += " T=" + std::to_string(T) + ":" + fmt(mean);
    if (!(mean > 0.0)) return {false, detail + " (non-positive mean regret, slope undefined)"};
    logT.push_back(std::log(T));
    logR.push_back(std::log(mean));
  }
  const double mx = std::accumulate(logT.begin(), logT.end(), 0.0) / logT.size();
  const double my = std::accumulate(logR.begin(), logR.end(), 0.0) / logR.size();
  double sxy = 0.0, sxx = 0.0;
  for (size_t k = 0; k < logT.size(); ++k) {
    sxy += (logT[k] - mx) * (logR[k] - my);
    sxx += (logT[k] - mx) * (logT[k] - mx);
  }
  const double slope = sxy / sxx;
  return {slope <= 0.75, detail + "; log-log slope " + fmt(slope)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9};
  std::vector<int> which;
  for (int k = 1; k < argc; ++k) {
    const int c = std::atoi(argv[k]);
    if (c < 1 || c > 9) {
      std::fprintf(stderr, "usage: %s [criterion 1-9 ...]\n", argv[0]);
      return 2;
    }
    which.push_back(c);
  }
  if (which.empty())
    for (int c = 1; c <= 9; ++c) which.push_back(c);

  int failed = 0;
  for (const int c : which) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[c - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s  %s  [%.1f s]\n", c, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
