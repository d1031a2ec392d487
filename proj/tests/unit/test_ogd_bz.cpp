#include "doctest.h"
#include "oracles.hpp"

#include <cmath>

using namespace ogdbz;
using namespace ogdbz::testing;

namespace {

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

// x'Qx + u'Ru + 0.1 sum x_i^4, so the finite-difference checks see a non-quadratic cost.
CostFunction quartic_cost(const Mat& Q, const Mat& R) {
  CostFunction c;
  c.c = [Q, R](const Vec& x, const Vec& u) {
    return x.dot(Q * x) + u.dot(R * u) + 0.1 * x.array().pow(4).sum();
  };
  c.grad_x = [Q](const Vec& x, const Vec&) { return Vec(2.0 * Q * x + 0.4 * x.array().pow(3).matrix()); };
  c.grad_u = [R](const Vec&, const Vec& u) { return Vec(2.0 * R * u); };
  c.G = 1.0;
  return c;
}

Mat random_spd(Rng& rng, int n) {
  const Mat R = random_mat(rng, n, n, 1.0);
  return R * R.transpose() + 0.2 * Mat::Identity(n, n);
}

DisturbanceHistory history_from(const std::vector<Vec>& lags, int H, int n) {
  return DisturbanceHistory(lags, 2 * H, n);
}

ProblemInstance widened() { return widened_hvac(3000.0, -0.5); }

double widened_eps_star(const ProblemInstance& inst) {
  return epsilon_star_probe(inst, default_gain_grid(inst), inst.base_gain.kappa, inst.base_gain.gamma).eps_star;
}

}  // namespace

TEST_CASE("step schedules") {
  const StepSchedule h = StepSchedule::hvac();
  CHECK(h.eta(0) == doctest::Approx(0.5 / std::sqrt(40.0)));
  CHECK(h.eta(39) == h.eta(0));
  CHECK(h.eta(99) == doctest::Approx(0.05));
  CHECK(h.max_eta(2000) == h.eta(0));
  const StepSchedule c = StepSchedule::constant(0.2);
  CHECK(c.eta(1000) == 0.2);
  CHECK(c.is_constant());
  const StepSchedule s{StepSchedule::Kind::inv_sqrt, 1.0, 1};
  CHECK(s.eta(3) == doctest::Approx(0.5));
  CHECK(std::string(to_string(StepSchedule::Kind::floored_inv_sqrt)) == "floored_inv_sqrt");
}

TEST_CASE("ring cost gradient hand value") {
  // H = 1, B = 2, K = 0.5, M = 0.3, lags (1, -1): x~ = 0.4, u~ = 0.1, df/dM = -1.2.
  const ClosedLoop cl(scalar(0.7), scalar(2.0), scalar(0.5), 2);
  const DisturbanceHistory hist({Vec::Constant(1, 1.0), Vec::Constant(1, -1.0)}, 2, 1);
  DacPolicy M = DacPolicy::zeros(1, 1, 1);
  M.mats[0](0, 0) = 0.3;
  const CostFunction c = quadratic_cost(scalar(1.0), scalar(1.0));
  CHECK(ring_f(M, c, hist, cl) == doctest::Approx(0.17));
  CHECK(grad_ring_f(M, c, hist, cl).mats[0](0, 0) == doctest::Approx(-1.2));
  CHECK(c.G == 2.0);
}

TEST_CASE("ring cost gradient vanishes without disturbances") {
  const ClosedLoop cl(scalar(0.7), scalar(2.0), scalar(0.5), 6);
  DacPolicy M = DacPolicy::zeros(3, 1, 1);
  M.mats[1](0, 0) = 0.4;
  const DacPolicy g = grad_ring_f(M, quadratic_cost(scalar(1.0), scalar(1.0)), DisturbanceHistory(6, 1), cl);
  CHECK(g.frobenius_norm() == 0.0);
}

TEST_CASE("ring cost agrees with a direct truncated simulation") {
  Rng rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = uniform_int(rng, 1, 3), m = uniform_int(rng, 1, 2), H = uniform_int(rng, 1, 5);
    const ProblemInstance inst = random_instance(rng, n, m, 1.0);
    const ClosedLoop cl(inst.system, inst.base_gain, H);
    const DacPolicy M = random_policy_in_M(rng, H, m, n, inst.base_gain.kappa, inst.base_gain.gamma, 0.8);
    const std::vector<Vec> lags = random_disturbances(rng, n, 1.0, 2 * H);
    const CostFunction c = quartic_cost(random_spd(rng, n), random_spd(rng, m));
    const auto [x, u] = truncated_state_action(M, inst.system, inst.base_gain.K, lags);
    CHECK(ring_f(M, c, history_from(lags, H, n), cl) == doctest::Approx(c.c(x, u)).epsilon(1e-11));
  }
}

TEST_CASE("ring cost gradient matches central differences") {
  Rng rng(52);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = uniform_int(rng, 1, 3), m = uniform_int(rng, 1, 2), H = uniform_int(rng, 1, 5);
    const ProblemInstance inst = random_instance(rng, n, m, 1.0);
    const ClosedLoop cl(inst.system, inst.base_gain, H);
    const DacPolicy M = random_policy_in_M(rng, H, m, n, inst.base_gain.kappa, inst.base_gain.gamma, 0.8);
    const std::vector<Vec> lags = random_disturbances(rng, n, 1.0, 2 * H);
    const CostFunction c = quartic_cost(random_spd(rng, n), random_spd(rng, m));
    const Vec g = grad_ring_f(M, c, history_from(lags, H, n), cl).flatten();
    const auto f = [&](const Vec& v) {
      const auto [x, u] = truncated_state_action(DacPolicy::unflatten(v, H, m, n), inst.system, inst.base_gain.K, lags);
      return c.c(x, u);
    };
    const Vec v = M.flatten();
    Vec fd(v.size());
    for (int i = 0; i < v.size(); ++i) fd(i) = central_difference(f, v, i, 1e-5);
    CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("parameters for explicit settings") {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const OgdBzParams p = make_params(inst, 7, 0.04, StepSchedule::hvac(), 2000, 8.0, 0.285714);
  CHECK(p.buffers.eta == doctest::Approx(0.5 / std::sqrt(40.0)));
  CHECK(p.buffers.epsilon == 0.04);
  CHECK(p.horizon_condition);
  CHECK_FALSE(p.safety_condition);
  CHECK_FALSE(p.nonempty_condition);
  CHECK(p.eps2_extrapolated);
  CHECK_FALSE(p.theorem1_safe());
  CHECK_FALSE(make_params(inst, 3, 0.04, StepSchedule::hvac(), 2000, 8.0).horizon_condition);
  CHECK_FALSE(make_params(inst, 7, 0.04, StepSchedule::hvac(), 2000, 8.0).nonempty_condition);
  CHECK_THROWS_AS(make_params(inst, 7, 0.04, StepSchedule::hvac(), -1, 8.0), InvalidArgument);
}

TEST_CASE("parameter selection without disturbances") {
  HvacConfig cfg;
  cfg.w_min = cfg.w_max = 0.0;
  const ProblemInstance inst = build_hvac_instance(cfg);
  for (const SelectionMode mode : {SelectionMode::theorem1, SelectionMode::corollary2}) {
    const OgdBzParams p = select_parameters(inst, 100, 1.0, mode, 8.0);
    CHECK(p.H == static_cast<int>(std::ceil(horizon_threshold(1.0, 0.16))));
    CHECK(p.theorem1_safe());
    CHECK(p.nonempty_condition);
  }
  CHECK(select_parameters(inst, 100, 1.0, SelectionMode::corollary2, 8.0).epsilon == 0.0);
  CHECK(select_parameters(inst, 100, 1.0, SelectionMode::theorem1, 8.0).epsilon == 0.5);
}

TEST_CASE("parameter selection failures") {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  CHECK_THROWS_WITH_AS(select_parameters(inst, 2000, 0.285714, SelectionMode::corollary2, 8.0),
                       doctest::Contains("ε ≤ ε★ − ε₁ − ε₃"), InfeasibleError);
  CHECK_THROWS_AS(select_parameters(inst, 2000, 0.0, SelectionMode::corollary2, 8.0), InvalidArgument);
  CHECK_THROWS_AS(select_parameters(inst, 0, 0.2, SelectionMode::corollary2, 8.0), InvalidArgument);
}

TEST_CASE("theorem1 selection on HVAC needs a long horizon") {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const double es = 0.285714;
  const OgdBzParams p = select_parameters(inst, 2000, es, SelectionMode::theorem1, 8.0);
  // c1 = 60 and c3 = 15 do not depend on H, so the horizon rule has a closed form.
  CHECK(p.H == static_cast<int>(std::ceil(std::log(8.0 * 75.0 * 2000.0 / es) / std::log(1.0 / 0.84))));
  CHECK(p.H == 88);
  CHECK(p.epsilon == doctest::Approx(es / 2.0));
  // eta = eps_star / (8 c2 H^2) makes eps2 = eps_star / 8 exactly.
  CHECK(p.buffers.eps2 == doctest::Approx(es / 8.0));
  CHECK(p.theorem1_safe());
  CHECK(p.nonempty_condition);
  CHECK(p.schedule.is_constant());
}

TEST_CASE("widened HVAC selection at T = 1000") {
  const ProblemInstance inst = widened();
  CHECK(inst.base_gain.kappa == doctest::Approx(1.0));
  CHECK(inst.base_gain.gamma == doctest::Approx(0.4));
  const double es = widened_eps_star(inst);
  // K = -1 gives A_K = 0.3, so sup |x| = 1.2 / 0.7 and the margin is 6000 - 12/7.
  CHECK(es == doctest::Approx(6000.0 - 1.2 / 0.7));
  const OgdBzParams p = select_parameters(inst, 1000, es, SelectionMode::corollary2, 8.0);
  CHECK(p.H == 19);
  CHECK(p.buffers.eta == doctest::Approx(1.0 / (19.0 * std::sqrt(1000.0))));
  CHECK(p.epsilon == doctest::Approx(1960.50059007).epsilon(1e-9));
  CHECK(p.epsilon == doctest::Approx(p.buffers.eps1 + p.buffers.eps2));
  CHECK(p.horizon_condition);
  CHECK(p.safety_condition);
  CHECK(p.nonempty_condition);
  // H is a fixed point of the horizon rule: (1 - gamma)^(-H) >= 8 (c1 + c2) n sqrt(m) T / eps_star.
  const BufferParams b = compute_buffers_unchecked(inst, p.H, 0.0, 8.0);
  CHECK(std::pow(0.6, -p.H) >= 8.0 * (b.c1 + b.c2) * 1000.0 / es);
  CHECK(b.c1 == doctest::Approx(8.0 * 1.2 / 0.4));
}

TEST_CASE("zero stepsize keeps the initial policy") {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const OgdBzParams p = make_params(inst, 7, 0.04, StepSchedule::constant(0.0), 50, 8.0);
  const OgdBzSetup setup = prepare_ogd_bz(inst, p);
  const HvacCosts hc = hvac_costs(3, 50);
  DisturbanceSource d = DisturbanceSource::uniform(1, inst.system.w_bar, 3);
  const RolloutTrace tr = run_ogd_bz(inst, p, setup, hc.stream(), d);
  const DacPolicy M0 = initial_policy(setup);
  for (const StageRecord& s : tr.stages) CHECK((s.M - M0).frobenius_norm() <= 1e-12);
  CHECK(tr.motion_flags == 0);
}

TEST_CASE("initial policy") {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  // The free response alone gives g_x = 1.2 (1 - 0.84^7) / 0.16 > 2, so zero is outside.
  const OgdBzSetup s = prepare_ogd_bz(inst, make_params(inst, 7, 0.04, StepSchedule::hvac(), 10, 8.0));
  CHECK(initial_policy(s).frobenius_norm() > 0.0);
  CHECK(s.poly.contains(initial_policy(s), 1e-9));
  const ProblemInstance wide = widened();
  const OgdBzSetup w = prepare_ogd_bz(wide, make_params(wide, 19, 1960.5, StepSchedule::constant(1e-3), 10, 8.0));
  CHECK(initial_policy(w).frobenius_norm() == 0.0);
  CHECK_THROWS_WITH_AS(prepare_ogd_bz(inst, make_params(inst, 5, 0.4, StepSchedule::hvac(), 10, 8.0, 0.285714)),
                       doctest::Contains("ε ≤ ε★ − ε₁ − ε₃ fails"), InfeasibleError);
}

TEST_CASE("iterates match a finite-difference reimplementation and are pinned") {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const int T = 15, H = 7;
  const OgdBzParams p = make_params(inst, H, 0.04, StepSchedule::hvac(), T, 8.0);
  const OgdBzSetup setup = prepare_ogd_bz(inst, p);
  const HvacCosts hc = hvac_costs(7, T);
  const std::vector<Vec> ws = uniform_disturbances(1, inst.system.w_bar, 7, T);
  DisturbanceSource d = DisturbanceSource::fixed(ws, inst.system.w_bar);
  const RolloutTrace tr = run_ogd_bz(inst, p, setup, hc.stream(), d);

  // Oracle loop: gradient by central differences of the truncated simulation, then project.
  DacPolicy M = initial_policy(setup);
  std::vector<Vec> lags;
  for (int t = 0; t <= T; ++t) {
    CHECK((tr.stages[t].M - M).frobenius_norm() <= 1e-6);
    const CostFunction c = hc.stream()(t);
    const auto f = [&](const Vec& v) {
      const auto [x, u] = truncated_state_action(DacPolicy::unflatten(v, H, 1, 1), inst.system, inst.base_gain.K, lags);
      return c.c(x, u);
    };
    const Vec v = M.flatten();
    Vec g(v.size());
    for (int i = 0; i < v.size(); ++i) g(i) = central_difference(f, v, i, 1e-6);
    M = project_onto_omega(DacPolicy::unflatten(v - p.schedule.eta(t) * g, H, 1, 1), setup.poly);
    lags.insert(lags.begin(), ws[t]);
    if (static_cast<int>(lags.size()) > 2 * H) lags.pop_back();
  }
  const Vec last = tr.stages[T].M.flatten();
  const double pinned[] = {1.38586881652172,    0.0118701941217541, -0.0452198251873678, -0.115856472957689,
                           -0.0247065942189187, 0.0453404238902664, 0.0613071462303027};
  for (int i = 0; i < H; ++i) CHECK(last(i) == doctest::Approx(pinned[i]).epsilon(1e-8));
}

TEST_CASE("runs without disturbances stay at the origin") {
  HvacConfig cfg;
  cfg.w_min = cfg.w_max = 0.0;
  const ProblemInstance inst = build_hvac_instance(cfg);
  const OgdBzParams p = make_params(inst, 7, 0.04, StepSchedule::hvac(), 40, 8.0);
  DisturbanceSource d = DisturbanceSource::uniform(1, 0.0, 1);
  const RolloutTrace tr = run_ogd_bz(inst, p, hvac_costs(1, 40).stream(), d);
  CHECK(tr.total_cost == 0.0);
  for (const StageRecord& s : tr.stages) {
    CHECK(s.x.norm() == 0.0);
    CHECK(s.M.frobenius_norm() == 0.0);
  }
}

TEST_CASE("horizon zero runs one stage") {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const OgdBzParams p = make_params(inst, 7, 0.04, StepSchedule::hvac(), 0, 8.0);
  DisturbanceSource d = DisturbanceSource::uniform(1, inst.system.w_bar, 1);
  const RolloutTrace tr = run_ogd_bz(inst, p, hvac_costs(1, 0).stream(), d);
  CHECK(tr.T() == 0);
  CHECK(tr.stages.size() == 1);
  CHECK(tr.final_state.size() == 1);
}

TEST_CASE("HVAC iterates stay feasible and runs replay exactly") {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const int T = 300;
  const OgdBzParams p = make_params(inst, 7, 0.04, StepSchedule::hvac(), T, 8.0);
  const OgdBzSetup setup = prepare_ogd_bz(inst, p);
  const auto run = [&] {
    DisturbanceSource d = DisturbanceSource::uniform(1, inst.system.w_bar, 11);
    return run_ogd_bz(inst, p, setup, hvac_costs(11, T).stream(), d);
  };
  const RolloutTrace a = run(), b = run();
  CHECK(a.total_cost == b.total_cost);
  CHECK(a.replay_error(inst.system) <= 1e-12);
  CHECK(a.motion_flags == 0);
  for (int t = 0; t <= T; ++t) {
    CHECK(setup.poly.contains(a.stages[t].M, 1e-9));
    CHECK(a.stages[t].proj_infeasibility <= 1e-8);
    CHECK((a.stages[t].M - b.stages[t].M).frobenius_norm() == 0.0);
  }
  CHECK(audit_safety(a, inst.constraints).safe());
  CHECK(a.states().size() == static_cast<size_t>(T + 2));
}

TEST_CASE("widened instance with selected parameters is certified at every stage") {
  const ProblemInstance inst = widened();
  const int T = 250;
  const OgdBzParams p = select_parameters(inst, T, widened_eps_star(inst), SelectionMode::corollary2, 8.0);
  REQUIRE(p.theorem1_safe());
  const OgdBzSetup setup = prepare_ogd_bz(inst, p);
  DisturbanceSource d = DisturbanceSource::uniform(1, inst.system.w_bar, 5);
  const RolloutTrace tr = run_ogd_bz(inst, p, setup, hvac_costs(5, T).stream(), d);
  const std::vector<Vec> states = tr.states();
  const MarginTrace mt = worst_case_margins(tr.policies(), &states, inst);
  CHECK(mt.all_nonpositive());
  CHECK(audit_safety(tr, inst.constraints, p.epsilon).strictly_safe);
  CHECK(tr.motion_flags == 0);
}

TEST_CASE("driver call order is enforced") {
  const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  const OgdBzParams p = make_params(inst, 7, 0.04, StepSchedule::hvac(), 5, 8.0);
  const OgdBzSetup setup = prepare_ogd_bz(inst, p);
  OgdBzDriver drv(inst, p, initial_policy(setup), setup.poly);
  const CostFunction c = quadratic_cost(scalar(1.0), scalar(1.0));
  CHECK_THROWS_AS(drv.observe(Vec::Zero(1), c), InvalidArgument);
  drv.act(Vec::Zero(1));
  CHECK_THROWS_AS(drv.act(Vec::Zero(1)), InvalidArgument);
  const StageRecord r = drv.observe(Vec::Constant(1, 0.5), c);
  CHECK(r.w(0) == doctest::Approx(0.5 - inst.system.B(0, 0) * r.u(0)));
  CHECK(drv.t() == 1);
  CHECK_THROWS_AS(OgdBzDriver(inst, p, DacPolicy::zeros(3, 1, 1), setup.poly), InvalidArgument);
}
