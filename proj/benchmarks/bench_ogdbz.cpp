#include "ogdbz/simulator.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace ogdbz;

namespace {

const ProblemInstance& hvac() {
  static const ProblemInstance inst = build_hvac_instance(HvacConfig{});
  return inst;
}

// Targets spread around the feasible set so every projection path is exercised.
std::vector<DacPolicy> targets(int H, int count) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<DacPolicy> out;
  for (int k = 0; k < count; ++k) {
    Vec v(H);
    for (int i = 0; i < H; ++i) v(i) = u(rng);
    out.push_back(DacPolicy::unflatten(v, H, 1, 1));
  }
  return out;
}

void BM_ProjectCold(benchmark::State& state) {
  const int H = static_cast<int>(state.range(0));
  const LiftedPolytope P = build_lifted_polytope(hvac(), H, 0.04);
  const std::vector<DacPolicy> ys = targets(H, 64);
  size_t k = 0;
  for (auto _ : state) {
    OmegaProjector proj(P);
    benchmark::DoNotOptimize(proj.project(ys[k++ % ys.size()]));
  }
}
BENCHMARK(BM_ProjectCold)->Arg(7)->Arg(15)->Arg(30);

// Consecutive OGD iterates move little, so the projector's warm start usually applies.
void BM_ProjectWarmPath(benchmark::State& state) {
  const int H = static_cast<int>(state.range(0));
  const LiftedPolytope P = build_lifted_polytope(hvac(), H, 0.04);
  OmegaProjector proj(P);
  DacPolicy y = targets(H, 1).front();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> step(0.0, 0.02);
  for (auto _ : state) {
    for (auto& m : y.mats) m(0, 0) += step(rng);
    const ProjectionResult r = proj.project(y);
    y = r.M;
    for (auto& m : y.mats) m(0, 0) *= 1.05;
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_ProjectWarmPath)->Arg(7)->Arg(15);

void BM_RingGradient(benchmark::State& state) {
  const int H = static_cast<int>(state.range(0));
  const ProblemInstance& inst = hvac();
  const ClosedLoop cl(inst.system, inst.base_gain, H);
  const DacPolicy M = targets(H, 1).front();
  DisturbanceHistory hist(uniform_disturbances(1, inst.system.w_bar, 1, 2 * H - 1), 2 * H, 1);
  const CostFunction c = hvac_costs(1, 0).stream()(0);
  for (auto _ : state) benchmark::DoNotOptimize(grad_ring_f(M, c, hist, cl));
}
BENCHMARK(BM_RingGradient)->Arg(7)->Arg(30)->Arg(88);

void BM_Rollout(benchmark::State& state) {
  const ProblemInstance& inst = hvac();
  const int T = static_cast<int>(state.range(0));
  const OgdBzParams p = make_params(inst, 7, 0.04, StepSchedule::hvac(), T, 8.0);
  const OgdBzSetup setup = prepare_ogd_bz(inst, p);
  std::uint64_t seed = 1;
  for (auto _ : state) {
    DisturbanceSource d = DisturbanceSource::uniform(1, inst.system.w_bar, seed);
    benchmark::DoNotOptimize(run_ogd_bz(inst, p, setup, hvac_costs(seed, T).stream(), d));
    ++seed;
  }
  state.SetItemsProcessed(state.iterations() * (T + 1));
}
BENCHMARK(BM_Rollout)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_BestLinearGain(benchmark::State& state) {
  const ProblemInstance& inst = hvac();
  const int T = 2000;
  const std::vector<Vec> ws = uniform_disturbances(1, inst.system.w_bar, 1, T);
  const CostStream cs = hvac_costs(1, T).stream();
  const std::vector<Mat> grid = default_gain_grid(inst, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(best_linear_in_hindsight(inst, cs, ws, T, grid));
}
BENCHMARK(BM_BestLinearGain)->Arg(201)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
