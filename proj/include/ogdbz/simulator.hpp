#pragma once

#include "ogdbz/constraints.hpp"
#include "ogdbz/disturbance.hpp"
#include "ogdbz/ogd_bz.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ogdbz {

/// Called with u_t before the cost c_t is revealed; observe() receives x_{t+1} and c_t.
class Controller {
public:
  virtual ~Controller() = default;
  virtual Vec act(int t, const Vec& x) = 0;
  /// May fill policy and projection fields of `rec`.
  virtual void observe(int t, const Vec& x_next, const CostFunction& cost, StageRecord& rec) {
    (void)t, (void)x_next, (void)cost, (void)rec;
  }
};

/// u = -K x.
class LinearGainController : public Controller {
public:
  explicit LinearGainController(Mat K) : K_(std::move(K)) {}
  Vec act(int t, const Vec& x) override;

private:
  Mat K_;
};

/// u = -K x + sum_i M^[i] w_{t-i} with a fixed M and w recovered from the states.
class DacController : public Controller {
public:
  DacController(const LinearSystem& sys, Mat K, DacPolicy M);
  Vec act(int t, const Vec& x) override;
  void observe(int t, const Vec& x_next, const CostFunction& cost, StageRecord& rec) override;

private:
  const LinearSystem* sys_;
  Mat K_;
  DacPolicy M_;
  DisturbanceHistory hist_;
  Vec x_, u_;
};

class OgdBzController : public Controller {
public:
  OgdBzController(const ProblemInstance& inst, const OgdBzParams& params, DacPolicy M0,
                  LiftedPolytope poly)
      : driver_(inst, params, std::move(M0), std::move(poly)) {}
  Vec act(int t, const Vec& x) override;
  void observe(int t, const Vec& x_next, const CostFunction& cost, StageRecord& rec) override;
  const OgdBzDriver& driver() const { return driver_; }

private:
  OgdBzDriver driver_;
};

class CallbackController : public Controller {
public:
  explicit CallbackController(std::function<Vec(int, const Vec&)> f) : f_(std::move(f)) {}
  Vec act(int t, const Vec& x) override { return f_(t, x); }

private:
  std::function<Vec(int, const Vec&)> f_;
};

/// Simulates x_{t+1} = A x_t + B u_t + w_t from x_0 = 0 for t = 0..T.
RolloutTrace rollout(Controller& controller, const ProblemInstance& inst,
                     DisturbanceSource& disturbances, const CostStream& costs, int T);

/// Time-varying HVAC stage costs q x^2 + r_t u^2 with r_t i.i.d. uniform, drawn from the cost
/// sub-stream of `seed`.
struct HvacCosts {
  std::vector<double> r;
  double q = 2.0;
  double r_max = 4.0;
  CostStream stream() const;
  /// G = 2 max(q, r_max).
  double G() const { return 2.0 * std::max(q, r_max); }
};

HvacCosts hvac_costs(std::uint64_t seed, int T, double q = 2.0, double r_lo = 0.1, double r_hi = 4.0);

/// First T + 1 samples of the uniform stream for `seed`.
std::vector<Vec> uniform_disturbances(int n, double w_bar, std::uint64_t seed, int T);

struct SafetyReport {
  int violations = 0;        // (stage, row) pairs with D z > d
  double worst_excess = -std::numeric_limits<double>::infinity();  // max (D z - d)
  int first_violation = -1;  // stage
  double min_slack = std::numeric_limits<double>::infinity();      // min (d - D z)
  double epsilon = 0.0;
  bool strictly_safe = false;  // D z <= d - epsilon everywhere
  bool loosely_safe = false;   // D z <= d + epsilon everywhere
  bool safe() const { return violations == 0; }
};

/// Audits x_0..x_{T+1} and u_0..u_T. With `shift`, the trace is mapped to that frame first
/// (x + x_eq, u + u_eq) and `spec` must be written in the same frame.
SafetyReport audit_safety(const RolloutTrace& trace, const ConstraintSpec& spec, double epsilon = 0.0,
                          const CoordinateShift* shift = nullptr);

/// Constraints of `inst` rewritten in the physical frame.
ConstraintSpec physical_constraints(const ProblemInstance& inst);

/// Gains from `grid` that are (kappa, gamma)-strongly stable and robustly safe.
std::vector<Mat> admissible_gains(const ProblemInstance& inst, const std::vector<Mat>& grid,
                                  double kappa, double gamma);

/// Per-stage costs of u = -K x under a fixed disturbance sequence.
std::vector<double> linear_stage_costs(const Mat& K, const ProblemInstance& inst,
                                       const std::vector<Vec>& ws, const CostStream& costs, int T);

struct LinearBenchmark {
  Mat K_star;
  double J = 0.0;
  std::vector<double> stage_costs;  // of K_star
  int grid_size = 0;
  int admissible = 0;
};

/// Minimum realized total cost over the grid gains that are strongly stable with the base
/// gain's (kappa, gamma) and robustly safe. Throws InfeasibleError when none is admissible.
LinearBenchmark best_linear_in_hindsight(const ProblemInstance& inst, const CostStream& costs,
                                         const std::vector<Vec>& ws, int T,
                                         const std::vector<Mat>& grid);

/// Default HVAC-style grid: per_axis points on [-kappa, kappa] in every entry (m n <= 4 only).
std::vector<Mat> default_gain_grid(const ProblemInstance& inst, int per_axis = 201);

struct FixedPolicyBenchmark {
  DacPolicy M_star;
  double objective = 0.0;  // sum_t f~_t(M_star)
  int iterations = 0;
  double last_step = 0.0;
};

/// sum_{t=0}^{T} f~_t(M) with every window slot tied to M and realized disturbances.
double ring_objective(const DacPolicy& M, const ProblemInstance& inst, const std::vector<Vec>& ws,
                      const std::vector<CostFunction>& costs, DacPolicy* grad = nullptr);

/// Projected gradient descent with backtracking from the phase-one witness; stops when the
/// projected step is <= tol in Frobenius norm.
FixedPolicyBenchmark best_fixed_policy_in_hindsight(const LiftedPolytope& poly,
                                                    const ProblemInstance& inst,
                                                    const std::vector<CostFunction>& costs,
                                                    const std::vector<Vec>& ws, double tol = 1e-7,
                                                    int max_iter = 20000);

std::vector<CostFunction> materialize(const CostStream& costs, int T);

struct RegretReport {
  double J_alg = 0.0;
  double J_bench = 0.0;
  double regret = 0.0;
  std::vector<double> averaged;  // cumulative regret through t divided by t + 1
  std::string benchmark;
};

/// Throws InvalidArgument on mismatched horizons.
RegretReport regret_report(const std::vector<double>& alg_stage_costs,
                           const std::vector<double>& bench_stage_costs, std::string benchmark);

std::vector<double> stage_costs(const RolloutTrace& trace);

/// Per-index mean and min/max over series of equal length, summed in the given order.
struct Band {
  std::vector<double> mean, lo, hi;
};
Band band(const std::vector<std::vector<double>>& series);

/// Runs fn(i) for i in [0, count) on up to `threads` workers; the first exception is rethrown
/// after all workers stop.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace ogdbz
