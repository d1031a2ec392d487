#pragma once

#include "ogdbz/constraints.hpp"
#include "ogdbz/dac_policy.hpp"
#include "ogdbz/disturbance.hpp"
#include "ogdbz/projection.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ogdbz {

/// Convex differentiable stage cost with gradient constant G: ||grad c|| <= G b whenever
/// ||x||, ||u|| <= b.
struct CostFunction {
  std::function<double(const Vec&, const Vec&)> c;
  std::function<Vec(const Vec&, const Vec&)> grad_x;
  std::function<Vec(const Vec&, const Vec&)> grad_u;
  double G = 0.0;
};

/// x'Qx + u'Ru with G = 2 max(||Q||, ||R||).
CostFunction quadratic_cost(const Mat& Q, const Mat& R);

/// t -> c_t. Must be a pure function of t so benchmarks can replay the same costs.
using CostStream = std::function<CostFunction(int)>;

struct StepSchedule {
  enum class Kind { constant, floored_inv_sqrt, inv_sqrt };
  Kind kind = Kind::constant;
  double eta0 = 0.0;
  int floor = 40;  // floored_inv_sqrt: eta0 * max(t + 1, floor)^(-1/2)

  static StepSchedule constant(double eta) { return {Kind::constant, eta, 1}; }
  static StepSchedule floored(double eta0, int floor) { return {Kind::floored_inv_sqrt, eta0, floor}; }
  /// 0.5 * max(t + 1, 40)^(-1/2), the HVAC experiment's schedule.
  static StepSchedule hvac() { return floored(0.5, 40); }

  double eta(int t) const;
  /// Largest eta_t over t = 0..T.
  double max_eta(int T) const;
  bool is_constant() const { return kind == Kind::constant; }
  bool operator==(const StepSchedule&) const = default;
};

const char* to_string(StepSchedule::Kind k);

struct OgdBzParams {
  int H = 1;
  double epsilon = 0.0;
  StepSchedule schedule;
  BufferParams buffers;  // evaluated at schedule.max_eta(T)
  std::uint64_t seed = 0;
  int T = 0;

  std::optional<double> eps_star;
  bool horizon_condition = false;   // H >= log(2 kappa^2) / log(1/(1-gamma))
  bool safety_condition = false;    // epsilon >= eps1 + eps2
  bool nonempty_condition = false;  // epsilon <= eps_star - eps1 - eps3 (false when eps_star unknown)
  bool eps2_extrapolated = false;   // schedule is not constant
  bool theorem1_safe() const { return horizon_condition && safety_condition; }
};

/// Fills buffers and condition flags for explicit (H, epsilon, schedule).
OgdBzParams make_params(const ProblemInstance& inst, int H, double epsilon,
                        const StepSchedule& schedule, int T, double G,
                        std::optional<double> eps_star = std::nullopt, double gf_constant = 1.0);

enum class SelectionMode { theorem1, corollary2 };

const char* to_string(SelectionMode m);

/// theorem1: epsilon = eps_star / 2, H from the horizon bound with (c1 + c3), eta from the
/// stepsize bound with c2. corollary2: H from the bound with (c1 + c2), eta = 1/(n^2 sqrt(m) H
/// sqrt(T)), epsilon = eps1 + eps2. Throws InfeasibleError naming the violated condition.
OgdBzParams select_parameters(const ProblemInstance& inst, int T, double eps_star,
                              SelectionMode mode, double G, double gf_constant = 1.0);

/// Gradient of c(x~(M), u~(M)) with every window slot tied to M. `hist` holds lags
/// w_{t-1}, ..., w_{t-2H}.
DacPolicy grad_ring_f(const DacPolicy& policy, const CostFunction& cost,
                      const DisturbanceHistory& hist, const ClosedLoop& cl);

/// c(x~(M), u~(M)) with every window slot tied to M.
double ring_f(const DacPolicy& policy, const CostFunction& cost, const DisturbanceHistory& hist,
              const ClosedLoop& cl);

struct StageRecord {
  int t = 0;
  Vec x, u, w;
  DacPolicy M;  // policy in force at t; empty for non-DAC controllers
  double cost = 0.0;
  double proj_infeasibility = 0.0;
  double proj_kkt = 0.0;
  ProjectionPath proj_path = ProjectionPath::identity;
  double motion = 0.0;      // ||M_{t+1} - M_t||_F
  bool motion_ok = true;    // motion <= eta_t G_f
  double wall_seconds = 0.0;
};

/// Stages t = 0..T and the state x_{T+1} reached after the last action.
struct RolloutTrace {
  std::vector<StageRecord> stages;
  Vec final_state;
  double total_cost = 0.0;
  int motion_flags = 0;

  int T() const { return static_cast<int>(stages.size()) - 1; }
  /// max_t ||x_{t+1} - A x_t - B u_t - w_t||_inf.
  double replay_error(const LinearSystem& sys) const;
  std::vector<DacPolicy> policies() const;
  std::vector<Vec> states() const;
};

/// Algorithm state between stages: current policy, disturbance history, projector.
class OgdBzDriver {
public:
  OgdBzDriver(const ProblemInstance& inst, const OgdBzParams& params, DacPolicy M0,
              LiftedPolytope poly);

  /// u_t = -K x_t + sum_i M_t^[i] w_{t-i}.
  Vec act(const Vec& x);
  /// Records w_t = x_{t+1} - A x_t - B u_t, takes the projected gradient step with c_t and
  /// returns the stage record for t (cost filled by the caller).
  StageRecord observe(const Vec& x_next, const CostFunction& cost);

  const DacPolicy& policy() const { return M_; }
  int t() const { return t_; }
  const OmegaProjector& projector() const { return proj_; }

private:
  const ProblemInstance* inst_;
  OgdBzParams params_;
  ClosedLoop cl_;
  DisturbanceHistory hist_;
  OmegaProjector proj_;
  DacPolicy M_;
  Vec x_, u_;
  bool acted_ = false;
  int t_ = 0;
};

struct OgdBzSetup {
  LiftedPolytope poly;
  NonemptyResult feasibility;
};

/// Builds Omega_epsilon and the phase-one witness M_0. Throws InfeasibleError naming the
/// nonemptiness condition when the set is empty.
OgdBzSetup prepare_ogd_bz(const ProblemInstance& inst, const OgdBzParams& params);

struct RunOptions {
  bool record_policies = true;
  std::optional<DacPolicy> M0;  // defaults to initial_policy(setup)
};

/// The zero policy (pure base gain) when it lies in Omega_epsilon, else the phase-one witness.
DacPolicy initial_policy(const OgdBzSetup& setup);

RolloutTrace run_ogd_bz(const ProblemInstance& inst, const OgdBzParams& params,
                        const OgdBzSetup& setup, const CostStream& costs,
                        DisturbanceSource& disturbances, const RunOptions& opts = {});

RolloutTrace run_ogd_bz(const ProblemInstance& inst, const OgdBzParams& params,
                        const CostStream& costs, DisturbanceSource& disturbances);

}  // namespace ogdbz
