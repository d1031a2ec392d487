#pragma once

#include "ogdbz/simulator.hpp"

#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace ogdbz::testing {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi);
int uniform_int(Rng& rng, int lo, int hi);  // inclusive
Mat random_mat(Rng& rng, int rows, int cols, double scale);

/// Random stabilizable instance with box constraints |x_i| <= dx, |u_j| <= du, base gain from
/// LQR (unit weights) certified with certify_tightest.
ProblemInstance random_instance(Rng& rng, int n, int m, double w_bar);

/// Random policy with ||M^[i]||_inf equal to `fill` times the policy-set bound (fill in [0, 1]).
DacPolicy random_policy_in_M(Rng& rng, int H, int m, int n, double kappa, double gamma, double fill);

std::vector<Vec> random_disturbances(Rng& rng, int n, double w_bar, int count);

/// Direct simulation of x_{t+1} = A x_t + B u_t + w_t with
/// u_t = -K x_t + sum_i policies[t]^[i] w_{t-i}, w_s = 0 for s < 0, from x_0.
struct Simulation {
  std::vector<Vec> x;  // x_0..x_T+1
  std::vector<Vec> u;  // u_0..u_T
};
Simulation simulate_dac(const LinearSystem& sys, const Mat& K, const std::vector<DacPolicy>& policies,
                        const std::vector<Vec>& w, const Vec& x0);

/// sup over w in {+-w_bar}^{2H n} of d' x~_t, where x~_t is the state reached from x_{t-H} = 0
/// under the window M_{t-H}, ..., M_{t-1} and lags w_{t-1}, ..., w_{t-2H}. Enumerates every
/// sign pattern by simulation.
double brute_sup_state(const Vec& d, const std::vector<DacPolicy>& window_states, const LinearSystem& sys,
                       const Mat& K);

/// Same for d' u~_t with the H + 1 policy window M_{t-H}, ..., M_t.
double brute_sup_action(const Vec& d, const std::vector<DacPolicy>& window, const LinearSystem& sys,
                        const Mat& K);

/// (x~, u~) for the ring policy M by stepping from x_{t-H} = 0 with lags[k-1] = w_{t-k},
/// k = 1..2H; missing lags are zero.
std::pair<Vec, Vec> truncated_state_action(const DacPolicy& M, const LinearSystem& sys, const Mat& K,
                                           const std::vector<Vec>& lags);

/// Dense active-set enumeration for min 1/2 v'Pv + q'v s.t. Cv <= h: every subset of at most
/// dim rows (lexicographic order) is made active, the equality-constrained problem is solved
/// and the primal-feasible candidate with the lowest objective wins.
struct OracleSolution {
  Vec v;
  double objective = 0.0;
  bool found = false;
  long subsets = 0;
};
OracleSolution active_set_oracle(const QpProblem& qp, double feas_tol = 1e-9);

/// Central difference of f at x along coordinate i.
double central_difference(const std::function<double(const Vec&)>& f, const Vec& x, int i, double h);

/// The HVAC instance with the box widened by `factor` around the setpoint and base gain K.
ProblemInstance widened_hvac(double factor, double base_gain);

}  // namespace ogdbz::testing
