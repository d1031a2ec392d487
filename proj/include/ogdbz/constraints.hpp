#pragma once

#include "ogdbz/dac_policy.hpp"
#include "ogdbz/qp.hpp"
#include "ogdbz/system_model.hpp"

#include <limits>
#include <vector>

namespace ogdbz {

/// Buffer-zone constants for one (instance, H, eta). All closed forms use the explicit
/// appendix expressions; G_f carries an unknown order-one constant exposed as gf_constant.
struct BufferParams {
  int H = 0;
  double eta = 0.0;
  double epsilon = 0.0;  // set by parameter selection, not by compute_buffers
  double eps1 = 0.0;
  double eps2 = 0.0;
  double eps3 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double b = 0.0;
  double Lg = 0.0;
  double Gf = 0.0;
  double G = 0.0;
  double gf_constant = 1.0;
  double kappa_B = 1.0;
  double phi = 0.0;          // 2 kappa^5 kappa_B sqrt(mn)
  double max_D_inf = 0.0;    // max(||Dx||_inf, ||Du||_inf)
  double h_threshold = 0.0;  // log(2 kappa^2) / log(1 / (1 - gamma))
};

/// log(2 kappa^2) / log(1/(1-gamma)); zero when gamma == 1.
double horizon_threshold(double kappa, double gamma);

/// Throws InvalidArgument when H is below horizon_threshold of the base gain.
BufferParams compute_buffers(const ProblemInstance& inst, int H, double eta, double G,
                             double gf_constant = 1.0);

/// Same closed forms without the horizon check; h_threshold still reports the bound.
BufferParams compute_buffers_unchecked(const ProblemInstance& inst, int H, double eta, double G,
                                       double gf_constant = 1.0);

/// sum_{s=1}^{max_lag} ||Dx_i' Phi_s^x(M_{t-H:t-1})||_1 w_bar, i is 0-based.
/// max_lag defaults to 2H; smaller values drop lags that reach before time 0.
double g_x(int i, const std::vector<DacPolicy>& window_states, const ClosedLoop& cl,
           const Mat& Dx, double w_bar, int max_lag = -1);

/// sum_{s=1}^{max_lag} ||Du_j' Phi_s^u(M_{t-H:t})||_1 w_bar, j is 0-based.
double g_u(int j, const PolicyWindow& window, const ClosedLoop& cl, const Mat& Du,
           double w_bar, int max_lag = -1);

double ring_g_x(int i, const DacPolicy& policy, const ClosedLoop& cl, const Mat& Dx,
                double w_bar);
double ring_g_u(int j, const DacPolicy& policy, const ClosedLoop& cl, const Mat& Du,
                double w_bar);

enum class GroupKind { state, action, policy };

/// One "sum of absolute values" row of the lifted system:
///   weight * sum_t |A.row(t) m + b(t)| <= rhs
/// where m is the flattened policy. The lifted variables (Y or Z) for the terms occupy
/// [var_offset, var_offset + A.rows()).
struct AbsGroup {
  GroupKind kind = GroupKind::state;
  int index = 0;          // constraint row for state/action, (block - 1) * m + row for policy
  Mat A;
  Vec b;
  double weight = 1.0;
  double base_rhs = 0.0;  // dx_i, du_j or the policy-set bound
  bool buffered = true;   // rhs = base_rhs - epsilon when true
  int var_offset = 0;
  int sum_row = 0;        // row of the sum constraint in C
  int abs_row = 0;        // first of 2 * terms rows (+, - interleaved) in C
};

/// Variable blocks of the lifted point v = (M, Yx, Yu, Z).
struct LiftedLayout {
  int H = 0, m = 0, n = 0, kx = 0, ku = 0;
  int off_M = 0, n_M = 0;
  int off_Yx = 0, n_Yx = 0;
  int off_Yu = 0, n_Yu = 0;
  int off_Z = 0, n_Z = 0;
  int dim = 0;
  int rows = 0;

  /// Yx_{i,k,l}: row i (0-based), lag k = 1..2H, column l (0-based).
  int yx(int i, int k, int l) const { return off_Yx + (i * 2 * H + (k - 1)) * n + l; }
  int yu(int j, int k, int l) const { return off_Yu + (j * 2 * H + (k - 1)) * n + l; }
  /// Z^[i]_{r,c}: block i = 1..H, same order as the flattened policy.
  int z(int i, int r, int c) const { return off_Z + (i - 1) * m * n + c * m + r; }
};

/// C v <= h describing Omega_epsilon in lifted coordinates. Rows are ordered as: state sums,
/// action sums, policy-set sums, then (+, -) pairs for every Yx, Yu and Z entry.
struct LiftedPolytope {
  LiftedLayout layout;
  std::vector<AbsGroup> groups;
  SpMat C;
  Vec h;
  double epsilon = 0.0;
  double kappa = 1.0;
  double gamma = 1.0;
  double w_bar = 0.0;

  double group_rhs(const AbsGroup& g) const { return g.buffered ? g.base_rhs - epsilon : g.base_rhs; }
  /// Lifted variable bounding |term t| of group g.
  int term_var(const AbsGroup& g, int t) const;
  /// weight * sum |A m + b|.
  double group_value(const AbsGroup& g, const Vec& m) const;
  /// min over groups of rhs - value; nonnegative iff the policy lies in Omega_epsilon.
  double worst_slack(const Vec& m) const;
  bool contains(const DacPolicy& p, double tol = 0.0) const;
  /// Lifted point with Y, Z equal to the absolute values they dominate.
  Vec lift(const DacPolicy& p) const;
  DacPolicy policy_block(const Vec& v) const;
  /// Same polytope with a different buffer (only h changes).
  LiftedPolytope with_epsilon(double eps) const;
};

LiftedPolytope build_lifted_polytope(const ProblemInstance& inst, int H, double epsilon);

struct NonemptyResult {
  bool nonempty = false;
  double max_min_slack = 0.0;  // optimal value of the phase-one problem
  bool degenerate = false;     // the slack hit its cap
  DacPolicy witness;
  Vec lifted_witness;
};

/// Phase-one LP on the lifted system.
NonemptyResult check_nonempty(const LiftedPolytope& poly);

/// Certified per-stage upper bounds minus right-hand sides; a value <= 0 certifies the row
/// against every admissible disturbance sequence.
struct MarginTrace {
  std::vector<Vec> x_margin;  // stage t, row i: bound on Dx_i' x_t minus dx_i
  std::vector<Vec> u_margin;
  double worst = -std::numeric_limits<double>::infinity();
  int worst_stage = -1;
  bool all_nonpositive(double tol = 0.0) const { return worst <= tol; }
};

/// policies[t] = M_t for t = 0..T. states[t] = x_t when given; otherwise the transient term
/// uses the uniform state bound `b_bound`.
/// Transient bound: ||Dx_i' A_K^H||_2 ||x_{t-H}||_2, plus g_x of the realized window with
/// lags limited to those at or after time 0.
MarginTrace worst_case_margins(const std::vector<DacPolicy>& policies,
                               const std::vector<Vec>* states, const ProblemInstance& inst,
                               double b_bound = 0.0);

/// Largest eps with Dx x_t <= dx - eps and Du u_t <= du - eps for all t under u = -K x,
/// x_0 = 0 and every admissible disturbance sequence. -inf when A - BK is not Schur stable.
double linear_gain_margin(const Mat& K, const ProblemInstance& inst);

struct EpsStarResult {
  double eps_star = 0.0;
  Mat K_star;
  int candidates = 0;
  int admissible = 0;
  std::vector<double> margins;  // per candidate, -inf when not certified
};

/// Probes candidates certified (kappa, gamma)-strongly stable and safe; throws InfeasibleError
/// when none qualifies.
EpsStarResult epsilon_star_probe(const ProblemInstance& inst, const std::vector<Mat>& grid,
                                 double kappa, double gamma);

/// Uniform grid over gains with entries in [-radius, radius], `per_axis` points per entry.
std::vector<Mat> gain_grid(int m, int n, double radius, int per_axis);

}  // namespace ogdbz
