#pragma once

#include "ogdbz/constraints.hpp"
#include "ogdbz/qp.hpp"

#include <cstdint>
#include <vector>

namespace ogdbz {

/// Lifted-space weight on the Y and Z blocks so the projection QP is strictly convex.
inline constexpr double kAuxRegularization = 1e-10;

enum class ProjectionPath { identity, warm_start, active_set, splitting };

const char* to_string(ProjectionPath p);

struct ProjectionResult {
  DacPolicy M;
  Vec lifted;  // (M, Y, Z) with Y, Z equal to the absolute values they dominate
  Vec lambda;  // multipliers of the lifted rows
  KktReport kkt;
  ProjectionPath path = ProjectionPath::identity;
  int iterations = 0;
};

struct ProjectionStats {
  std::int64_t identity = 0;
  std::int64_t warm_start = 0;
  std::int64_t active_set = 0;
  std::int64_t splitting = 0;
  std::int64_t iterations = 0;
  double worst_kkt = 0.0;
  double worst_infeasibility = 0.0;
};

/// Euclidean projection onto Omega_epsilon. Every returned point is certified against the
/// lifted QP's KKT conditions; an uncertified solve throws SolverError. The last active set is
/// kept as a warm start, so one instance serves one sequential run.
///
/// In policy coordinates each group weight * sum_l |a_l' m + b_l| <= rhs is the intersection of
/// the halfspaces weight * sum_l s_l (a_l' m + b_l) <= rhs over sign vectors s. The dual
/// active-set method (identity Hessian) adds the most violated such halfspace, which is the one
/// with s_l = sign(a_l' m + b_l), so rows are generated on demand instead of enumerated.
class OmegaProjector {
public:
  explicit OmegaProjector(LiftedPolytope poly, QpSettings settings = {});

  ProjectionResult project(const DacPolicy& target);
  void reset_warm_start() { warm_.clear(); }

  const LiftedPolytope& polytope() const { return poly_; }
  const ProjectionStats& stats() const { return stats_; }
  int max_iterations = 2000;

  /// w * sum_l s_l (a_l' m + b_l) <= rhs written as e' m <= f.
  struct Row {
    int group = 0;
    std::vector<signed char> sign;
    Vec e;
    double f = 0.0;
  };

private:
  Row make_row(int g, const Vec& m) const;
  bool dual_active_set(const Vec& m0, Vec& m, std::vector<Row>& active, Vec& u, int& iters) const;
  bool equality_solve(const Vec& m0, const std::vector<Row>& rows, Vec& m, Vec& u) const;
  void assemble(const Vec& m, const std::vector<Row>& active, const Vec& u,
                ProjectionResult& res) const;
  bool certify(const Vec& m0, ProjectionResult& res);
  double scale_tol(const Vec& m0) const;

  LiftedPolytope poly_;
  QpSettings settings_;
  QpProblem qp_;
  std::vector<int> alias_;  // alias_[g] = representative group with identical terms, or g
  std::vector<Row> warm_;
  QpWarmStart lifted_warm_;
  bool have_lifted_warm_ = false;
  ProjectionStats stats_;
};

/// One-shot projection without warm start.
DacPolicy project_onto_omega(const DacPolicy& target, const LiftedPolytope& poly);

/// Phase-one LP witness for Omega_epsilon; the witness is re-verified in policy coordinates.
/// Throws InfeasibleError when the set is empty.
NonemptyResult solve_feasibility_lp(const LiftedPolytope& poly);

}  // namespace ogdbz
