#pragma once

#include "ogdbz/linalg.hpp"

#include <Eigen/Sparse>

#include <iosfwd>

namespace ogdbz {

using SpMat = Eigen::SparseMatrix<double>;

/// Iteration cap or numerical breakdown in a solver.
class SolverError : public Error {
public:
  using Error::Error;
};

/// A constraint system with no feasible point.
class InfeasibleError : public Error {
public:
  using Error::Error;
};

/// min 1/2 v'Pv + q'v  subject to  C v <= h.
struct QpProblem {
  SpMat P;
  Vec q;
  SpMat C;
  Vec h;

  int dim() const { return static_cast<int>(q.size()); }
  int rows() const { return static_cast<int>(h.size()); }
  double objective(const Vec& v) const;
  void validate() const;

  /// 1/2 sum_i weights_i (v_i - target_i)^2 written in (P, q) form.
  static QpProblem projection(const Vec& weights, const Vec& target, SpMat C, Vec h);
};

enum class QpStatus { optimal, infeasible, max_iter };

const char* to_string(QpStatus s);

/// Infinity-norm KKT residuals for multipliers lambda >= 0 on C v <= h.
struct KktReport {
  double primal_infeasibility = 0.0;  // max(C v - h)_+
  double stationarity = 0.0;          // ||P v + q + C' lambda||_inf
  double dual_infeasibility = 0.0;    // max(-lambda)_+
  double complementarity = 0.0;       // max |lambda_i (h - C v)_i|

  bool certified(double feas_tol, double kkt_tol) const;
  double worst_kkt() const;
};

KktReport kkt_residuals(const QpProblem& qp, const Vec& v, const Vec& lambda);

struct QpSolution {
  Vec v;
  Vec lambda;
  QpStatus status = QpStatus::max_iter;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
  int iterations = 0;
  bool polished = false;
  KktReport kkt;
};

struct QpWarmStart {
  Vec v;
  Vec lambda;
};

struct QpSettings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-10;
  double eps_rel = 1e-10;
  double eps_infeasible = 1e-8;
  double feas_tol = 1e-8;
  double kkt_tol = 1e-6;
  int max_iter = 50000;
  int check_every = 25;
  int max_refinements = 60;
  /// Receives "iteration,rho,primal_residual,dual_residual" rows when set.
  std::ostream* trace = nullptr;
};

/// Operator-splitting (ADMM) solve followed by an active-set refinement that solves the
/// equality-constrained KKT system on the identified active rows. status == optimal only
/// when kkt_residuals certifies the returned pair.
QpSolution solve_qp(const QpProblem& qp, const QpSettings& settings = {},
                    const QpWarmStart* warm = nullptr);

/// Result of the phase-one problem  max t  s.t.  C v + t s <= h,  t <= cap,  with s_r = ||C_r||_2.
struct SlackLpResult {
  bool feasible = false;   // optimal t >= -tol
  bool hit_cap = false;    // t reached cap: the slack is unbounded in the data
  double slack = 0.0;      // optimal t
  Vec v;
  int pivots = 0;
};

/// Dense simplex on the phase-one problem (Dantzig pricing, Bland's rule once progress stalls).
SlackLpResult maximize_min_slack(const SpMat& C, const Vec& h, double cap = 1e6,
                                 double tol = 1e-9);

}  // namespace ogdbz
