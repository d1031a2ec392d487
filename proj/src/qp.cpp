#include "ogdbz/qp.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <vector>

namespace ogdbz {

double QpProblem::objective(const Vec& v) const { return 0.5 * v.dot(P * v) + q.dot(v); }

void QpProblem::validate() const {
  require(P.rows() == q.size() && P.cols() == q.size(), "QpProblem: P must be dim x dim");
  require(C.rows() == h.size(), "QpProblem: C and h row counts differ");
  require(C.cols() == q.size() || C.rows() == 0, "QpProblem: C column count must equal dim");
  require(q.allFinite() && h.allFinite(), "QpProblem: non-finite q or h");
}

QpProblem QpProblem::projection(const Vec& weights, const Vec& target, SpMat C, Vec h) {
  require(weights.size() == target.size(), "QpProblem::projection: size mismatch");
  QpProblem qp;
  const auto n = weights.size();
  qp.P.resize(n, n);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(i, i, weights(i));
  qp.P.setFromTriplets(t.begin(), t.end());
  qp.q = -weights.cwiseProduct(target);
  qp.C = std::move(C);
  qp.h = std::move(h);
  if (qp.C.cols() == 0 && qp.C.rows() == 0) qp.C.resize(0, n);
  return qp;
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

bool KktReport::certified(double feas_tol, double kkt_tol) const {
  return primal_infeasibility <= feas_tol && stationarity <= kkt_tol &&
         dual_infeasibility <= kkt_tol && complementarity <= kkt_tol;
}

double KktReport::worst_kkt() const {
  return std::max({stationarity, dual_infeasibility, complementarity});
}

KktReport kkt_residuals(const QpProblem& qp, const Vec& v, const Vec& lambda) {
  KktReport r;
  Vec grad = qp.P * v + qp.q;
  if (qp.rows() > 0) {
    const Vec slack = qp.h - qp.C * v;
    r.primal_infeasibility = std::max(0.0, (-slack).maxCoeff());
    grad.noalias() += qp.C.transpose() * lambda;
    r.dual_infeasibility = std::max(0.0, (-lambda).maxCoeff());
    r.complementarity = lambda.cwiseProduct(slack).cwiseAbs().maxCoeff();
  }
  r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  return r;
}

namespace {

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Equality-constrained solve on the rows flagged in `active`:
//   [P  C_A'] [v  ]   [-q ]
//   [C_A  0 ] [lam] = [h_A]
// via a quasi-definite regularization and iterative refinement.
bool solve_active_kkt(const QpProblem& qp, const std::vector<char>& active, Vec& v, Vec& lam) {
  const int n = qp.dim();
  std::vector<int> rows;
  for (int i = 0; i < qp.rows(); ++i)
    if (active[i]) rows.push_back(i);
  const int na = static_cast<int>(rows.size());
  const double delta = 1e-9;

  SpMat Ct = qp.C.transpose();
  std::vector<Eigen::Triplet<double>> exact, reg;
  for (int k = 0; k < qp.P.outerSize(); ++k)
    for (SpMat::InnerIterator it(qp.P, k); it; ++it) exact.emplace_back(it.row(), it.col(), it.value());
  for (int a = 0; a < na; ++a)
    for (SpMat::InnerIterator it(Ct, rows[a]); it; ++it) {
      exact.emplace_back(n + a, it.row(), it.value());
      exact.emplace_back(it.row(), n + a, it.value());
    }
  reg = exact;
  for (int i = 0; i < n; ++i) reg.emplace_back(i, i, delta);
  for (int a = 0; a < na; ++a) reg.emplace_back(n + a, n + a, -delta);

  SpMat Kx(n + na, n + na), Kr(n + na, n + na);
  Kx.setFromTriplets(exact.begin(), exact.end());
  Kr.setFromTriplets(reg.begin(), reg.end());
  Eigen::SimplicialLDLT<SpMat> ldlt(Kr);
  if (ldlt.info() != Eigen::Success) return false;

  Vec rhs(n + na);
  rhs.head(n) = -qp.q;
  for (int a = 0; a < na; ++a) rhs(n + a) = qp.h(rows[a]);
  Vec sol = ldlt.solve(rhs);
  for (int it = 0; it < 8; ++it) {
    const Vec res = rhs - Kx * sol;
    if (inf_norm(res) <= 1e-14 * std::max(1.0, inf_norm(rhs))) break;
    sol += ldlt.solve(res);
  }
  if (!sol.allFinite()) return false;
  v = sol.head(n);
  lam = Vec::Zero(qp.rows());
  for (int a = 0; a < na; ++a) lam(rows[a]) = sol(n + a);
  return true;
}

// Active-set refinement: drop rows with negative multipliers, add violated rows, re-solve.
bool refine(const QpProblem& qp, std::vector<char> active, const QpSettings& s, Vec& v, Vec& lam) {
  for (int round = 0; round < s.max_refinements; ++round) {
    Vec vv, ll;
    if (!solve_active_kkt(qp, active, vv, ll)) return false;
    int worst_neg = -1;
    double neg = -s.kkt_tol;
    for (int i = 0; i < qp.rows(); ++i)
      if (active[i] && ll(i) < neg) {
        neg = ll(i);
        worst_neg = i;
      }
    if (worst_neg >= 0) {
      active[worst_neg] = 0;
      continue;
    }
    const Vec viol = qp.C * vv - qp.h;
    int worst_viol = -1;
    double vmax = s.feas_tol;
    for (int i = 0; i < qp.rows(); ++i)
      if (!active[i] && viol(i) > vmax) {
        vmax = viol(i);
        worst_viol = i;
      }
    if (worst_viol >= 0) {
      active[worst_viol] = 1;
      continue;
    }
    ll = ll.cwiseMax(0.0);
    if (kkt_residuals(qp, vv, ll).certified(s.feas_tol, s.kkt_tol)) {
      v = std::move(vv);
      lam = std::move(ll);
      return true;
    }
    return false;
  }
  return false;
}

}  // namespace

QpSolution solve_qp(const QpProblem& qp, const QpSettings& s, const QpWarmStart* warm) {
  qp.validate();
  const int n = qp.dim();
  const int mr = qp.rows();
  QpSolution out;

  if (mr == 0) {
    std::vector<char> none;
    Vec v, lam;
    if (!solve_active_kkt(qp, none, v, lam)) throw SolverError("solve_qp: unconstrained KKT solve failed");
    out.v = v;
    out.lambda = Vec::Zero(0);
    out.status = QpStatus::optimal;
    out.kkt = kkt_residuals(qp, out.v, out.lambda);
    out.objective = qp.objective(out.v);
    out.polished = true;
    return out;
  }

  double rho = s.rho;
  auto factor = [&](double r) {
    SpMat K = qp.P + SpMat(r * (qp.C.transpose() * qp.C));
    for (int i = 0; i < n; ++i) K.coeffRef(i, i) += s.sigma;
    auto f = std::make_unique<Eigen::SimplicialLLT<SpMat>>(K);
    if (f->info() != Eigen::Success) throw SolverError("solve_qp: ADMM factorization failed");
    return f;
  };
  auto llt = factor(rho);

  Vec x = Vec::Zero(n), y = Vec::Zero(mr);
  if (warm && warm->v.size() == n) x = warm->v;
  if (warm && warm->lambda.size() == mr) y = warm->lambda;
  Vec z = (qp.C * x).cwiseMin(qp.h);
  Vec y_prev = y;

  const double scale_q = std::max(1.0, inf_norm(qp.q));
  int last_polish = -1000000;

  auto try_finish = [&](int iter) -> bool {
    std::vector<char> active(mr, 0);
    for (int i = 0; i < mr; ++i) active[i] = (qp.h(i) - z(i) < y(i)) ? 1 : 0;
    Vec v, lam;
    if (refine(qp, active, s, v, lam)) {
      out.v = v;
      out.lambda = lam;
      out.polished = true;
      out.status = QpStatus::optimal;
      out.iterations = iter;
      return true;
    }
    const Vec lam0 = y.cwiseMax(0.0);
    if (kkt_residuals(qp, x, lam0).certified(s.feas_tol, s.kkt_tol)) {
      out.v = x;
      out.lambda = lam0;
      out.status = QpStatus::optimal;
      out.iterations = iter;
      return true;
    }
    return false;
  };

  for (int iter = 1; iter <= s.max_iter; ++iter) {
    const Vec rhs = s.sigma * x - qp.q + qp.C.transpose() * (rho * z - y);
    const Vec xt = llt->solve(rhs);
    const Vec zt = qp.C * xt;
    x = s.alpha * xt + (1.0 - s.alpha) * x;
    const Vec zh = s.alpha * zt + (1.0 - s.alpha) * z;
    const Vec zn = (zh + y / rho).cwiseMin(qp.h);
    y += rho * (zh - zn);
    z = zn;

    if (iter % s.check_every != 0 && iter != s.max_iter) continue;

    const Vec Cx = qp.C * x;
    const Vec Px = qp.P * x;
    const Vec Cty = qp.C.transpose() * y;
    out.primal_residual = inf_norm(Cx - z);
    out.dual_residual = inf_norm(Px + qp.q + Cty);
    if (s.trace) *s.trace << iter << ',' << rho << ',' << out.primal_residual << ',' << out.dual_residual << '\n';

    const double eps_p = s.eps_abs + s.eps_rel * std::max(inf_norm(Cx), inf_norm(z));
    const double eps_d = s.eps_abs + s.eps_rel * std::max({inf_norm(Px), inf_norm(Cty), inf_norm(qp.q)});

    const Vec dy = y - y_prev;
    y_prev = y;
    const double ndy = inf_norm(dy);
    if (ndy > 1e-12) {
      const double lhs = inf_norm(qp.C.transpose() * dy);
      const double support = qp.h.dot(dy.cwiseMax(0.0));
      if (lhs <= s.eps_infeasible * ndy && support < -s.eps_infeasible * ndy &&
          dy.minCoeff() >= -s.eps_infeasible * ndy) {
        out.v = x;
        out.lambda = dy / ndy;
        out.status = QpStatus::infeasible;
        out.iterations = iter;
        out.objective = qp.objective(x);
        return out;
      }
    }

    const bool converged = out.primal_residual <= eps_p && out.dual_residual <= eps_d;
    const bool near = out.primal_residual <= 1e-5 * std::max(1.0, inf_norm(qp.h)) &&
                      out.dual_residual <= 1e-5 * scale_q;
    if (converged || (near && iter - last_polish >= 200)) {
      last_polish = iter;
      if (try_finish(iter)) break;
    }

    const double num = out.primal_residual / std::max({inf_norm(Cx), inf_norm(z), 1e-12});
    const double den = out.dual_residual / std::max({inf_norm(Px), inf_norm(Cty), inf_norm(qp.q), 1e-12});
    if (den > 0.0 && num > 0.0) {
      const double rho_new = std::clamp(rho * std::sqrt(num / den), 1e-6, 1e6);
      if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
        rho = rho_new;
        llt = factor(rho);
      }
    }
    if (iter == s.max_iter) {
      out.v = x;
      out.lambda = y.cwiseMax(0.0);
      out.status = QpStatus::max_iter;
      out.iterations = iter;
    }
  }
  out.kkt = kkt_residuals(qp, out.v, out.lambda);
  out.objective = qp.objective(out.v);
  return out;
}

namespace {

// max c'x  s.t.  A x <= b, x >= 0, with b >= 0 so the slack basis is feasible.
struct SimplexResult {
  bool unbounded = false;
  Vec x;
  double value = 0.0;
  int pivots = 0;
};

// Rebuilds the tableau for `basis` from the original data: rows B^-1 [A I b], objective row
// c_B' B^-1 [A I] - [c 0] and value c_B' B^-1 b. Returns false when the basis is singular.
bool reinvert(const Mat& A, const Vec& b, const Vec& c, const std::vector<int>& basis, Mat& T) {
  const int m = static_cast<int>(A.rows());
  const int nx = static_cast<int>(A.cols());
  const int cols = nx + m + 1;
  Mat full = Mat::Zero(m, cols);
  full.leftCols(nx) = A;
  full.block(0, nx, m, m).setIdentity();
  full.col(cols - 1) = b;
  Mat B(m, m);
  Vec cB(m);
  for (int i = 0; i < m; ++i) {
    B.col(i) = full.col(basis[i]);
    cB(i) = basis[i] < nx ? c(basis[i]) : 0.0;
  }
  const Eigen::FullPivLU<Mat> lu(B);
  if (!lu.isInvertible()) return false;
  T.topRows(m) = lu.solve(full);
  T.row(m) = cB.transpose() * T.topRows(m);
  T.row(m).head(nx) -= c.transpose();
  return all_finite(T);
}

SimplexResult dense_simplex(const Mat& A, const Vec& b, const Vec& c, double tol) {
  const int m = static_cast<int>(A.rows());
  const int nx = static_cast<int>(A.cols());
  const int cols = nx + m + 1;
  Mat T = Mat::Zero(m + 1, cols);
  T.topLeftCorner(m, nx) = A;
  T.block(0, nx, m, m).setIdentity();
  T.col(cols - 1).head(m) = b;
  T.row(m).head(nx) = -c.transpose();
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = nx + i;

  SimplexResult res;
  double best = 0.0;
  int stall = 0;
  bool bland = false;
  const int max_pivots = 50 * (m + cols) + 1000;
  const double ftol = 1e-9;  // primal feasibility tolerance of the Harris ratio test
  constexpr int kReinvertEvery = 64;
  while (res.pivots < max_pivots) {
    int enter = -1;
    if (bland) {
      for (int j = 0; j < cols - 1; ++j)
        if (T(m, j) < -tol) {
          enter = j;
          break;
        }
    } else {
      double most = -tol;
      for (int j = 0; j < cols - 1; ++j)
        if (T(m, j) < most) {
          most = T(m, j);
          enter = j;
        }
    }
    if (enter < 0) break;
    // Pivots below ptol relative to the column are never taken.
    const double ptol = 1e-9 * std::max(1.0, T.col(enter).head(m).cwiseAbs().maxCoeff());
    int leave = -1;
    if (bland) {
      double ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i)
        if (T(i, enter) > ptol) ratio = std::min(ratio, std::max(T(i, cols - 1), 0.0) / T(i, enter));
      const double slack = 1e-12 * (1.0 + ratio);
      for (int i = 0; i < m; ++i) {
        const double a = T(i, enter);
        if (a <= ptol || std::max(T(i, cols - 1), 0.0) / a > ratio + slack) continue;
        if (leave < 0 || basis[i] < basis[leave]) leave = i;
      }
    } else {
      // Harris: bound the step with relaxed rows, then take the largest pivot within it.
      double theta = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i)
        if (T(i, enter) > ptol) theta = std::min(theta, (std::max(T(i, cols - 1), 0.0) + ftol) / T(i, enter));
      for (int i = 0; i < m; ++i) {
        const double a = T(i, enter);
        if (a <= ptol || std::max(T(i, cols - 1), 0.0) / a > theta) continue;
        if (leave < 0 || a > T(leave, enter)) leave = i;
      }
    }
    if (leave < 0) {
      res.unbounded = true;
      return res;
    }
    T.row(leave) /= T(leave, enter);
    for (int i = 0; i <= m; ++i)
      if (i != leave && T(i, enter) != 0.0) T.row(i) -= T(i, enter) * T.row(leave);
    basis[leave] = enter;
    ++res.pivots;
    if (res.pivots % kReinvertEvery == 0 && !reinvert(A, b, c, basis, T))
      throw SolverError("simplex: basis became singular");
    for (int i = 0; i < m; ++i)
      if (T(i, cols - 1) < 0.0 && T(i, cols - 1) > -ftol) T(i, cols - 1) = 0.0;
    const double val = T(m, cols - 1);
    if (val > best + 1e-12 * (1.0 + std::abs(best))) {
      best = val;
      stall = 0;
    } else if (++stall > 50) {
      bland = true;
    }
  }
  if (res.pivots >= max_pivots) throw SolverError("simplex: pivot limit reached");
  if (!reinvert(A, b, c, basis, T)) throw SolverError("simplex: final basis is singular");
  res.x = Vec::Zero(nx);
  for (int i = 0; i < m; ++i)
    if (basis[i] < nx) res.x(basis[i]) = std::max(T(i, cols - 1), 0.0);
  res.value = c.dot(res.x);
  return res;
}

}  // namespace

SlackLpResult maximize_min_slack(const SpMat& C, const Vec& h, double cap, double tol) {
  require(C.rows() == h.size(), "maximize_min_slack: C and h row counts differ");
  const int n = static_cast<int>(C.cols());
  const Mat Cd(C);
  SlackLpResult out;
  out.v = Vec::Zero(n);

  std::vector<int> keep;
  Vec s(C.rows());
  for (int r = 0; r < Cd.rows(); ++r) {
    s(r) = Cd.row(r).norm();
    if (s(r) > 0.0) {
      keep.push_back(r);
    } else if (h(r) < -tol) {
      out.feasible = false;
      out.slack = -std::numeric_limits<double>::infinity();
      return out;
    }
  }
  double T0 = 0.0;
  for (int r : keep) T0 = std::max(T0, -h(r) / s(r));

  const int m = static_cast<int>(keep.size()) + 1;
  Mat A = Mat::Zero(m, 2 * n + 1);
  Vec b(m);
  for (int k = 0; k < m - 1; ++k) {
    const int r = keep[k];
    A.block(k, 0, 1, n) = Cd.row(r);
    A.block(k, n, 1, n) = -Cd.row(r);
    A(k, 2 * n) = s(r);
    b(k) = std::max(0.0, h(r) + T0 * s(r));
  }
  A(m - 1, 2 * n) = 1.0;
  b(m - 1) = cap + T0;
  Vec c = Vec::Zero(2 * n + 1);
  c(2 * n) = 1.0;

  const SimplexResult sr = dense_simplex(A, b, c, 1e-11);
  if (sr.unbounded) throw SolverError("maximize_min_slack: phase-one LP reported unbounded");
  out.v = sr.x.head(n) - sr.x.segment(n, n);
  out.slack = sr.x(2 * n) - T0;
  out.pivots = sr.pivots;
  out.hit_cap = out.slack >= cap - tol;
  out.feasible = out.slack >= -tol;
  return out;
}

}  // namespace ogdbz
