#include "ogdbz/projection.hpp"

#include <Eigen/QR>

#include <cmath>
#include <sstream>

namespace ogdbz {

const char* to_string(ProjectionPath p) {
  switch (p) {
    case ProjectionPath::identity: return "identity";
    case ProjectionPath::warm_start: return "warm_start";
    case ProjectionPath::active_set: return "active_set";
    case ProjectionPath::splitting: return "splitting";
  }
  return "unknown";
}

namespace {

bool same_terms(const AbsGroup& a, const AbsGroup& b) {
  if (a.weight != b.weight || a.A.rows() != b.A.rows() || a.buffered != b.buffered ||
      a.base_rhs != b.base_rhs)
    return false;
  for (Eigen::Index l = 0; l < a.A.rows(); ++l) {
    const bool plus = (a.A.row(l) - b.A.row(l)).cwiseAbs().maxCoeff() == 0.0 && a.b(l) == b.b(l);
    const bool minus = (a.A.row(l) + b.A.row(l)).cwiseAbs().maxCoeff() == 0.0 && a.b(l) == -b.b(l);
    if (!plus && !minus) return false;
  }
  return true;
}

Mat stack(const std::vector<OmegaProjector::Row>& rows, int dim) {
  Mat N(dim, static_cast<Eigen::Index>(rows.size()));
  for (size_t j = 0; j < rows.size(); ++j) N.col(static_cast<Eigen::Index>(j)) = rows[j].e;
  return N;
}

}  // namespace

OmegaProjector::OmegaProjector(LiftedPolytope poly, QpSettings settings)
    : poly_(std::move(poly)), settings_(settings) {
  const LiftedLayout& L = poly_.layout;
  Vec weights = Vec::Constant(L.dim, kAuxRegularization);
  weights.head(L.n_M).setOnes();
  qp_ = QpProblem::projection(weights, Vec::Zero(L.dim), poly_.C, poly_.h);
  const int G = static_cast<int>(poly_.groups.size());
  alias_.resize(G);
  for (int g = 0; g < G; ++g) {
    alias_[g] = g;
    for (int r = 0; r < g; ++r)
      if (alias_[r] == r && same_terms(poly_.groups[g], poly_.groups[r])) {
        alias_[g] = r;
        break;
      }
  }
}

double OmegaProjector::scale_tol(const Vec& m0) const {
  return 0.01 * settings_.feas_tol * (1.0 + m0.cwiseAbs().maxCoeff());
}

OmegaProjector::Row OmegaProjector::make_row(int g, const Vec& m) const {
  const AbsGroup& grp = poly_.groups[g];
  Row row;
  row.group = g;
  row.e = Vec::Zero(m.size());
  row.f = poly_.group_rhs(grp);
  row.sign.resize(grp.A.rows());
  const Vec val = grp.A * m + grp.b;
  for (Eigen::Index l = 0; l < val.size(); ++l) {
    if (grp.A.row(l).squaredNorm() == 0.0) {
      row.sign[l] = grp.b(l) >= 0.0 ? 1 : -1;
      row.f -= grp.weight * std::abs(grp.b(l));
      continue;
    }
    const int s = val(l) >= 0.0 ? 1 : -1;
    row.sign[l] = static_cast<signed char>(s);
    row.e += (grp.weight * s) * grp.A.row(l).transpose();
    row.f -= grp.weight * s * grp.b(l);
  }
  return row;
}

bool OmegaProjector::dual_active_set(const Vec& m0, Vec& m, std::vector<Row>& active, Vec& u,
                                     int& iters) const {
  const int dim = static_cast<int>(m0.size());
  const int G = static_cast<int>(poly_.groups.size());
  const double tol = scale_tol(m0);
  m = m0;
  active.clear();
  u.resize(0);
  while (iters < max_iterations) {
    int worst = -1;
    double viol = tol;
    for (int g = 0; g < G; ++g) {
      if (alias_[g] != g) continue;
      const double v = poly_.group_value(poly_.groups[g], m) - poly_.group_rhs(poly_.groups[g]);
      if (v > viol) {
        viol = v;
        worst = g;
      }
    }
    if (worst < 0) return true;
    const Row p = make_row(worst, m);
    double up = 0.0;
    for (;;) {
      if (++iters > max_iterations) return false;
      const int q = static_cast<int>(active.size());
      Vec z = -p.e;
      Vec r(q);
      if (q > 0) {
        const Mat N = stack(active, dim);
        const Eigen::HouseholderQR<Mat> qr(N);
        const Mat Q1 = qr.householderQ() * Mat::Identity(dim, q);
        const Mat R = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
        const Vec proj = Q1.transpose() * p.e;
        r = R.triangularView<Eigen::Upper>().solve(proj);
        z = -(p.e - Q1 * proj);
      }
      double t1 = std::numeric_limits<double>::infinity();
      int k = -1;
      for (int j = 0; j < q; ++j)
        if (r(j) > 1e-14 && u(j) / r(j) < t1) {
          t1 = u(j) / r(j);
          k = j;
        }
      const double zz = z.squaredNorm();
      const double v = p.e.dot(m) - p.f;
      const double t2 = zz > 1e-24 * std::max(1.0, p.e.squaredNorm())
                            ? std::max(v, 0.0) / zz
                            : std::numeric_limits<double>::infinity();
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) return false;  // the violated row is implied infeasible
      if (q > 0) u -= t * r;
      up += t;
      if (std::isfinite(t2)) m += t * z;
      if (std::isfinite(t2) && t2 <= t1) {
        active.push_back(p);
        u.conservativeResize(q + 1);
        u(q) = up;
        break;
      }
      active.erase(active.begin() + k);
      Vec u2(q - 1);
      for (int j = 0, c = 0; j < q; ++j)
        if (j != k) u2(c++) = u(j);
      u = u2;
    }
  }
  return false;
}

bool OmegaProjector::equality_solve(const Vec& m0, const std::vector<Row>& rows, Vec& m,
                                    Vec& u) const {
  const int dim = static_cast<int>(m0.size());
  const int q = static_cast<int>(rows.size());
  if (q == 0 || q > dim) return false;
  const Mat N = stack(rows, dim);
  Vec f(q);
  for (int j = 0; j < q; ++j) f(j) = rows[j].f;
  const Eigen::ColPivHouseholderQR<Mat> qr(N);
  if (qr.rank() < q) return false;
  // m = m0 - N u with N' m = f.
  const Mat NtN = N.transpose() * N;
  u = NtN.ldlt().solve(N.transpose() * m0 - f);
  m = m0 - N * u;
  return all_finite(u) && (N.transpose() * m - f).cwiseAbs().maxCoeff() <= scale_tol(m0);
}

void OmegaProjector::assemble(const Vec& m, const std::vector<Row>& active, const Vec& u,
                              ProjectionResult& res) const {
  const LiftedLayout& L = poly_.layout;
  res.lifted = Vec::Zero(L.dim);
  res.lifted.head(L.n_M) = m;
  res.lambda = Vec::Zero(L.rows);
  const int G = static_cast<int>(poly_.groups.size());
  std::vector<double> lam(G, 0.0);
  std::vector<Vec> mu_plus(G), mu_minus(G);
  for (int g = 0; g < G; ++g) {
    mu_plus[g] = Vec::Zero(poly_.groups[g].A.rows());
    mu_minus[g] = Vec::Zero(poly_.groups[g].A.rows());
  }
  for (size_t j = 0; j < active.size(); ++j) {
    const Row& row = active[j];
    const AbsGroup& grp = poly_.groups[row.group];
    const double uj = std::max(u(static_cast<Eigen::Index>(j)), 0.0);
    lam[row.group] += uj;
    for (Eigen::Index l = 0; l < grp.A.rows(); ++l) {
      if (grp.A.row(l).squaredNorm() == 0.0) continue;
      (row.sign[l] > 0 ? mu_plus : mu_minus)[row.group](l) += grp.weight * uj;
    }
  }
  for (int g = 0; g < G; ++g) {
    const AbsGroup& grp = poly_.groups[g];
    const Vec val = grp.A * m + grp.b;
    res.lambda(grp.sum_row) = lam[g];
    for (Eigen::Index t = 0; t < val.size(); ++t) {
      const double Y = std::abs(val(t));
      res.lifted(poly_.term_var(grp, static_cast<int>(t))) = Y;
      double mp = mu_plus[g](t), mm = mu_minus[g](t);
      if (grp.A.row(t).squaredNorm() == 0.0) (grp.b(t) >= 0.0 ? mp : mm) += lam[g] * grp.weight;
      (val(t) >= 0.0 ? mp : mm) += kAuxRegularization * Y;
      res.lambda(grp.abs_row + 2 * t) = mp;
      res.lambda(grp.abs_row + 2 * t + 1) = mm;
    }
  }
  res.M = poly_.policy_block(res.lifted);
}

bool OmegaProjector::certify(const Vec& m0, ProjectionResult& res) {
  qp_.q.head(m0.size()) = -m0;
  res.kkt = kkt_residuals(qp_, res.lifted, res.lambda);
  return res.kkt.certified(settings_.feas_tol, settings_.kkt_tol);
}

ProjectionResult OmegaProjector::project(const DacPolicy& target) {
  const LiftedLayout& L = poly_.layout;
  require(target.H == L.H && target.m() == L.m && target.n() == L.n,
          "OmegaProjector::project: policy shape does not match the polytope");
  const Vec m0 = target.flatten();
  require(all_finite(m0), "OmegaProjector::project: non-finite target");
  ProjectionResult res;
  auto finish = [&](ProjectionPath path, std::int64_t& counter) {
    res.path = path;
    ++counter;
    stats_.iterations += res.iterations;
    stats_.worst_kkt = std::max(stats_.worst_kkt, res.kkt.worst_kkt());
    stats_.worst_infeasibility = std::max(stats_.worst_infeasibility, res.kkt.primal_infeasibility);
    return res;
  };

  if (poly_.worst_slack(m0) >= 0.0) {
    assemble(m0, {}, Vec(), res);
    if (certify(m0, res)) return finish(ProjectionPath::identity, stats_.identity);
  }

  Vec m, u;
  if (!warm_.empty() && equality_solve(m0, warm_, m, u) && u.minCoeff() >= 0.0 &&
      poly_.worst_slack(m) >= -scale_tol(m0)) {
    assemble(m, warm_, u, res);
    if (certify(m0, res)) return finish(ProjectionPath::warm_start, stats_.warm_start);
  }

  std::vector<Row> active;
  int iters = 0;
  const bool ok = dual_active_set(m0, m, active, u, iters);
  res.iterations = iters;
  if (ok) {
    assemble(m, active, u, res);
    if (certify(m0, res)) {
      warm_ = std::move(active);
      return finish(ProjectionPath::active_set, stats_.active_set);
    }
  }

  qp_.q.head(m0.size()) = -m0;
  const QpSolution sol = solve_qp(qp_, settings_, have_lifted_warm_ ? &lifted_warm_ : nullptr);
  res.iterations += sol.iterations;
  if (sol.status == QpStatus::infeasible) throw InfeasibleError("projection: lifted polytope is empty");
  if (sol.status == QpStatus::optimal) {
    res.lifted = sol.v;
    res.lambda = sol.lambda;
    res.M = poly_.policy_block(sol.v);
    res.kkt = sol.kkt;
    lifted_warm_ = {sol.v, sol.lambda};
    have_lifted_warm_ = true;
    warm_.clear();
    return finish(ProjectionPath::splitting, stats_.splitting);
  }
  std::ostringstream os;
  os << "projection not certified: active-set " << (ok ? "converged" : "failed") << " after "
     << iters << " iterations; splitting status " << to_string(sol.status) << ", primal residual "
     << sol.primal_residual << ", dual residual " << sol.dual_residual;
  throw SolverError(os.str());
}

DacPolicy project_onto_omega(const DacPolicy& target, const LiftedPolytope& poly) {
  OmegaProjector proj(poly);
  return proj.project(target).M;
}

NonemptyResult solve_feasibility_lp(const LiftedPolytope& poly) {
  NonemptyResult r = check_nonempty(poly);
  if (r.degenerate) throw SolverError("feasibility LP: slack unbounded, constraint data is degenerate");
  if (!r.nonempty) {
    std::ostringstream os;
    os << "Omega_epsilon is empty at epsilon = " << poly.epsilon << " (max min slack "
       << r.max_min_slack << ")";
    throw InfeasibleError(os.str());
  }
  if (poly.worst_slack(r.witness.flatten()) < -1e-9)
    throw SolverError("feasibility LP: witness fails the direct membership check");
  return r;
}

}  // namespace ogdbz
