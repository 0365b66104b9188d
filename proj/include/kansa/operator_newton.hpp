#pragma once

// Operator-Newton baseline: iterate linear collocation solves of the
// linearized boundary value problem, updating the coefficients in the full
// (uneliminated) space. Also the discrepancy check against the analytic
// Jacobian and the quasilinear linearization validity tests.

#include <cmath>
#include <vector>

#include "kansa/system.hpp"

namespace kansa {

namespace detail {

inline Mat full_nodal_values(const CollocationSystem& sys, const Vec& alpha) {
  const int S = sys.problem().S();
  Mat V(sys.pde_row_count(), S);
  for (int m = 0; m < S; ++m) V.col(m) = sys.component_matrix(m) * alpha;
  return V;
}

// PDE rows of the linearized collocation matrix, from the problem's
// closed-form linearization.
inline Mat linearized_pde_rows(const CollocationSystem& sys, const Vec& alpha) {
  const ProblemDefinition& prob = sys.problem();
  if (!prob.linearized_pde)
    throw ConfigError("problem '" + prob.name + "' provides no linearized operator");
  const Mat V = full_nodal_values(sys, alpha);
  const int n_pde = sys.pde_row_count();
  Mat L = Mat::Zero(n_pde, sys.unknowns());
  for (int r = 0; r < n_pde; ++r) {
    const Point& x = sys.pointset().nodes[sys.pde_rows()[r]];
    const Vec coef = prob.linearized_pde(x, V.row(r).transpose());
    for (int m = 0; m < prob.S(); ++m)
      if (coef(m) != 0.0) L.row(r) += coef(m) * sys.component_matrix(m).row(r);
  }
  return L;
}

inline Vec full_residual(const CollocationSystem& sys, const Vec& alpha) {
  const ProblemDefinition& prob = sys.problem();
  const Mat V = full_nodal_values(sys, alpha);
  const int n_pde = sys.pde_row_count();
  Vec W(n_pde + sys.linear_row_count());
  for (int r = 0; r < n_pde; ++r)
    W(r) = prob.pde_residual(sys.pointset().nodes[sys.pde_rows()[r]], V.row(r).transpose());
  W.tail(sys.linear_row_count()) = sys.linear_block() * alpha - sys.linear_rhs();
  return W;
}

}  // namespace detail

// One linearized collocation solve: residuals, dense LU with partial
// pivoting, coefficient update.
inline Vec newton_iterate(const CollocationSystem& sys, const Vec& alpha) {
  const int n_u = sys.unknowns();
  if (int(alpha.size()) != n_u) throw ConfigError("newton_iterate expects full-space coefficients");
  const int n_pde = sys.pde_row_count();
  Mat L(n_u, n_u);
  L.topRows(n_pde) = detail::linearized_pde_rows(sys, alpha);
  L.bottomRows(sys.linear_row_count()) = sys.linear_block();
  const Vec W = detail::full_residual(sys, alpha);
  if (!W.allFinite()) throw SolveError("operator-Newton residual is not finite");
  Eigen::PartialPivLU<Mat> lu(L);
  const Vec gamma = lu.solve(-W);
  if (!gamma.allFinite()) throw SolveError("linearized collocation matrix is singular");
  return alpha + gamma;
}

// Max relative entrywise difference between the linearized collocation matrix
// and the analytic Jacobian over the nonlinear rows, full space.
inline double check_newton_equivalence(const CollocationSystem& sys, const Vec& alpha) {
  const ProblemDefinition& prob = sys.problem();
  const Mat L = detail::linearized_pde_rows(sys, alpha);
  const Mat V = detail::full_nodal_values(sys, alpha);
  Mat Jnl = Mat::Zero(sys.pde_row_count(), sys.unknowns());
  for (int r = 0; r < sys.pde_row_count(); ++r) {
    const Point& x = sys.pointset().nodes[sys.pde_rows()[r]];
    const Vec d1 = prob.pde_d1(x, V.row(r).transpose());
    for (int m = 0; m < prob.S(); ++m)
      if (d1(m) != 0.0) Jnl.row(r) += d1(m) * sys.component_matrix(m).row(r);
  }
  return (L - Jnl).cwiseAbs().maxCoeff() / Jnl.cwiseAbs().maxCoeff();
}

struct OperatorNewtonOptions {
  int max_iter = 80;
  double rc_tol = 1e-14;             // stop once RMS of the collocation residual is below
  double divergence_factor = 1e6;    // flag divergence past this growth of the initial RMS
  double converged_tol = 1e-12;
};

struct OperatorNewtonReport {
  std::vector<double> rms_rc;  // collocation residual per iteration, entry 0 = initial
  Vec alpha;
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
};

inline OperatorNewtonReport operator_newton_solve(const CollocationSystem& sys, Vec alpha,
                                                  const OperatorNewtonOptions& opt = {}) {
  OperatorNewtonReport rep;
  auto rms = [&](const Vec& a) {
    const Vec W = detail::full_residual(sys, a);
    return std::sqrt(W.squaredNorm() / W.size());
  };
  double r0 = rms(alpha);
  rep.rms_rc.push_back(r0);
  for (int k = 1; k <= opt.max_iter; ++k) {
    rep.iterations = k;
    try {
      alpha = newton_iterate(sys, alpha);
    } catch (const SolveError&) {
      rep.diverged = true;
      break;
    }
    double r = rms(alpha);
    if (!std::isfinite(r)) {
      rep.rms_rc.push_back(std::numeric_limits<double>::infinity());
      rep.diverged = true;
      break;
    }
    rep.rms_rc.push_back(r);
    if (r > opt.divergence_factor * std::max(r0, 1e-300)) {
      rep.diverged = true;
      break;
    }
    if (r < opt.rc_tol) break;
  }
  rep.alpha = alpha;
  rep.converged = !rep.diverged && rep.rms_rc.back() <= opt.converged_tol;
  return rep;
}

struct LinearizationReport {
  int nodes_checked = 0;
  std::vector<int> linearization_violations;  // |G'(t)| > 1/t^2
  std::vector<int> ellipticity_violations;    // G + t G' <= 0
};

// Evaluate the small-increment linearization condition and the ellipticity of
// the linearized operator at every interior node for the current iterate.
inline LinearizationReport check_linearization_validity(const CollocationSystem& sys,
                                                        const Vec& alpha) {
  const ProblemDefinition& prob = sys.problem();
  if (!prob.quasilinear) throw ConfigError("problem '" + prob.name + "' is not quasilinear");
  int ix = -1, iy = -1;
  for (int m = 0; m < prob.S(); ++m) {
    if (prob.components[m].kind == DiffKind::FirstPartial) {
      if (prob.components[m].i == 0) ix = m;
      if (prob.components[m].i == 1) iy = m;
    }
  }
  if (ix < 0 || iy < 0) throw ConfigError("quasilinear check needs both gradient components");
  const Mat V = detail::full_nodal_values(sys, alpha);
  LinearizationReport rep;
  const auto& q = *prob.quasilinear;
  for (int r = 0; r < sys.pde_row_count(); ++r) {
    const int node = sys.pde_rows()[r];
    if (sys.pointset().is_boundary(node)) continue;
    ++rep.nodes_checked;
    const double t = std::hypot(V(r, ix), V(r, iy));
    if (!(t > 0.0)) continue;
    if (std::abs(q.dG(t)) * t * t > 1.0) rep.linearization_violations.push_back(node);
    if (q.G(t) + t * q.dG(t) <= 0.0) rep.ellipticity_violations.push_back(node);
  }
  return rep;
}

}  // namespace kansa
