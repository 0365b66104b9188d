#pragma once

// Trust-region rootfinder on the sum-of-squares merit function, with three
// interchangeable subproblem solvers: dogleg (Gauss-Newton model), nearly
// exact (eigendecomposition + secular equation, hard case included) and
// two-dimensional subspace minimization. Optional diagonal scaling.

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

#include "kansa/common.hpp"

namespace kansa {

enum class TrsMethod { Dogleg, NearlyExact, TwoDSubspace };
enum class StepKind { Full, Dogleg, Cauchy, Boundary2D, NearlyExact };
enum class StopReason { Stagnated, MaxIter, NonFinite };

inline const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::Full: return "full";
    case StepKind::Dogleg: return "dogleg";
    case StepKind::Cauchy: return "cauchy";
    case StepKind::Boundary2D: return "boundary2d";
    case StepKind::NearlyExact: return "nearly_exact";
  }
  return "?";
}
inline const char* to_string(TrsMethod m) {
  switch (m) {
    case TrsMethod::Dogleg: return "dogleg";
    case TrsMethod::NearlyExact: return "nearly_exact";
    case TrsMethod::TwoDSubspace: return "two_d_subspace";
  }
  return "?";
}
inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Stagnated: return "stagnated";
    case StopReason::MaxIter: return "max_iter";
    case StopReason::NonFinite: return "non_finite";
  }
  return "?";
}

// Convergence is declared once the merit flattens at a negligible level:
// the relative drop over `window` accepted steps falls below `rel_drop`
// while mu < mu_floor_rel * max(1, mu0). The same flattening with a large
// merit is reported as stagnation. Two further triggers catch stalls that
// keep nibbling: `reject_window` consecutive rejected steps, and a merit
// that fails to drop below `slow_factor` of its value `slow_window`
// iterations ago.
struct StagnationRule {
  int window = 5;
  double rel_drop = 1e-3;
  double mu_floor_rel = 1e-12;
  int reject_window = 10;
  int slow_window = 80;
  double slow_factor = 0.15;
};

struct TrustRegionConfig {
  TrsMethod trs = TrsMethod::Dogleg;
  double delta0 = -1.0;     // <= 0 picks the default: 1 unscaled, 1e10 scaled
  double delta_max = -1.0;  // <= 0 picks 1e3 * delta0
  double eta = 1e-4;        // acceptance threshold, in [0, 1/4)
  bool scaling = false;
  int max_iter = 200;
  StagnationRule stagnation;
  double eig_tol = 1e-14;       // singularity tolerance for 2Dsub, relative to max |eigenvalue|
  double boundary_tol = 1e-10;  // |step norm - delta| <= tol * delta counts as boundary
  bool record_iterates = false;

  double initial_delta() const { return delta0 > 0.0 ? delta0 : (scaling ? 1e10 : 1.0); }
  double max_delta() const { return delta_max > 0.0 ? delta_max : 1e3 * initial_delta(); }
  void validate() const {
    if (!(initial_delta() > 0.0) || initial_delta() > max_delta())
      throw ConfigError("require 0 < delta0 <= delta_max");
    if (eta < 0.0 || eta >= 0.25) throw ConfigError("eta must lie in [0, 1/4)");
    if (max_iter < 1) throw ConfigError("max_iter must be positive");
  }
};

struct IterationRecord {
  int k = 0;
  double mu = 0.0;     // merit at the end of the iteration
  double delta = 0.0;  // radius used for this step
  double rho = 0.0;
  double step_norm = 0.0;
  StepKind kind = StepKind::Cauchy;
  bool accepted = false;
  std::optional<bool> hessian_pd;
};

struct SolveReport {
  std::vector<IterationRecord> trace;
  Vec final_beta;
  double initial_mu = 0.0;
  double final_mu = 0.0;
  bool converged = false;
  StopReason reason = StopReason::MaxIter;
  int iterations = 0;
  int accepted_steps = 0;
  double cond_J_final = std::numeric_limits<double>::quiet_NaN();
  std::vector<Vec> iterates;  // accepted iterates, when recorded
};

// --- subproblem steps -----------------------------------------------------------

// Constrained minimizer of the model along steepest descent; gAg = g'Ag.
inline Vec cauchy_step(const Vec& grad, double gAg, double delta) {
  const double gn = grad.norm();
  if (!(gn > 0.0)) throw SolveError("cauchy_step requires a nonzero gradient");
  double tau = 1.0;
  if (gAg > 0.0) tau = std::min(gn * gn * gn / (delta * gAg), 1.0);
  return (-tau * delta / gn) * grad;
}

inline Vec cauchy_step(const Vec& grad, const Mat& A, double delta) {
  return cauchy_step(grad, grad.dot(A * grad), delta);
}

struct StepResult {
  Vec step;
  StepKind kind = StepKind::Cauchy;
  bool ok = true;  // false: caller should fall back to the Cauchy step
  double lambda = 0.0;
  std::optional<bool> hessian_pd;
};

// Dogleg with A = J'J, never formed: the full step comes from one column-
// pivoted QR of J and two triangular solves (J'y = -g, then J gamma = y).
inline StepResult dogleg_step(const Vec& grad, const Mat& J, double delta) {
  StepResult res;
  if (J.rows() != J.cols()) throw ConfigError("dogleg_step expects a square Jacobian");
  const int n = int(J.cols());
  Eigen::ColPivHouseholderQR<Mat> qr(J);
  if (qr.rank() < n) {
    res.ok = false;
    return res;
  }
  const Mat R = qr.matrixR().topLeftCorner(n, n).template triangularView<Eigen::Upper>();
  Vec y = R.transpose().triangularView<Eigen::Lower>().solve(
      Vec(qr.colsPermutation().transpose() * (-grad)));
  y = qr.householderQ() * y;
  const Vec gamma_F = qr.solve(y);
  if (!gamma_F.allFinite()) {
    res.ok = false;
    return res;
  }
  if (gamma_F.norm() <= delta) {
    res.step = gamma_F;
    res.kind = StepKind::Full;
    return res;
  }
  const Vec Jg = J * grad;
  const double gAg = Jg.squaredNorm();
  if (!(gAg > 0.0)) {
    res.ok = false;
    return res;
  }
  const Vec gu = -(grad.squaredNorm() / gAg) * grad;
  const double gu_norm = gu.norm();
  if (gu_norm >= delta) {
    // trust region boundary cuts the steepest-descent leg
    res.step = (delta / gu_norm) * gu;
    res.kind = StepKind::Cauchy;
    return res;
  }
  const Vec d = gamma_F - gu;
  const double a = d.squaredNorm();
  const double b = 2.0 * gu.dot(d);
  const double c = gu.squaredNorm() - delta * delta;
  const double disc = b * b - 4.0 * a * c;
  if (!(a > 0.0) || disc < 0.0) {
    res.ok = false;
    return res;
  }
  double s = (-b + std::sqrt(disc)) / (2.0 * a);
  s = std::clamp(s, 0.0, 1.0);
  res.step = gu + s * d;
  res.kind = StepKind::Dogleg;
  return res;
}

namespace detail {

// Nearly exact subproblem solution from an eigendecomposition of H:
// (H + lambda I) gamma = -g with lambda >= max(0, -lambda_min),
// ||gamma|| <= delta and lambda * (delta - ||gamma||) ~ 0. The hard case
// (gradient orthogonal to the bottom eigenspace) adds the boundary-reaching
// multiple of the bottom eigenvector.
inline StepResult trs_from_eigen(const Vec& lam, const Mat& V, const Vec& grad, double delta) {
  StepResult res;
  const int n = int(lam.size());
  const Vec a = V.transpose() * grad;
  const double lam_min = lam.minCoeff();
  const double scale = std::max({std::abs(lam_min), std::abs(lam.maxCoeff()), 1.0});
  res.hessian_pd = lam_min > 0.0;

  if (lam_min > 0.0) {
    const Vec gamma = -(V * (a.array() / lam.array()).matrix());
    if (gamma.norm() <= delta) {
      res.step = gamma;
      res.kind = StepKind::Full;
      res.lambda = 0.0;
      return res;
    }
  }

  const double lam_lo = std::max(0.0, -lam_min);
  const double gap_tol = 1e-12 * scale;

  if (lam_min <= 0.0) {
    // split the projected gradient into bottom-eigenspace and regular parts
    double sing2 = 0.0, perp2 = 0.0;
    Vec coef = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
      const double gap = lam(i) + lam_lo;
      if (gap <= gap_tol) {
        sing2 += a(i) * a(i);
      } else {
        coef(i) = a(i) / gap;
        perp2 += coef(i) * coef(i);
      }
    }
    if (std::sqrt(sing2) <= 1e-11 * std::max(grad.norm(), 1e-300) && std::sqrt(perp2) <= delta) {
      // hard case
      int imin = 0;
      lam.minCoeff(&imin);
      const double t = std::sqrt(std::max(0.0, delta * delta - perp2));
      res.step = -(V * coef) + t * V.col(imin);
      res.kind = StepKind::NearlyExact;
      res.lambda = lam_lo;
      return res;
    }
  }

  // secular equation: find lambda > lam_lo with ||gamma(lambda)|| = delta,
  // via safeguarded Newton on 1/||gamma|| - 1/delta
  auto norm2_at = [&](double l) {
    return (a.array() / (lam.array() + l)).matrix().squaredNorm();
  };
  double lo = lam_lo;
  double hi = lam_lo + grad.norm() / delta + scale;
  while (norm2_at(hi) > delta * delta) hi = lam_lo + 2.0 * (hi - lam_lo);
  double l = std::min(hi, lo + grad.norm() / delta + 1e-3 * scale);
  for (int it = 0; it < 100; ++it) {
    const double n2 = norm2_at(l);
    const double nn = std::sqrt(n2);
    if (std::abs(nn - delta) <= 1e-12 * delta) break;
    if (nn > delta)
      lo = l;
    else
      hi = l;
    double dn2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = lam(i) + l;
      dn2 += -2.0 * a(i) * a(i) / (d * d * d);
    }
    const double phi = 1.0 / nn - 1.0 / delta;
    const double dphi = -0.5 * dn2 / (n2 * nn);
    double lnext = l - phi / dphi;
    if (!(lnext > lo) || !(lnext < hi)) lnext = 0.5 * (lo + hi);
    l = lnext;
  }
  res.step = -(V * (a.array() / (lam.array() + l)).matrix());
  res.kind = StepKind::NearlyExact;
  res.lambda = l;
  return res;
}

// Exact minimizer of the model on a 1D line span{s}, ||step|| <= delta.
inline Vec line_min(const Vec& g, const Mat& H, const Vec& s_unit, double delta) {
  const double gs = g.dot(s_unit);
  const double shs = s_unit.dot(H * s_unit);
  double t;
  if (shs > 0.0) {
    t = std::clamp(-gs / shs, -delta, delta);
  } else {
    t = gs <= 0.0 ? delta : -delta;
  }
  return t * s_unit;
}

inline StepResult twod_from_eigen(const Vec& lam, const Mat& V, const Mat& H, const Vec& grad,
                                  double delta, double eig_tol_rel) {
  StepResult res;
  const Vec a = V.transpose() * grad;
  const double lam1 = lam.minCoeff();
  const double tol = eig_tol_rel * std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  res.hessian_pd = lam1 > 0.0;

  // exact minimizer of the model on span{grad, b} within the ball
  auto subspace_min = [&](const Vec& b) {
    const Vec s1 = grad.normalized();
    Vec s2 = b - b.dot(s1) * s1;
    const double s2n = s2.norm();
    if (s2n <= 1e-14 * b.norm()) return line_min(grad, H, s1, delta);
    s2 /= s2n;
    Mat P(grad.size(), 2);
    P.col(0) = s1;
    P.col(1) = s2;
    const Vec g2 = P.transpose() * grad;
    Mat A2 = P.transpose() * H * P;
    A2 = 0.5 * (A2 + A2.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es2(A2);
    const StepResult inner = trs_from_eigen(es2.eigenvalues(), es2.eigenvectors(), g2, delta);
    return Vec(P * inner.step);
  };
  auto model = [&](const Vec& s) { return grad.dot(s) + 0.5 * s.dot(H * s); };

  if (lam1 > tol) {
    const Vec gamma_F = -(V * (a.array() / lam.array()).matrix());
    if (gamma_F.norm() <= delta) {
      res.step = gamma_F;
      res.kind = StepKind::Full;
      return res;
    }
    res.step = subspace_min(gamma_F);
    res.kind = StepKind::Boundary2D;
    return res;
  }
  if (std::abs(lam1) <= tol) {
    // numerically singular Hessian
    const double gHg = (lam.array() * a.array().square()).sum();
    res.step = cauchy_step(grad, gHg, delta);
    res.kind = StepKind::Cauchy;
    return res;
  }
  // indefinite: shift just past the bottom eigenvalue
  const double nu = 1.5 * lam1;
  const Vec p = -(V * (a.array() / (lam.array() - nu)).matrix());
  if (p.norm() <= delta) {
    int imin = 0;
    lam.minCoeff(&imin);
    Vec q = V.col(imin);
    if (q.dot(grad) > 0.0) q = -q;  // descent orientation
    const double pq = p.dot(q);
    const double v = -pq + std::sqrt(std::max(0.0, pq * pq + delta * delta - p.squaredNorm()));
    const Vec candidate = p + v * q;
    // the boundary correction alone does not dominate the Cauchy point;
    // keep whichever of it and the subspace minimizer models lower
    const Vec sub = subspace_min(p);
    res.step = model(candidate) <= model(sub) ? candidate : sub;
    res.kind = StepKind::Boundary2D;
    return res;
  }
  res.step = subspace_min(p);
  res.kind = StepKind::Boundary2D;
  return res;
}

}  // namespace detail

inline StepResult nearly_exact_step(const Vec& grad, const Mat& H, double delta) {
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  if (es.info() != Eigen::Success) throw SolveError("symmetric eigendecomposition failed");
  return detail::trs_from_eigen(es.eigenvalues(), es.eigenvectors(), grad, delta);
}

inline StepResult twod_subspace_step(const Vec& grad, const Mat& H, double delta,
                                     double eig_tol_rel = 1e-14) {
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  if (es.info() != Eigen::Success)  // fall back to the nearly exact path
    return nearly_exact_step(grad, H, delta);
  return detail::twod_from_eigen(es.eigenvalues(), es.eigenvectors(), H, grad, delta, eig_tol_rel);
}

inline double trust_ratio(double mu_old, double mu_new, double model_drop) {
  if (!(model_drop > 0.0) || !std::isfinite(model_drop))
    throw SolveError("trust-region step produced a nonpositive model decrease");
  if (!std::isfinite(mu_new)) return -std::numeric_limits<double>::infinity();
  return (mu_old - mu_new) / model_drop;
}

// Diagonal rescaling of the coefficient space; entries clamped away from zero.
struct ScalingTransform {
  Vec gamma;
  Vec unscale(const Vec& step) const { return step.cwiseQuotient(gamma); }
};

inline ScalingTransform make_scaling(const Vec& hess_diag, double clamp_rel = 1e-8) {
  const double top = hess_diag.cwiseAbs().maxCoeff();
  if (!(top > 0.0)) return {Vec::Ones(hess_diag.size())};
  return {hess_diag.cwiseAbs().cwiseMax(clamp_rel * top)};
}

inline void apply_scaling(const ScalingTransform& t, Mat* J, Mat* H, Vec* grad) {
  const auto inv = t.gamma.cwiseInverse();
  if (J) *J = (*J * inv.asDiagonal()).eval();
  if (H) *H = (inv.asDiagonal() * (*H) * inv.asDiagonal()).eval();
  if (grad) *grad = grad->cwiseQuotient(t.gamma);
}

// --- the solver loop -------------------------------------------------------------

// Provider contract:
//   double merit(const Vec&)                              (+inf on evaluation failure)
//   void eval(const Vec&, double& mu, Vec& g, Mat& J)
//   Mat hessian(const Vec&)
//   Vec hessian_diag(const Vec&)
template <class Provider>
SolveReport trust_region_solve(const Provider& f, const TrustRegionConfig& cfg, const Vec& beta0) {
  cfg.validate();
  SolveReport rep;
  Vec x = beta0;
  double mu = 0.0;
  Vec g;
  Mat J;
  f.eval(x, mu, g, J);
  if (!std::isfinite(mu)) throw EvalError("non-finite merit at the initial guess", -1);
  rep.initial_mu = mu;
  const double mu_floor = cfg.stagnation.mu_floor_rel * std::max(1.0, mu);
  // residual components bottom out at relative roundoff, so the merit cannot
  // meaningfully drop below eps^2 times its initial scale
  const double mu_zero = 16.0 * std::pow(std::numeric_limits<double>::epsilon(), 2) *
                         std::max(1.0, mu);
  const bool needs_hessian = cfg.trs != TrsMethod::Dogleg || cfg.scaling;

  double delta = cfg.initial_delta();
  Mat H;
  ScalingTransform scal{Vec()};
  Vec gs;
  Mat Js, Hs;
  Eigen::SelfAdjointEigenSolver<Mat> es;

  auto refresh = [&]() {
    if (cfg.scaling)
      scal = make_scaling(f.hessian_diag(x));
    else
      scal = ScalingTransform{Vec::Ones(x.size())};
    gs = g.cwiseQuotient(scal.gamma);
    if (cfg.trs == TrsMethod::Dogleg) {
      Js = J * scal.gamma.cwiseInverse().asDiagonal();
    }
    if (needs_hessian) {
      H = f.hessian(x);
      Hs = scal.gamma.cwiseInverse().asDiagonal() * H * scal.gamma.cwiseInverse().asDiagonal();
      if (cfg.trs != TrsMethod::Dogleg) {
        es.compute(Hs);
        if (es.info() != Eigen::Success) throw SolveError("eigendecomposition failed");
      }
    }
  };
  refresh();
  if (cfg.record_iterates) rep.iterates.push_back(x);

  std::deque<double> accepted_mu{mu};
  int since_accept = 0;
  rep.reason = StopReason::MaxIter;

  for (int k = 1; k <= cfg.max_iter; ++k) {
    rep.iterations = k;
    if (mu <= mu_zero) {
      rep.reason = StopReason::Stagnated;
      rep.converged = true;
      break;
    }
    const double gn = gs.norm();
    if (!(gn > 0.0) || !std::isfinite(gn)) {
      rep.reason = std::isfinite(gn) ? StopReason::Stagnated : StopReason::NonFinite;
      rep.converged = std::isfinite(gn) && mu < mu_floor;
      break;
    }

    StepResult sr;
    switch (cfg.trs) {
      case TrsMethod::Dogleg:
        sr = dogleg_step(gs, Js, delta);
        if (!sr.ok) {
          sr.step = cauchy_step(gs, (Js * gs).squaredNorm(), delta);
          sr.kind = StepKind::Cauchy;
          sr.ok = true;
        }
        break;
      case TrsMethod::NearlyExact:
        sr = detail::trs_from_eigen(es.eigenvalues(), es.eigenvectors(), gs, delta);
        break;
      case TrsMethod::TwoDSubspace:
        sr = detail::twod_from_eigen(es.eigenvalues(), es.eigenvectors(), Hs, gs, delta,
                                     cfg.eig_tol);
        break;
    }

    auto model_drop_of = [&](const Vec& s) {
      if (cfg.trs == TrsMethod::Dogleg) return -(gs.dot(s) + 0.5 * (Js * s).squaredNorm());
      return -(gs.dot(s) + 0.5 * s.dot(Hs * s));
    };
    double model_drop = model_drop_of(sr.step);
    if (!(model_drop > 0.0) || !std::isfinite(model_drop)) {
      // retry with the Cauchy point before concluding the model is exhausted
      const double gAg = cfg.trs == TrsMethod::Dogleg ? (Js * gs).squaredNorm()
                                                      : double(gs.dot(Hs * gs));
      sr.step = cauchy_step(gs, gAg, delta);
      sr.kind = StepKind::Cauchy;
      model_drop = model_drop_of(sr.step);
    }
    if (!(model_drop > 0.0) || !std::isfinite(model_drop)) {
      // the model cannot decrease any further at floating-point resolution
      rep.reason = StopReason::Stagnated;
      rep.converged = mu < mu_floor;
      break;
    }

    const Vec step = scal.unscale(sr.step);
    const double mu_trial = f.merit(x + step);
    const double rho = trust_ratio(mu, mu_trial, model_drop);
    const double snorm = sr.step.norm();
    const double delta_used = delta;

    if (rho < 0.25) {
      delta *= 0.25;
    } else if (rho > 0.75 && std::abs(snorm - delta) <= cfg.boundary_tol * delta) {
      delta = std::min(2.0 * delta, cfg.max_delta());
    }

    const bool accept = rho > cfg.eta;
    if (accept) {
      x += step;
      try {
        f.eval(x, mu, g, J);
      } catch (const EvalError&) {
        rep.reason = StopReason::NonFinite;
        rep.converged = false;
        rep.trace.push_back({k, mu_trial, delta_used, rho, snorm, sr.kind, true, sr.hessian_pd});
        break;
      }
      refresh();
      ++rep.accepted_steps;
      since_accept = 0;
      accepted_mu.push_back(mu);
      if (int(accepted_mu.size()) > cfg.stagnation.window + 1) accepted_mu.pop_front();
      if (cfg.record_iterates) rep.iterates.push_back(x);
    } else {
      ++since_accept;
    }
    rep.trace.push_back({k, mu, delta_used, rho, snorm, sr.kind, accept, sr.hessian_pd});

    bool flat = false;
    if (int(accepted_mu.size()) == cfg.stagnation.window + 1) {
      const double drop = accepted_mu.front() - accepted_mu.back();
      flat = drop < cfg.stagnation.rel_drop * accepted_mu.front();
    }
    if (since_accept >= cfg.stagnation.reject_window) flat = true;
    if (int(rep.trace.size()) > cfg.stagnation.slow_window) {
      const double ref = rep.trace[rep.trace.size() - 1 - cfg.stagnation.slow_window].mu;
      if (mu > cfg.stagnation.slow_factor * ref) flat = true;
    }
    if (flat) {
      rep.reason = StopReason::Stagnated;
      rep.converged = mu < mu_floor;
      break;
    }
  }

  rep.final_beta = x;
  rep.final_mu = mu;
  return rep;
}

}  // namespace kansa
