#pragma once

// The square nonlinear collocation system: residual vector, analytic Jacobian
// and merit Hessian assembled from cached derivative matrices, interpolant
// enrichment with ancillary equations, and QR elimination of the linear block
// into the reduced coefficient space.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "kansa/common.hpp"
#include "kansa/geometry.hpp"
#include "kansa/kernels.hpp"

namespace kansa {

// Extra basis function appended to the RBF expansion (Motz singular function,
// constant augmentation). Gradient/Hessian are full 3-vectors / 3x3 with
// unused dimensions zero.
struct EnrichmentFunction {
  std::function<double(const Point&)> value;
  std::function<Point(const Point&)> gradient;
  std::function<Eigen::Matrix3d(const Point&)> hessian;
};

inline double eval_component(const EnrichmentFunction& h, const DifferentialComponent& comp,
                             const Point& x, int dim) {
  switch (comp.kind) {
    case DiffKind::Identity: return h.value(x);
    case DiffKind::FirstPartial: return h.gradient(x)[comp.i];
    case DiffKind::SecondPartial: return h.hessian(x)(comp.i, comp.j);
    case DiffKind::Laplacian: return h.hessian(x).topLeftCorner(dim, dim).trace();
  }
  throw ConfigError("unknown differential component");
}

inline EnrichmentFunction constant_enrichment() {
  return {[](const Point&) { return 1.0; },
          [](const Point&) { return Point::Zero().eval(); },
          [](const Point&) { return Eigen::Matrix3d::Zero().eval(); }};
}

// Harmonic singular functions h_k(r, theta) = r^((2k-1)/2) cos(((2k-1)/2) theta)
// in the local frame: theta = 0 along the Neumann edge, Dirichlet edge at
// theta = +-pi. They satisfy both adjacent homogeneous BCs identically.
// Derivative components of h_1 diverge at the singularity; such rows are
// never collocated there (the value itself is 0).
inline std::vector<EnrichmentFunction> motz_enrichment(int k_max, const MotzFrame& frame) {
  if (k_max < 0) throw ConfigError("motz_enrichment needs k_max >= 0");
  std::vector<EnrichmentFunction> out;
  for (int k = 1; k <= k_max; ++k) {
    const double lam = 0.5 * (2 * k - 1);
    const MotzFrame f = frame;
    auto local = [f](const Point& x, double& r, double& th) {
      const Point d = x - f.origin;
      const double xi = d.dot(f.edge_dir);
      const double eta = d.dot(f.into_domain);
      r = std::hypot(xi, eta);
      th = std::atan2(eta, xi);
    };
    EnrichmentFunction h;
    h.value = [local, lam](const Point& x) {
      double r, th;
      local(x, r, th);
      return std::pow(r, lam) * std::cos(lam * th);
    };
    h.gradient = [local, lam, f](const Point& x) {
      double r, th;
      local(x, r, th);
      const double m = lam * std::pow(r, lam - 1.0);
      const double dxi = m * std::cos((lam - 1.0) * th);
      const double deta = -m * std::sin((lam - 1.0) * th);
      return (dxi * f.edge_dir + deta * f.into_domain).eval();
    };
    h.hessian = [local, lam, f](const Point& x) {
      double r, th;
      local(x, r, th);
      const double m = lam * (lam - 1.0) * std::pow(r, lam - 2.0);
      const double hxx = m * std::cos((lam - 2.0) * th);
      const double hxy = -m * std::sin((lam - 2.0) * th);
      Eigen::Matrix3d H = hxx * (f.edge_dir * f.edge_dir.transpose() -
                                 f.into_domain * f.into_domain.transpose()) +
                          hxy * (f.edge_dir * f.into_domain.transpose() +
                                 f.into_domain * f.edge_dir.transpose());
      return H;
    };
    out.push_back(std::move(h));
  }
  return out;
}

inline std::vector<EnrichmentFunction> motz_enrichment(int k_max, const Point& singularity,
                                                       double edge_angle) {
  return motz_enrichment(k_max, MotzFrame::from_angle(singularity, edge_angle));
}

struct MotzConfig {
  int per_corner = 0;
  std::vector<MotzFrame> corners;
};

// G(t), G'(t), G''(t) for quasilinear operators div(G(|grad u|) grad u);
// used by the linearization validity checks.
struct QuasilinearProfile {
  std::function<double(double)> G, dG, ddG;
};

// A nonlinear elliptic boundary value problem in collocation form. The PDE
// residual and its first/second partials are functions of the component
// values D_1 u .. D_S u at a node; boundary conditions are linear and are
// eliminated rather than collocated nonlinearly.
struct ProblemDefinition {
  std::string name;
  int dim = 2;
  std::vector<DifferentialComponent> components;

  std::function<double(const Point&, const Vec&)> pde_residual;
  std::function<Vec(const Point&, const Vec&)> pde_d1;
  std::function<Mat(const Point&, const Vec&)> pde_d2;

  std::function<double(const Point&)> dirichlet_value;
  std::function<double(const Point&, const Point&)> neumann_value;  // (x, outward normal)

  std::function<double(const Point&)> exact_solution;  // may be null
  std::function<double(const Point&)> forcing;         // PDE right-hand side f; may be null

  // Operator-Newton linearization: coefficients multiplying each component of
  // the correction, written down independently of pde_d1.
  std::function<Vec(const Point&, const Vec&)> linearized_pde;

  std::optional<QuasilinearProfile> quasilinear;
  std::optional<MotzConfig> enrichment;

  int S() const { return int(components.size()); }
};

class CollocationSystem {
 public:
  static CollocationSystem build(const KernelSpec& spec, const Pointset& ps,
                                 const ProblemDefinition& prob, bool eliminate = true) {
    spec.validate();
    ps.validate();
    if (spec.dim != ps.dim || prob.dim != ps.dim)
      throw ConfigError("kernel/problem/pointset dimensions disagree");

    CollocationSystem sys;
    sys.kernel_ = spec;
    sys.ps_ = ps;
    sys.prob_ = prob;
    sys.eliminated_ = eliminate;

    // centres: nodes, then extra centres; unknowns: centres + enrichment.
    sys.centres_ = ps.nodes;
    sys.centres_.insert(sys.centres_.end(), ps.extra_centres.begin(), ps.extra_centres.end());
    if (prob.enrichment) {
      for (const MotzFrame& f : prob.enrichment->corners) {
        auto hs = motz_enrichment(prob.enrichment->per_corner, f);
        sys.enrich_.insert(sys.enrich_.end(), hs.begin(), hs.end());
      }
    }
    if (spec.augment_constant) sys.enrich_.push_back(constant_enrichment());

    const int n_centres = int(sys.centres_.size());
    const int n_enrich = int(sys.enrich_.size());
    const int n_u = n_centres + n_enrich;
    const int n_bc = ps.boundary_count();
    const int n_lin = n_bc + n_enrich;

    for (int i = 0; i < ps.size(); ++i)
      if (ps.pde_row_at(i)) sys.pde_rows_.push_back(i);
    const int n_pde = int(sys.pde_rows_.size());
    if (n_pde + n_lin != n_u)
      throw ConfigError("system is not square: " + std::to_string(n_pde + n_lin) + " rows vs " +
                        std::to_string(n_u) + " unknowns; extra centres must match "
                        "PDE-enforced boundary nodes");

    // derivative matrices over the PDE rows, cached once
    const int S = prob.S();
    sys.comp_full_.resize(S);
    for (int m = 0; m < S; ++m) {
      Mat& D = sys.comp_full_[m];
      D.resize(n_pde, n_u);
      for (int r = 0; r < n_pde; ++r) {
        const Point& x = ps.nodes[sys.pde_rows_[r]];
        for (int j = 0; j < n_centres; ++j)
          D(r, j) = eval_component(spec, prob.components[m], x, sys.centres_[j]);
        for (int k = 0; k < n_enrich; ++k)
          D(r, n_centres + k) = eval_component(sys.enrich_[k], prob.components[m], x, ps.dim);
      }
    }

    // linear block: boundary condition rows, then one ancillary row per
    // enrichment function constraining the RBF coefficients against it
    sys.B_.setZero(n_lin, n_u);
    sys.b_.setZero(n_lin);
    const DifferentialComponent ident = DifferentialComponent::identity();
    for (int k = 0; k < n_bc; ++k) {
      const int node = ps.interior + k;
      const Point& x = ps.nodes[node];
      if (tag_is_dirichlet(ps.tags[k])) {
        for (int j = 0; j < n_centres; ++j)
          sys.B_(k, j) = eval_component(spec, ident, x, sys.centres_[j]);
        for (int e = 0; e < n_enrich; ++e)
          sys.B_(k, n_centres + e) = sys.enrich_[e].value(x);
        sys.b_(k) = prob.dirichlet_value ? prob.dirichlet_value(x) : 0.0;
      } else {
        const Point& nrm = ps.normals[k];
        for (int j = 0; j < n_centres; ++j) {
          double v = 0.0;
          for (int a = 0; a < ps.dim; ++a)
            v += nrm[a] * eval_component(spec, DifferentialComponent::d(a), x, sys.centres_[j]);
          sys.B_(k, j) = v;
        }
        for (int e = 0; e < n_enrich; ++e)
          sys.B_(k, n_centres + e) = nrm.dot(sys.enrich_[e].gradient(x));
        sys.b_(k) = prob.neumann_value ? prob.neumann_value(x, nrm) : 0.0;
      }
    }
    for (int e = 0; e < n_enrich; ++e)
      for (int j = 0; j < n_centres; ++j)
        sys.B_(n_bc + e, j) = sys.enrich_[e].value(sys.centres_[j]);

    sys.factor_linear_block();
    sys.build_reduced_cache();
    return sys;
  }

  // --- dimensions and structure ---------------------------------------------

  int unknowns() const { return int(centres_.size() + enrich_.size()); }
  int reduced_dim() const { return int(Z_.cols()); }
  int pde_row_count() const { return int(pde_rows_.size()); }
  int linear_row_count() const { return int(B_.rows()); }
  bool eliminated() const { return eliminated_; }
  const std::vector<int>& pde_rows() const { return pde_rows_; }
  const Mat& linear_block() const { return B_; }
  const Vec& linear_rhs() const { return b_; }
  const Mat& null_basis() const { return Z_; }
  const Vec& particular() const { return particular_; }
  const Mat& component_matrix(int m) const { return comp_full_[m]; }
  const Pointset& pointset() const { return ps_; }
  const KernelSpec& kernel() const { return kernel_; }
  const ProblemDefinition& problem() const { return prob_; }
  const std::vector<Point>& centres() const { return centres_; }
  const std::vector<EnrichmentFunction>& enrichment_functions() const { return enrich_; }
  int enrichment_count() const { return int(enrich_.size()); }

  Vec alpha_of(const Vec& beta) const {
    if (!eliminated_) return beta;
    return particular_ + Z_ * beta;
  }
  Vec beta_of(const Vec& alpha) const {
    if (!eliminated_) return alpha;
    return Z_.transpose() * (alpha - particular_);
  }

  // --- evaluation -------------------------------------------------------------

  // Component values D_m u at every PDE row, one column per component.
  Mat nodal_values(const Vec& beta) const {
    check_dim(beta);
    Mat V(pde_row_count(), prob_.S());
    for (int m = 0; m < prob_.S(); ++m)
      V.col(m) = comp_part_[m] + comp_red_[m] * beta;
    return V;
  }

  Vec residual(const Vec& beta) const {
    const Mat V = nodal_values(beta);
    const int n_pde = pde_row_count();
    Vec W(eliminated_ ? n_pde : n_pde + linear_row_count());
    for (int r = 0; r < n_pde; ++r) {
      const double w = prob_.pde_residual(ps_.nodes[pde_rows_[r]], V.row(r).transpose());
      if (!std::isfinite(w))
        throw EvalError("non-finite residual at node " + std::to_string(pde_rows_[r]),
                        pde_rows_[r]);
      W(r) = w;
    }
    if (!eliminated_) W.tail(linear_row_count()) = B_ * beta - b_;
    return W;
  }

  Mat jacobian(const Vec& beta) const { return jacobian_from_values(nodal_values(beta)); }

  double merit(const Vec& beta) const {
    try {
      const Vec W = residual(beta);
      return 0.5 * W.squaredNorm();
    } catch (const EvalError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  void merit_and_grad(const Vec& beta, double& mu, Vec& grad) const {
    const Vec W = residual(beta);
    const Mat J = jacobian(beta);
    mu = 0.5 * W.squaredNorm();
    grad = J.transpose() * W;
  }

  // Merit Hessian in the active coefficient space. Assembled from the cached
  // derivative matrices with per-row curvature weights; optionally symmetrized
  // after assembly to scrub roundoff.
  Mat merit_hessian(const Vec& beta, bool symmetrize = true) const {
    const Mat V = nodal_values(beta);
    const int n_pde = pde_row_count();
    const int S = prob_.S();
    Mat d1(n_pde, S);
    Mat d2flat(n_pde, S * S);
    Vec W(n_pde);
    for (int r = 0; r < n_pde; ++r) {
      const Point& x = ps_.nodes[pde_rows_[r]];
      const Vec vals = V.row(r).transpose();
      const double w = prob_.pde_residual(x, vals);
      if (!std::isfinite(w))
        throw EvalError("non-finite residual at node " + std::to_string(pde_rows_[r]),
                        pde_rows_[r]);
      W(r) = w;
      d1.row(r) = prob_.pde_d1(x, vals).transpose();
      const Mat d2 = prob_.pde_d2(x, vals);
      for (int m = 0; m < S; ++m)
        for (int n = 0; n < S; ++n) d2flat(r, m * S + n) = d2(m, n);
    }
    const int n = int(comp_red_[0].cols());
    Mat H = Mat::Zero(n, n);
    Vec cvec(n_pde);
    for (int m = 0; m < S; ++m) {
      for (int nn = m; nn < S; ++nn) {
        cvec = d1.col(m).cwiseProduct(d1.col(nn)) + W.cwiseProduct(d2flat.col(m * S + nn));
        if (cvec.cwiseAbs().maxCoeff() == 0.0) continue;
        const Mat G = comp_red_[m].transpose() * (cvec.asDiagonal() * comp_red_[nn]);
        if (m == nn)
          H += G;
        else
          H += G + G.transpose();
      }
    }
    if (!eliminated_ && linear_row_count() > 0) H += B_.transpose() * B_;
    if (symmetrize) H = 0.5 * (H + H.transpose()).eval();
    return H;
  }

  // diag(H) without forming H; used by diagonal scaling.
  Vec hessian_diagonal(const Vec& beta) const {
    const Mat V = nodal_values(beta);
    const int n_pde = pde_row_count();
    const int S = prob_.S();
    Vec diag = Vec::Zero(comp_red_[0].cols());
    for (int r = 0; r < n_pde; ++r) {
      const Point& x = ps_.nodes[pde_rows_[r]];
      const Vec vals = V.row(r).transpose();
      const double w = prob_.pde_residual(x, vals);
      const Vec g1 = prob_.pde_d1(x, vals);
      const Mat g2 = prob_.pde_d2(x, vals);
      Vec jrow = Vec::Zero(diag.size());
      for (int m = 0; m < S; ++m) jrow += g1(m) * comp_red_[m].row(r).transpose();
      diag += jrow.cwiseAbs2();
      for (int m = 0; m < S; ++m)
        for (int nn = 0; nn < S; ++nn) {
          if (g2(m, nn) == 0.0) continue;
          diag += (w * g2(m, nn)) *
                  comp_red_[m].row(r).transpose().cwiseProduct(comp_red_[nn].row(r).transpose());
        }
    }
    if (!eliminated_ && linear_row_count() > 0)
      diag += B_.cwiseAbs2().colwise().sum().transpose();
    return diag;
  }

  // Finite-difference Jacobian: oracle and degraded baseline. step <= 0 picks
  // the cube-root-of-epsilon rule per coordinate; step_scale shrinks the step
  // uniformly (for Richardson extrapolation in the oracle).
  Mat fd_jacobian(const Vec& beta, double step = 0.0, bool central = true,
                  double step_scale = 1.0) const {
    check_dim(beta);
    const int n = int(beta.size());
    const Vec W0 = central ? Vec() : residual(beta);
    Mat J(eliminated_ ? pde_row_count() : pde_row_count() + linear_row_count(), n);
    Vec bp = beta;
    for (int j = 0; j < n; ++j) {
      const double h =
          step_scale * (step > 0.0 ? step : std::cbrt(std::numeric_limits<double>::epsilon()) *
                                                (1.0 + std::abs(beta(j))));
      if (central) {
        bp(j) = beta(j) + h;
        const Vec Wp = residual(bp);
        bp(j) = beta(j) - h;
        const Vec Wm = residual(bp);
        J.col(j) = (Wp - Wm) / (2.0 * h);
      } else {
        bp(j) = beta(j) + h;
        J.col(j) = (residual(bp) - W0) / h;
      }
      bp(j) = beta(j);
    }
    return J;
  }

  // --- evaluation off the collocation nodes ------------------------------------

  double component_at(const Point& x, const DifferentialComponent& comp, const Vec& alpha) const {
    double v = 0.0;
    for (size_t j = 0; j < centres_.size(); ++j)
      v += alpha(j) * eval_component(kernel_, comp, x, centres_[j]);
    for (size_t k = 0; k < enrich_.size(); ++k)
      v += alpha(centres_.size() + k) * eval_component(enrich_[k], comp, x, ps_.dim);
    return v;
  }

  double value_at(const Point& x, const Vec& alpha) const {
    return component_at(x, DifferentialComponent::identity(), alpha);
  }

  // PDE residual of the interpolant at an arbitrary point.
  double pde_residual_at(const Point& x, const Vec& alpha) const {
    Vec vals(prob_.S());
    for (int m = 0; m < prob_.S(); ++m) vals(m) = component_at(x, prob_.components[m], alpha);
    return prob_.pde_residual(x, vals);
  }

 private:
  void check_dim(const Vec& beta) const {
    const int expect = eliminated_ ? reduced_dim() : unknowns();
    if (int(beta.size()) != expect)
      throw ConfigError("coefficient vector has length " + std::to_string(beta.size()) +
                        ", expected " + std::to_string(expect));
  }

  Mat jacobian_from_values(const Mat& V) const {
    const int n_pde = pde_row_count();
    const int S = prob_.S();
    Mat d1(n_pde, S);
    for (int r = 0; r < n_pde; ++r)
      d1.row(r) = prob_.pde_d1(ps_.nodes[pde_rows_[r]], V.row(r).transpose()).transpose();
    const int n = int(comp_red_[0].cols());
    Mat J = Mat::Zero(eliminated_ ? n_pde : n_pde + linear_row_count(), n);
    for (int m = 0; m < S; ++m)
      J.topRows(n_pde) += d1.col(m).asDiagonal() * comp_red_[m];
    if (!eliminated_) J.bottomRows(linear_row_count()) = B_;
    return J;
  }

  void factor_linear_block() {
    const int n_u = unknowns();
    const int m = int(B_.rows());
    if (!eliminated_ || m == 0) {
      Z_ = Mat::Identity(n_u, n_u);
      particular_ = Vec::Zero(n_u);
      return;
    }
    // Column-pivoted QR of B'. Tiny trailing pivots are the hallmark of flat
    // kernels rather than genuine degeneracy, so the factorization proceeds;
    // the back substitution for the particular solution is truncated at the
    // roundoff floor of the pivot sequence, where dividing would only inject
    // noise into constraints already implied by the dominant ones.
    Eigen::ColPivHouseholderQR<Mat> qr(B_.transpose());
    const Mat Q = qr.householderQ();
    const Mat R = qr.matrixR().topLeftCorner(m, m).template triangularView<Eigen::Upper>();
    if (R.diagonal().cwiseAbs().maxCoeff() == 0.0)
      throw SolveError("degenerate linear block: zero triangular factor");
    const Mat Q1 = Q.leftCols(m);
    Z_ = Q.rightCols(n_u - m);
    const Vec pb = qr.colsPermutation().transpose() * b_;
    const double pivot_tol =
        std::numeric_limits<double>::epsilon() * R.diagonal().cwiseAbs().maxCoeff();
    int r = 0;
    while (r < m && std::abs(R(r, r)) > pivot_tol) ++r;
    if (r == 0) throw SolveError("degenerate linear block: no usable pivots");
    Vec y = Vec::Zero(m);
    y.head(r) = R.topLeftCorner(r, r)
                    .transpose()
                    .triangularView<Eigen::Lower>()
                    .solve(pb.head(r));
    particular_ = Q1 * y;
    if (!particular_.allFinite())
      throw SolveError("degenerate linear block: particular solution is not finite");
  }

  void build_reduced_cache() {
    const int S = prob_.S();
    comp_red_.resize(S);
    comp_part_.resize(S);
    for (int m = 0; m < S; ++m) {
      if (eliminated_) {
        comp_red_[m] = comp_full_[m] * Z_;
        comp_part_[m] = comp_full_[m] * particular_;
      } else {
        comp_red_[m] = comp_full_[m];
        comp_part_[m] = Vec::Zero(pde_row_count());
      }
    }
  }

  KernelSpec kernel_;
  Pointset ps_;
  ProblemDefinition prob_;
  bool eliminated_ = true;
  std::vector<Point> centres_;
  std::vector<EnrichmentFunction> enrich_;
  std::vector<int> pde_rows_;
  std::vector<Mat> comp_full_;  // PDE rows x unknowns, one per component
  std::vector<Mat> comp_red_;   // PDE rows x reduced dim
  std::vector<Vec> comp_part_;  // component values of the particular solution
  Mat B_;
  Vec b_;
  Mat Z_;
  Vec particular_;
};

inline CollocationSystem build_system(const KernelSpec& spec, const Pointset& ps,
                                      const ProblemDefinition& prob, bool eliminate = true) {
  return CollocationSystem::build(spec, ps, prob, eliminate);
}

// Merit/gradient/Jacobian provider handed to the trust-region solver.
// `use_fd_jacobian` switches to the finite-difference Jacobian baseline.
struct CollocationEvaluator {
  const CollocationSystem* sys = nullptr;
  bool use_fd_jacobian = false;
  double fd_step = 0.0;
  bool fd_central = false;

  int dim() const { return sys->eliminated() ? sys->reduced_dim() : sys->unknowns(); }
  double merit(const Vec& beta) const { return sys->merit(beta); }
  void eval(const Vec& beta, double& mu, Vec& grad, Mat& J) const {
    const Vec W = sys->residual(beta);
    J = use_fd_jacobian ? sys->fd_jacobian(beta, fd_step, fd_central) : sys->jacobian(beta);
    mu = 0.5 * W.squaredNorm();
    grad = J.transpose() * W;
  }
  Mat hessian(const Vec& beta) const { return sys->merit_hessian(beta); }
  Vec hessian_diag(const Vec& beta) const { return sys->hessian_diagonal(beta); }
};

}  // namespace kansa
