#pragma once

// The four benchmark problems: cubic semilinear diffusion, Plateau's minimal
// surface on a disc, Hele-Shaw p-Laplacian flow in a mold, and the
// Monge-Ampere equation in 2D/3D. Each carries the residual, its first and
// second partials with respect to the differential components, the
// closed-form linearized operator, and the exact solution where known.
// Initial-guess strategies (zero, Gaussian, Laplacian, Poisson) live here too.

#include <cmath>
#include <numbers>
#include <random>

#include "kansa/operator_newton.hpp"
#include "kansa/system.hpp"

namespace kansa {

enum class ProblemId { CubicSemilinear, Plateau, HeleShawPLaplace, MongeAmpere2D, MongeAmpere3D };

inline const char* to_string(ProblemId id) {
  switch (id) {
    case ProblemId::CubicSemilinear: return "cubic";
    case ProblemId::Plateau: return "plateau";
    case ProblemId::HeleShawPLaplace: return "hele_shaw";
    case ProblemId::MongeAmpere2D: return "monge_ampere_2d";
    case ProblemId::MongeAmpere3D: return "monge_ampere_3d";
  }
  return "?";
}

// --- Example I: lap(u) - u^3 = f on the unit square ------------------------------

inline ProblemDefinition cubic_semilinear() {
  ProblemDefinition p;
  p.name = "cubic";
  p.dim = 2;
  p.components = {DifferentialComponent::identity(), DifferentialComponent::laplacian()};
  auto uex = [](const Point& x) {
    return std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]);
  };
  auto f = [uex](const Point& x) {
    const double u = uex(x);
    return -2.0 * std::numbers::pi * std::numbers::pi * u - u * u * u;
  };
  p.pde_residual = [f](const Point& x, const Vec& v) {
    return v(1) - v(0) * v(0) * v(0) - f(x);
  };
  p.pde_d1 = [](const Point&, const Vec& v) {
    Vec d(2);
    d << -3.0 * v(0) * v(0), 1.0;
    return d;
  };
  p.pde_d2 = [](const Point&, const Vec& v) {
    Mat d = Mat::Zero(2, 2);
    d(0, 0) = -6.0 * v(0);
    return d;
  };
  p.dirichlet_value = [](const Point&) { return 0.0; };
  p.exact_solution = uex;
  p.forcing = f;
  p.linearized_pde = [](const Point&, const Vec& v) {
    Vec c(2);
    c << -3.0 * v(0) * v(0), 1.0;  // lap - 3 u^2 I
    return c;
  };
  return p;
}

// --- Example II: Plateau / minimal surface on a disc of radius pi/2 - s -----------

inline double plateau_radius(double s) { return 0.5 * std::numbers::pi - s; }

inline ProblemDefinition plateau(double s) {
  if (!(s > 0.0) || !(s < 0.5 * std::numbers::pi))
    throw std::domain_error("plateau requires 0 < s < pi/2");
  ProblemDefinition p;
  p.name = "plateau";
  p.dim = 2;
  // value, gradient, second derivatives; the value itself never enters the PDE
  p.components = {DifferentialComponent::identity(),  DifferentialComponent::d(0),
                  DifferentialComponent::d(1),        DifferentialComponent::d2(0, 0),
                  DifferentialComponent::d2(0, 1),    DifferentialComponent::d2(1, 1)};
  enum { U, UX, UY, UXX, UXY, UYY };
  p.pde_residual = [](const Point&, const Vec& v) {
    const double g2 = v(UX) * v(UX) + v(UY) * v(UY);
    const double inf_lap = v(UX) * v(UX) * v(UXX) + 2.0 * v(UX) * v(UY) * v(UXY) +
                           v(UY) * v(UY) * v(UYY);
    return (1.0 + g2) * (v(UXX) + v(UYY)) - inf_lap;
  };
  p.pde_d1 = [](const Point&, const Vec& v) {
    Vec d = Vec::Zero(6);
    d(UX) = 2.0 * v(UX) * v(UYY) - 2.0 * v(UY) * v(UXY);
    d(UY) = 2.0 * v(UY) * v(UXX) - 2.0 * v(UX) * v(UXY);
    d(UXX) = 1.0 + v(UY) * v(UY);
    d(UXY) = -2.0 * v(UX) * v(UY);
    d(UYY) = 1.0 + v(UX) * v(UX);
    return d;
  };
  p.pde_d2 = [](const Point&, const Vec& v) {
    Mat d = Mat::Zero(6, 6);
    d(UX, UX) = 2.0 * v(UYY);
    d(UY, UY) = 2.0 * v(UXX);
    d(UX, UY) = d(UY, UX) = -2.0 * v(UXY);
    d(UX, UXY) = d(UXY, UX) = -2.0 * v(UY);
    d(UY, UXY) = d(UXY, UY) = -2.0 * v(UX);
    d(UX, UYY) = d(UYY, UX) = 2.0 * v(UX);
    d(UY, UXX) = d(UXX, UY) = 2.0 * v(UY);
    return d;
  };
  auto uex = [](const Point& x) { return std::log(std::cos(x[0]) / std::cos(x[1])); };
  p.dirichlet_value = uex;
  p.exact_solution = uex;
  // Frechet derivative of the residual, assembled from the Laplacian and
  // infinity-Laplacian increments rather than the d1 table.
  p.linearized_pde = [](const Point&, const Vec& v) {
    const double lap = v(UXX) + v(UYY);
    Vec c = Vec::Zero(6);
    c(UXX) = (1.0 + v(UX) * v(UX) + v(UY) * v(UY)) - v(UX) * v(UX);
    c(UYY) = (1.0 + v(UX) * v(UX) + v(UY) * v(UY)) - v(UY) * v(UY);
    c(UXY) = -2.0 * v(UX) * v(UY);
    c(UX) = 2.0 * v(UX) * lap - (2.0 * v(UX) * v(UXX) + 2.0 * v(UY) * v(UXY));
    c(UY) = 2.0 * v(UY) * lap - (2.0 * v(UY) * v(UYY) + 2.0 * v(UX) * v(UXY));
    return c;
  };
  p.quasilinear = QuasilinearProfile{
      [](double t) { return 1.0 / std::sqrt(1.0 + t * t); },
      [](double t) { return -t * std::pow(1.0 + t * t, -1.5); },
      [](double t) { return (2.0 * t * t - 1.0) * std::pow(1.0 + t * t, -2.5); }};
  return p;
}

// --- Example III: Hele-Shaw p-Laplacian flow --------------------------------------

// Gradient-magnitude guard: the p-Laplacian residual divides by |grad u|, so
// evaluations clamp it away from zero rather than produce NaN mid-iteration.
inline constexpr double kGradGuard = 1e-12;

inline ProblemDefinition hele_shaw(double gamma, const MoldGeometry& geom,
                                   int motz_per_corner = 0) {
  if (!(gamma > -1.0)) throw std::domain_error("hele_shaw requires gamma > -1");
  ProblemDefinition prob;
  prob.name = "hele_shaw";
  prob.dim = 2;
  prob.components = {DifferentialComponent::d(0), DifferentialComponent::d(1),
                     DifferentialComponent::d2(0, 0), DifferentialComponent::d2(0, 1),
                     DifferentialComponent::d2(1, 1)};
  enum { UX, UY, UXX, UXY, UYY };
  const double p = gamma + 2.0;
  const double q = p - 2.0;
  prob.pde_residual = [p, q](const Point&, const Vec& v) {
    const double t = std::max(std::hypot(v(UX), v(UY)), kGradGuard);
    const double lap = v(UXX) + v(UYY);
    const double inf_lap = v(UX) * v(UX) * v(UXX) + 2.0 * v(UX) * v(UY) * v(UXY) +
                           v(UY) * v(UY) * v(UYY);
    return std::pow(t, p - 2.0) * lap + q * std::pow(t, p - 4.0) * inf_lap;
  };
  prob.pde_d1 = [p, q](const Point&, const Vec& v) {
    const double t = std::max(std::hypot(v(UX), v(UY)), kGradGuard);
    const double lap = v(UXX) + v(UYY);
    const double dinf = v(UX) * v(UX) * v(UXX) + 2.0 * v(UX) * v(UY) * v(UXY) +
                        v(UY) * v(UY) * v(UYY);
    const double T0 = std::pow(t, p - 2.0);
    const double T2 = std::pow(t, p - 4.0);
    const double T4 = std::pow(t, p - 6.0);
    const double px = 2.0 * (v(UX) * v(UXX) + v(UY) * v(UXY));
    const double py = 2.0 * (v(UY) * v(UYY) + v(UX) * v(UXY));
    Vec d(5);
    d(UX) = q * T2 * v(UX) * lap + q * (p - 4.0) * T4 * v(UX) * dinf + q * T2 * px;
    d(UY) = q * T2 * v(UY) * lap + q * (p - 4.0) * T4 * v(UY) * dinf + q * T2 * py;
    d(UXX) = T0 + q * T2 * v(UX) * v(UX);
    d(UXY) = 2.0 * q * T2 * v(UX) * v(UY);
    d(UYY) = T0 + q * T2 * v(UY) * v(UY);
    return d;
  };
  prob.pde_d2 = [p, q](const Point&, const Vec& v) {
    const double ux = v(UX), uy = v(UY);
    const double t = std::max(std::hypot(ux, uy), kGradGuard);
    const double lap = v(UXX) + v(UYY);
    const double dinf = ux * ux * v(UXX) + 2.0 * ux * uy * v(UXY) + uy * uy * v(UYY);
    const double T2 = std::pow(t, p - 4.0);
    const double T4 = std::pow(t, p - 6.0);
    const double T6 = std::pow(t, p - 8.0);
    const double px = 2.0 * (ux * v(UXX) + uy * v(UXY));
    const double py = 2.0 * (uy * v(UYY) + ux * v(UXY));
    const double p4 = p - 4.0, p6 = p - 6.0;
    Mat d = Mat::Zero(5, 5);
    d(UX, UX) = q * lap * (T2 + p4 * T4 * ux * ux) + q * p4 * dinf * (T4 + p6 * T6 * ux * ux) +
                2.0 * q * p4 * T4 * ux * px + 2.0 * q * T2 * v(UXX);
    d(UY, UY) = q * lap * (T2 + p4 * T4 * uy * uy) + q * p4 * dinf * (T4 + p6 * T6 * uy * uy) +
                2.0 * q * p4 * T4 * uy * py + 2.0 * q * T2 * v(UYY);
    d(UX, UY) = q * p4 * T4 * ux * uy * lap + q * p4 * p6 * T6 * ux * uy * dinf +
                q * p4 * T4 * (ux * py + uy * px) + 2.0 * q * T2 * v(UXY);
    d(UX, UXX) = 3.0 * q * T2 * ux + q * p4 * T4 * ux * ux * ux;
    d(UX, UYY) = q * T2 * ux + q * p4 * T4 * ux * uy * uy;
    d(UX, UXY) = 2.0 * q * T2 * uy + 2.0 * q * p4 * T4 * ux * ux * uy;
    d(UY, UYY) = 3.0 * q * T2 * uy + q * p4 * T4 * uy * uy * uy;
    d(UY, UXX) = q * T2 * uy + q * p4 * T4 * uy * ux * ux;
    d(UY, UXY) = 2.0 * q * T2 * ux + 2.0 * q * p4 * T4 * uy * uy * ux;
    d(UY, UX) = d(UX, UY);
    d(UXX, UX) = d(UX, UXX);
    d(UYY, UX) = d(UX, UYY);
    d(UXY, UX) = d(UX, UXY);
    d(UYY, UY) = d(UY, UYY);
    d(UXX, UY) = d(UY, UXX);
    d(UXY, UY) = d(UY, UXY);
    return d;
  };
  prob.dirichlet_value = [geom](const Point& x) { return geom.on_front(x) ? 0.0 : 1.0; };
  prob.neumann_value = [](const Point&, const Point&) { return 0.0; };
  // linearized operator in the expanded coefficient form, rows scaled back by
  // |grad u|^3 so the matrix matches the Frechet derivative of the residual
  prob.linearized_pde = [p, q](const Point&, const Vec& v) {
    const double ux = v(UX), uy = v(UY);
    const double t = std::max(std::hypot(ux, uy), kGradGuard);
    const double t2 = t * t, t3 = t * t * t;
    const double G = std::pow(t, p - 2.0);
    const double dG = q * std::pow(t, p - 3.0);
    const double ddG = q * (p - 3.0) * std::pow(t, p - 4.0);
    const double dinf = ux * ux * v(UXX) + 2.0 * ux * uy * v(UXY) + uy * uy * v(UYY);
    const double A = G * t3 + dG * t2 * ux * ux;
    const double B = 2.0 * dG * t2 * ux * uy;
    const double C = G * t3 + dG * t2 * uy * uy;
    const double D = (ddG * t * dinf + dG * t2 * (3.0 * v(UXX) + v(UYY)) - dG * dinf) * ux +
                     2.0 * dG * t2 * v(UXY) * uy;
    const double E = (ddG * t * dinf + dG * t2 * (3.0 * v(UYY) + v(UXX)) - dG * dinf) * uy +
                     2.0 * dG * t2 * v(UXY) * ux;
    Vec c(5);
    c << D / t3, E / t3, A / t3, B / t3, C / t3;
    return c;
  };
  prob.quasilinear = QuasilinearProfile{[p](double t) { return std::pow(t, p - 2.0); },
                                        [p, q](double t) { return q * std::pow(t, p - 3.0); },
                                        [p, q](double t) {
                                          return q * (p - 3.0) * std::pow(t, p - 4.0);
                                        }};
  return prob;
}

// --- Example IV: Monge-Ampere ------------------------------------------------------

inline ProblemDefinition monge_ampere(int dim) {
  if (dim != 2 && dim != 3) throw ConfigError("monge_ampere supports dim 2 or 3");
  ProblemDefinition p;
  p.name = dim == 2 ? "monge_ampere_2d" : "monge_ampere_3d";
  p.dim = dim;
  auto uex = [](const Point& x) { return std::exp(0.5 * x.squaredNorm()); };
  p.exact_solution = uex;
  p.dirichlet_value = uex;
  if (dim == 2) {
    p.components = {DifferentialComponent::d2(0, 0), DifferentialComponent::d2(0, 1),
                    DifferentialComponent::d2(1, 1)};
    enum { UXX, UXY, UYY };
    auto f = [](const Point& x) {
      const double r2 = x.squaredNorm();
      return (1.0 + r2) * std::exp(r2);
    };
    p.forcing = f;
    p.pde_residual = [f](const Point& x, const Vec& v) {
      return v(UXX) * v(UYY) - v(UXY) * v(UXY) - f(x);
    };
    p.pde_d1 = [](const Point&, const Vec& v) {
      Vec d(3);
      d << v(UYY), -2.0 * v(UXY), v(UXX);
      return d;
    };
    p.pde_d2 = [](const Point&, const Vec&) {
      Mat d = Mat::Zero(3, 3);
      d(UXX, UYY) = d(UYY, UXX) = 1.0;
      d(UXY, UXY) = -2.0;
      return d;
    };
    p.linearized_pde = [](const Point&, const Vec& v) {
      // u_yy dxx + u_xx dyy - 2 u_xy dxy
      Vec c(3);
      c << v(UYY), -2.0 * v(UXY), v(UXX);
      return c;
    };
  } else {
    p.components = {DifferentialComponent::d2(0, 0), DifferentialComponent::d2(1, 1),
                    DifferentialComponent::d2(2, 2), DifferentialComponent::d2(0, 1),
                    DifferentialComponent::d2(0, 2), DifferentialComponent::d2(1, 2)};
    enum { A, B, C, D, E, F };  // uxx uyy uzz uxy uxz uyz
    auto f3 = [](const Point& x) {
      const double r2 = x.squaredNorm();
      return (1.0 + r2) * std::exp(1.5 * r2);
    };
    p.forcing = f3;
    p.pde_residual = [f3](const Point& x, const Vec& v) {
      return v(A) * v(B) * v(C) + 2.0 * v(D) * v(E) * v(F) - v(A) * v(F) * v(F) -
             v(B) * v(E) * v(E) - v(C) * v(D) * v(D) - f3(x);
    };
    p.pde_d1 = [](const Point&, const Vec& v) {
      Vec d(6);
      d << v(B) * v(C) - v(F) * v(F), v(A) * v(C) - v(E) * v(E), v(A) * v(B) - v(D) * v(D),
          2.0 * (v(E) * v(F) - v(C) * v(D)), 2.0 * (v(D) * v(F) - v(B) * v(E)),
          2.0 * (v(D) * v(E) - v(A) * v(F));
      return d;
    };
    p.pde_d2 = [](const Point&, const Vec& v) {
      Mat d = Mat::Zero(6, 6);
      auto set = [&](int i, int j, double val) { d(i, j) = d(j, i) = val; };
      set(A, B, v(C));
      set(A, C, v(B));
      set(B, C, v(A));
      set(A, F, -2.0 * v(F));
      set(B, E, -2.0 * v(E));
      set(C, D, -2.0 * v(D));
      set(D, E, 2.0 * v(F));
      set(D, F, 2.0 * v(E));
      set(E, F, 2.0 * v(D));
      d(D, D) = -2.0 * v(C);
      d(E, E) = -2.0 * v(B);
      d(F, F) = -2.0 * v(A);
      return d;
    };
    p.linearized_pde = [](const Point&, const Vec& v) {
      // cofactors of the Hessian matrix of the current iterate
      Eigen::Matrix3d M;
      M << v(A), v(D), v(E), v(D), v(B), v(F), v(E), v(F), v(C);
      auto cof = [&](int i, int j) {
        const int r0 = (i + 1) % 3, r1 = (i + 2) % 3;
        const int c0 = (j + 1) % 3, c1 = (j + 2) % 3;
        return M(r0, c0) * M(r1, c1) - M(r0, c1) * M(r1, c0);
      };
      Vec c(6);
      c << cof(0, 0), cof(1, 1), cof(2, 2), 2.0 * cof(0, 1), 2.0 * cof(0, 2), 2.0 * cof(1, 2);
      return c;
    };
  }
  return p;
}

// --- initial guesses ----------------------------------------------------------------

enum class GuessStrategy { Zero, GaussianRandom, Laplacian, Poisson };

inline const char* to_string(GuessStrategy g) {
  switch (g) {
    case GuessStrategy::Zero: return "zero";
    case GuessStrategy::GaussianRandom: return "gaussian";
    case GuessStrategy::Laplacian: return "laplacian";
    case GuessStrategy::Poisson: return "poisson";
  }
  return "?";
}

struct GuessSpec {
  GuessStrategy strategy = GuessStrategy::Zero;
  unsigned seed = 0;
  double poisson_coeff = -1.0;  // < 0: use the spatial dimension
};

// Deterministic standard normals (Box-Muller over mt19937_64); identical
// across platforms, unlike std::normal_distribution.
inline Vec gaussian_vector(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() { return double(rng() >> 11) * 0x1.0p-53; };
  Vec v(n);
  int i = 0;
  while (i < n) {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    v(i++) = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i < n) v(i++) = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  return v;
}

// Solve the linear collocation problem lap(u) = rhs with the problem's
// boundary conditions on the same centres; returns full-space coefficients.
inline Vec solve_linear_collocation(const CollocationSystem& sys,
                                    const std::function<double(const Point&)>& rhs) {
  const KernelSpec& spec = sys.kernel();
  const Pointset& ps = sys.pointset();
  const int n_u = sys.unknowns();
  const int n_pde = sys.pde_row_count();
  Mat L(n_u, n_u);
  Vec r(n_u);
  const DifferentialComponent lap = DifferentialComponent::laplacian();
  const int n_centres = int(sys.centres().size());
  for (int row = 0; row < n_pde; ++row) {
    const Point& x = ps.nodes[sys.pde_rows()[row]];
    for (int j = 0; j < n_centres; ++j)
      L(row, j) = eval_component(spec, lap, x, sys.centres()[j]);
    for (int k = n_centres; k < n_u; ++k)
      L(row, k) = eval_component(sys.enrichment_functions()[k - n_centres], lap, x, ps.dim);
    r(row) = rhs ? rhs(x) : 0.0;
  }
  L.bottomRows(sys.linear_row_count()) = sys.linear_block();
  r.tail(sys.linear_row_count()) = sys.linear_rhs();
  // minimum-norm solve: guess systems built from flat kernels can be
  // numerically rank-deficient, where plain LU returns enormous coefficients
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(L);
  const Vec alpha = cod.solve(r);
  if (!alpha.allFinite()) throw SolveError("linear collocation matrix for the guess is singular");
  return alpha;
}

// Linear Kansa solve for a guess, carried out in the active coefficient
// space: with elimination on, the boundary conditions are already built into
// the manifold and only the Laplacian rows are solved, which stays sound even
// when the full square system is numerically rank-deficient.
inline Vec solve_linear_guess(const CollocationSystem& sys,
                              const std::function<double(const Point&)>& rhs) {
  if (!sys.eliminated()) return solve_linear_collocation(sys, rhs);
  const KernelSpec& spec = sys.kernel();
  const Pointset& ps = sys.pointset();
  const int n_pde = sys.pde_row_count();
  const int n_u = sys.unknowns();
  const int n_centres = int(sys.centres().size());
  const DifferentialComponent lap = DifferentialComponent::laplacian();
  Mat L(n_pde, n_u);
  Vec r(n_pde);
  for (int row = 0; row < n_pde; ++row) {
    const Point& x = ps.nodes[sys.pde_rows()[row]];
    for (int j = 0; j < n_centres; ++j)
      L(row, j) = eval_component(spec, lap, x, sys.centres()[j]);
    for (int k = n_centres; k < n_u; ++k)
      L(row, k) = eval_component(sys.enrichment_functions()[k - n_centres], lap, x, ps.dim);
    r(row) = rhs ? rhs(x) : 0.0;
  }
  const Mat Lred = L * sys.null_basis();
  const Vec rred = r - L * sys.particular();
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(Lred);
  const Vec beta = cod.solve(rred);
  if (!beta.allFinite()) throw SolveError("linear collocation matrix for the guess is singular");
  return beta;
}

inline Vec initial_guess(const GuessSpec& g, const CollocationSystem& sys) {
  const int n = sys.eliminated() ? sys.reduced_dim() : sys.unknowns();
  switch (g.strategy) {
    case GuessStrategy::Zero:
      return Vec::Zero(n);
    case GuessStrategy::GaussianRandom:
      return gaussian_vector(n, g.seed);
    case GuessStrategy::Laplacian:
      return solve_linear_guess(sys, nullptr);
    case GuessStrategy::Poisson: {
      const ProblemDefinition& prob = sys.problem();
      if (!prob.forcing) throw ConfigError("Poisson guess needs the problem's forcing term");
      const double k = g.poisson_coeff > 0.0 ? g.poisson_coeff : double(prob.dim);
      const double inv_d = 1.0 / prob.dim;
      auto rhs = [&prob, k, inv_d](const Point& x) {
        return k * std::pow(std::max(prob.forcing(x), 0.0), inv_d);
      };
      return solve_linear_guess(sys, rhs);
    }
  }
  throw ConfigError("unknown guess strategy");
}

}  // namespace kansa
