#pragma once

// Independent oracles used across the test suites: finite differences of the
// kernel for derivative components, and a brute-force polar-grid minimizer for
// the 2D trust-region subproblem. These deliberately avoid the code paths
// they are checking.

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "kansa/kernels.hpp"

namespace oracles {

using kansa::DiffKind;
using kansa::DifferentialComponent;
using kansa::KernelSpec;
using kansa::Mat;
using kansa::Point;
using kansa::Vec;

// Central finite differences of phi(||x - x'||) in Cartesian coordinates.
inline double fd_component(const KernelSpec& spec, const DifferentialComponent& comp,
                           const Point& xi, const Point& xj, double h) {
  auto phi = [&](const Point& p) { return kansa::eval_kernel(spec, (p - xj).norm()); };
  auto e = [](int axis) {
    Point p = Point::Zero();
    p[axis] = 1.0;
    return p;
  };
  switch (comp.kind) {
    case DiffKind::Identity:
      return phi(xi);
    case DiffKind::FirstPartial:
      return (phi(xi + h * e(comp.i)) - phi(xi - h * e(comp.i))) / (2.0 * h);
    case DiffKind::SecondPartial: {
      if (comp.i == comp.j)
        return (phi(xi + h * e(comp.i)) - 2.0 * phi(xi) + phi(xi - h * e(comp.i))) / (h * h);
      const Point a = h * e(comp.i), b = h * e(comp.j);
      return (phi(xi + a + b) - phi(xi + a - b) - phi(xi - a + b) + phi(xi - a - b)) /
             (4.0 * h * h);
    }
    case DiffKind::Laplacian: {
      double v = 0.0;
      for (int k = 0; k < spec.dim; ++k)
        v += (phi(xi + h * e(k)) - 2.0 * phi(xi) + phi(xi - h * e(k))) / (h * h);
      return v;
    }
  }
  return 0.0;
}

// Best agreement between the analytic value and the FD oracle over a step
// sweep (the truncation/roundoff optimum is unknown a priori).
inline double fd_component_error(const KernelSpec& spec, const DifferentialComponent& comp,
                                 const Point& xi, const Point& xj, double analytic) {
  double best = std::numeric_limits<double>::infinity();
  for (double h = 1e-3; h > 1e-8; h *= 0.5) {
    const double fd = fd_component(spec, comp, xi, xj, h);
    best = std::min(best, std::abs(fd - analytic));
  }
  return best;
}

// Closed-form half-integer Matern profile (r/c)^nu K_nu(r/c) written from the
// exponential-times-polynomial expansion, independent from the library path.
inline double matern_half_integer_reference(int n, double c, double r) {
  // K_{n+1/2}(t) = sqrt(pi/(2t)) e^{-t} sum_k (n+k)!/(k!(n-k)!) (2t)^{-k}
  const double t = r / c;
  const double nu = n + 0.5;
  double sum = 0.0;
  for (int k = 0; k <= n; ++k) {
    double coef = 1.0;
    for (int j = 1; j <= k; ++j) coef *= double(n - j + 1) * double(n + j) / double(j);
    sum += coef * std::pow(2.0 * t, -k);
  }
  return std::pow(t, nu) * std::sqrt(M_PI / (2.0 * t)) * std::exp(-t) * sum;
}

// --- random 2D subproblem instances ------------------------------------------------

struct RandomTrs {
  Eigen::Vector2d g;
  Eigen::Matrix2d H;
  double delta;
};

// kind: 0 = SPD, 1 = indefinite, 2 = hard case (gradient orthogonal to the
// bottom eigenvector of an indefinite Hessian).
inline RandomTrs random_trs_instance(unsigned seed, int kind) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return lo + (hi - lo) * double(rng() >> 11) * 0x1.0p-53;
  };
  const double th = uniform(0, 2 * M_PI);
  Eigen::Matrix2d Q;
  Q << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  double l1, l2;
  if (kind == 0) {
    l1 = uniform(0.1, 1.0);
    l2 = uniform(1.0, 5.0);
  } else {
    l1 = -uniform(0.2, 2.0);
    l2 = uniform(0.5, 4.0);
  }
  RandomTrs inst;
  inst.H = Q * Eigen::Vector2d(l1, l2).asDiagonal() * Q.transpose();
  inst.delta = uniform(0.2, 2.5);
  if (kind == 2) {
    inst.g = Q.col(1) * uniform(0.3, 2.0);
  } else {
    inst.g << uniform(-2, 2), uniform(-2, 2);
    if (inst.g.norm() < 0.1) inst.g << 0.7, -0.3;
  }
  return inst;
}

// --- brute-force 2D trust-region subproblem ---------------------------------------

struct GridMin {
  double value = std::numeric_limits<double>::infinity();
  Eigen::Vector2d point = Eigen::Vector2d::Zero();
};

// Minimize g's + s'Hs/2 over the disc of radius delta by a polar grid with
// two zoom rounds (about 1e4 samples per round).
inline GridMin trs_grid_minimum(const Eigen::Vector2d& g, const Eigen::Matrix2d& H,
                                double delta) {
  auto model = [&](const Eigen::Vector2d& s) { return g.dot(s) + 0.5 * s.dot(H * s); };
  GridMin best;
  double r_lo = 0.0, r_hi = delta;
  double th_lo = 0.0, th_hi = 2.0 * M_PI;
  double r_best = 0.0, th_best = 0.0;
  for (int round = 0; round < 5; ++round) {
    const int nr = 101, nth = 101;
    for (int i = 0; i < nr; ++i) {
      const double r = r_lo + (r_hi - r_lo) * i / (nr - 1);
      for (int j = 0; j < nth; ++j) {
        const double th = th_lo + (th_hi - th_lo) * j / (nth - 1);
        const Eigen::Vector2d s(r * std::cos(th), r * std::sin(th));
        const double v = model(s);
        if (v < best.value) {
          best.value = v;
          best.point = s;
          r_best = r;
          th_best = th;
        }
      }
    }
    const double r_span = (r_hi - r_lo) / 10.0;
    const double th_span = (th_hi - th_lo) / 10.0;
    r_lo = std::max(0.0, r_best - r_span);
    r_hi = std::min(delta, r_best + r_span);
    th_lo = th_best - th_span;
    th_hi = th_best + th_span;
  }
  return best;
}

}  // namespace oracles
