#pragma once

// Radial basis function families (multiquadric, inverse multiquadric, Matérn,
// Wendland C4) together with every directional derivative up to second order,
// and dense assembly of the derivative matrices used by collocation.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "kansa/common.hpp"

namespace kansa {

enum class RbfFamily { MQ, IMQ, Matern, WC4 };

struct KernelSpec {
  RbfFamily family = RbfFamily::MQ;
  double c = 1.0;   // shape length-scale; support radius for WC4
  int alpha = 0;    // Matérn smoothness integer, order nu = (alpha - dim)/2
  int dim = 2;
  bool normalized = false;       // Matérn only: rescale so phi(0) = 1
  bool augment_constant = false; // append a constant basis function (classical MQ side condition)

  static KernelSpec mq(double c, int dim) { return {RbfFamily::MQ, c, 0, dim}; }
  static KernelSpec imq(double c, int dim) { return {RbfFamily::IMQ, c, 0, dim}; }
  static KernelSpec matern(int alpha, double c, int dim) { return {RbfFamily::Matern, c, alpha, dim}; }
  static KernelSpec wc4(double L, int dim) { return {RbfFamily::WC4, L, 0, dim}; }

  double matern_nu() const { return 0.5 * (alpha - dim); }

  void validate() const {
    if (dim < 1 || dim > 3) throw ConfigError("kernel dim must be 1, 2 or 3");
    if (!(c > 0.0)) throw ConfigError("kernel shape parameter must be positive");
    if (family == RbfFamily::Matern) {
      // nu must be a positive integer or half-integer, at least 1/2.
      if (alpha - dim < 1) throw ConfigError("Matern requires alpha >= dim + 1");
    }
    if (family == RbfFamily::WC4 && dim > 3) throw ConfigError("WC4 only supports dim <= 3");
  }

  std::string describe() const {
    char buf[64];
    switch (family) {
      case RbfFamily::MQ: std::snprintf(buf, sizeof(buf), "MQ(c=%g)", c); break;
      case RbfFamily::IMQ: std::snprintf(buf, sizeof(buf), "IMQ(c=%g)", c); break;
      case RbfFamily::Matern:
        std::snprintf(buf, sizeof(buf), "MATERN(alpha=%d c=%g)", alpha, c);
        break;
      case RbfFamily::WC4: std::snprintf(buf, sizeof(buf), "WC4(L=%g)", c); break;
      default: return "?";
    }
    return buf;
  }
};

enum class DiffKind { Identity, FirstPartial, SecondPartial, Laplacian };

// One differential component D_m acting on the first argument of
// phi(||x - x'||). First partials flip sign when the arguments swap,
// so [D_m phi]^T = parity * [D_m phi] on a common pointset.
struct DifferentialComponent {
  DiffKind kind = DiffKind::Identity;
  int i = 0;
  int j = 0;

  static DifferentialComponent identity() { return {DiffKind::Identity, 0, 0}; }
  static DifferentialComponent d(int axis) { return {DiffKind::FirstPartial, axis, 0}; }
  static DifferentialComponent d2(int a, int b) { return {DiffKind::SecondPartial, a, b}; }
  static DifferentialComponent laplacian() { return {DiffKind::Laplacian, 0, 0}; }

  int parity() const { return kind == DiffKind::FirstPartial ? -1 : +1; }

  std::string name() const {
    static const char* ax = "xyz";
    switch (kind) {
      case DiffKind::Identity: return "u";
      case DiffKind::FirstPartial: return std::string("u_") + ax[i];
      case DiffKind::SecondPartial: return std::string("u_") + ax[i] + ax[j];
      case DiffKind::Laplacian: return "lap_u";
    }
    return "?";
  }
};

using KernelMatrix = Mat;

namespace detail {

// K_{n+1/2}(t) in closed form: sqrt(pi/2t) e^-t sum_k (n+k)!/(k!(n-k)!) (2t)^-k.
inline double bessel_k_half(int n, double t) {
  double sum = 1.0;
  double coef = 1.0;
  for (int k = 1; k <= n; ++k) {
    coef *= double(n - k + 1) * double(n + k) / double(k);
    sum += coef / std::pow(2.0 * t, k);
  }
  return std::sqrt(M_PI / (2.0 * t)) * std::exp(-t) * sum;
}

// Modified Bessel function of the second kind for integer and half-integer
// order. Half-integers use the exact closed form; integers go through the
// standard library implementation.
inline double bessel_k(double nu, double t) {
  nu = std::abs(nu);
  const double r = std::round(nu);
  if (std::abs(nu - r) < 0.25)  // integer order
    return std::cyl_bessel_k(r, t);
  return bessel_k_half(int(std::round(nu - 0.5)), t);
}

// t^nu K_nu(t) with its analytic t -> 0 limit 2^(nu-1) Gamma(nu).
inline double scaled_bessel_k(double nu, double t) {
  if (t == 0.0) {
    if (nu <= 0.0)
      throw std::domain_error("t^nu K_nu(t) has no finite limit at t=0 for nu <= 0");
    return std::exp2(nu - 1.0) * std::tgamma(nu);
  }
  return std::pow(t, nu) * bessel_k(nu, t);
}

}  // namespace detail

// phi(r) plus the two radial quotients the chain rule needs,
//   f(r) = phi'(r)/r,   g(r) = (phi''(r) - phi'(r)/r)/r^2,
// with r -> 0 limits taken analytically. `order` is the highest derivative
// requested (0, 1 or 2); unrequested fields are left zero.
struct RadialDerivs {
  double phi = 0.0;
  double f = 0.0;
  double g = 0.0;
};

inline RadialDerivs radial_derivs(const KernelSpec& spec, double r, int order) {
  spec.validate();
  if (r < 0.0) throw std::domain_error("radial distance must be nonnegative");
  RadialDerivs out;
  switch (spec.family) {
    case RbfFamily::MQ: {
      const double q = std::sqrt(r * r + spec.c * spec.c);
      out.phi = q;
      if (order >= 1) out.f = 1.0 / q;
      if (order >= 2) out.g = -1.0 / (q * q * q);
      return out;
    }
    case RbfFamily::IMQ: {
      const double q = r * r + spec.c * spec.c;
      const double q12 = std::sqrt(q);
      out.phi = 1.0 / q12;
      if (order >= 1) out.f = -1.0 / (q * q12);
      if (order >= 2) out.g = 3.0 / (q * q * q12);
      return out;
    }
    case RbfFamily::WC4: {
      const double L = spec.c;
      const double t = r / L;
      if (t >= 1.0) return out;  // compact support
      const int s = 3 + spec.dim / 2;
      const double a = double(s + 1) * double(s + 3);
      const double b = 3.0 * double(s + 2);
      out.phi = std::pow(1.0 - t, s + 2) * (a * t * t + b * t + 3.0);
      if (order >= 1)
        out.f = -double(s + 3) * double(s + 4) * ((s + 1) * t + 1.0) * std::pow(1.0 - t, s + 1) /
                (L * L);
      if (order >= 2)
        out.g = double(s + 1) * double(s + 2) * double(s + 3) * double(s + 4) *
                std::pow(1.0 - t, s) / (L * L * L * L);
      return out;
    }
    case RbfFamily::Matern: {
      const double nu = spec.matern_nu();
      const double t = r / spec.c;
      const double scale =
          spec.normalized ? 1.0 / (std::exp2(nu - 1.0) * std::tgamma(nu)) : 1.0;
      const double c2 = spec.c * spec.c;
      out.phi = scale * detail::scaled_bessel_k(nu, t);
      if (order >= 1) out.f = -scale * detail::scaled_bessel_k(nu - 1.0, t) / c2;
      if (order >= 2) out.g = scale * detail::scaled_bessel_k(nu - 2.0, t) / (c2 * c2);
      return out;
    }
  }
  throw ConfigError("unknown RBF family");
}

inline double eval_kernel(const KernelSpec& spec, double r) {
  return radial_derivs(spec, r, 0).phi;
}

// (D_m phi)(||xi - xj||), the derivative acting on the xi argument.
inline double eval_component(const KernelSpec& spec, const DifferentialComponent& comp,
                             const Point& xi, const Point& xj) {
  const Point d = xi - xj;
  const double r = d.norm();
  switch (comp.kind) {
    case DiffKind::Identity:
      return radial_derivs(spec, r, 0).phi;
    case DiffKind::FirstPartial: {
      const RadialDerivs rd = radial_derivs(spec, r, 1);
      return d[comp.i] * rd.f;
    }
    case DiffKind::SecondPartial: {
      const RadialDerivs rd = radial_derivs(spec, r, 2);
      double v = d[comp.i] * d[comp.j] * rd.g;
      if (comp.i == comp.j) v += rd.f;
      return v;
    }
    case DiffKind::Laplacian: {
      const RadialDerivs rd = radial_derivs(spec, r, 2);
      return spec.dim * rd.f + r * r * rd.g;
    }
  }
  throw ConfigError("unknown differential component");
}

inline KernelMatrix assemble_matrix(const KernelSpec& spec, const DifferentialComponent& comp,
                                    const std::vector<Point>& rows,
                                    const std::vector<Point>& centres) {
  if (rows.empty() || centres.empty())
    throw ConfigError("assemble_matrix needs nonempty point lists");
  KernelMatrix M(rows.size(), centres.size());
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      M(i, j) = eval_component(spec, comp, rows[i], centres[j]);
  return M;
}

}  // namespace kansa
