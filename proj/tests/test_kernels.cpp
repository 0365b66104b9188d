#include <catch2/catch_amalgamated.hpp>

#include "kansa/geometry.hpp"
#include "kansa/kernels.hpp"
#include "support/oracles.hpp"

using namespace kansa;
using Catch::Approx;

namespace {

std::vector<KernelSpec> all_families(int dim) {
  return {KernelSpec::mq(0.8, dim), KernelSpec::imq(0.75, dim), KernelSpec::matern(dim + 9, 0.6, dim),
          KernelSpec::matern(dim + 6, 0.6, dim), KernelSpec::wc4(1.7, dim)};
}

std::vector<Point> halton_points(int n, int dim, std::size_t offset = 1) {
  std::vector<Point> pts;
  for (int k = 0; k < n; ++k) pts.push_back(halton_point(offset + k, dim));
  return pts;
}

}  // namespace

TEST_CASE("kernel values match the closed forms") {
  CHECK(eval_kernel(KernelSpec::mq(2.0, 2), 0.0) == Approx(2.0));
  CHECK(eval_kernel(KernelSpec::wc4(1.0, 2), 1.0) == 0.0);
  CHECK(eval_kernel(KernelSpec::wc4(1.0, 2), 1.3) == 0.0);
  CHECK(eval_kernel(KernelSpec::imq(0.75, 2), 1.0) == Approx(0.8).epsilon(1e-14));
  // WC4 at the origin: P(0) = 3 regardless of dimension
  CHECK(eval_kernel(KernelSpec::wc4(0.4, 3), 0.0) == Approx(3.0));
}

TEST_CASE("invalid kernel specs are rejected") {
  CHECK_THROWS_AS(eval_kernel(KernelSpec::mq(-1.0, 2), 1.0), ConfigError);
  CHECK_THROWS_AS(eval_kernel(KernelSpec::wc4(0.0, 2), 1.0), ConfigError);
  CHECK_THROWS_AS(eval_kernel(KernelSpec::matern(2, 0.5, 2), 1.0), ConfigError);  // nu = 0
  KernelSpec bad = KernelSpec::mq(1.0, 2);
  bad.dim = 4;
  CHECK_THROWS_AS(eval_kernel(bad, 1.0), ConfigError);
}

TEST_CASE("component evaluation: identities and frozen values") {
  const KernelSpec mq1 = KernelSpec::mq(1.0, 2);
  // Laplacian limit at coincident points: d * phi'(r)/r -> 2/c
  CHECK(eval_component(mq1, DifferentialComponent::laplacian(), make_point(0.3, 0.4),
                       make_point(0.3, 0.4)) == Approx(2.0));
  // first partial at r = 1 along x: x (r^2 + c^2)^(-1/2)
  CHECK(eval_component(mq1, DifferentialComponent::d(0), make_point(1, 0), make_point(0, 0)) ==
        Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  // identity component falls back to the kernel itself
  for (const KernelSpec& spec : all_families(2)) {
    const Point a = make_point(0.2, 0.7), b = make_point(-0.1, 0.3);
    CHECK(eval_component(spec, DifferentialComponent::identity(), a, b) ==
          Approx(eval_kernel(spec, (a - b).norm())).epsilon(1e-14));
  }
}

TEST_CASE("analytic derivatives agree with finite differences of the kernel") {
  std::vector<DifferentialComponent> comps = {
      DifferentialComponent::d(0),        DifferentialComponent::d(1),
      DifferentialComponent::d2(0, 0),    DifferentialComponent::d2(0, 1),
      DifferentialComponent::d2(1, 1),    DifferentialComponent::laplacian()};
  for (const KernelSpec& spec : all_families(2)) {
    const Point xj = make_point(0.05, -0.1);
    for (double r = 1e-3; r < 3.0; r *= 2.3) {
      if (spec.family == RbfFamily::WC4 && r >= spec.c) continue;
      const Point xi = xj + make_point(r * 0.6, r * 0.8);
      for (const auto& comp : comps) {
        const double analytic = eval_component(spec, comp, xi, xj);
        const double err = oracles::fd_component_error(spec, comp, xi, xj, analytic);
        INFO(spec.describe() << " " << comp.name() << " r=" << r);
        CHECK(err <= 1e-6 * (1.0 + std::abs(analytic)));
      }
    }
  }
}

TEST_CASE("interpolation matrix is symmetric positive definite for SCPD families") {
  const auto pts = halton_points(40, 2);
  for (const KernelSpec& spec :
       {KernelSpec::imq(0.75, 2), KernelSpec::matern(11, 0.4, 2), KernelSpec::wc4(1.5, 2)}) {
    const Mat A = assemble_matrix(spec, DifferentialComponent::identity(), pts, pts);
    CHECK((A - A.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    INFO(spec.describe());
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("first-partial matrices are antisymmetric on a common pointset") {
  const auto pts = halton_points(25, 2);
  for (const KernelSpec& spec : all_families(2)) {
    const Mat M = assemble_matrix(spec, DifferentialComponent::d(0), pts, pts);
    CHECK((M + M.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * M.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("identity matrix example on two nodes") {
  const std::vector<Point> pts = {make_point(0, 0), make_point(1, 0)};
  const Mat A = assemble_matrix(KernelSpec::mq(1.0, 2), DifferentialComponent::identity(), pts, pts);
  CHECK(A(0, 0) == Approx(1.0));
  CHECK(A(1, 1) == Approx(1.0));
  CHECK(A(0, 1) == Approx(std::sqrt(2.0)));
  CHECK(A(1, 0) == Approx(std::sqrt(2.0)));
}

TEST_CASE("WC4 Laplacian matrix on a grid matches the FD oracle entrywise") {
  std::vector<Point> pts;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) pts.push_back(make_point(0.1 * i, 0.1 * j));
  const KernelSpec spec = KernelSpec::wc4(0.3, 2);
  const Mat A = assemble_matrix(spec, DifferentialComponent::laplacian(), pts, pts);
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = 0; j < pts.size(); ++j) {
      const double err =
          oracles::fd_component_error(spec, DifferentialComponent::laplacian(), pts[i], pts[j],
                                      A(i, j));
      CHECK(err <= 1e-6 * (1.0 + std::abs(A(i, j))));
    }
}

TEST_CASE("WC4 and its radial derivatives vanish continuously at the support edge") {
  const KernelSpec spec = KernelSpec::wc4(0.7, 2);
  const double L = spec.c;
  const RadialDerivs inside = radial_derivs(spec, L * (1.0 - 1e-7), 2);
  CHECK(std::abs(inside.phi) < 1e-12);
  CHECK(std::abs(inside.f) < 1e-12);
  CHECK(std::abs(inside.g) < 1e-12);
  const RadialDerivs at = radial_derivs(spec, L, 2);
  CHECK(at.phi == 0.0);
  CHECK(at.f == 0.0);
  CHECK(at.g == 0.0);
}

TEST_CASE("half-integer Matern matches its closed-form expansion") {
  for (int alpha : {11, 13}) {  // nu = 4.5, 5.5 in d = 2
    const KernelSpec spec = KernelSpec::matern(alpha, 0.31, 2);
    const int n = int(spec.matern_nu() - 0.5);
    for (double r = 1e-6; r < 12.0; r *= 3.7) {
      const double ref = oracles::matern_half_integer_reference(n, spec.c, r);
      CHECK(eval_kernel(spec, r) == Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("Matern r -> 0 limits are finite and analytic") {
  const KernelSpec spec = KernelSpec::matern(11, 0.5, 2);  // nu = 4.5
  const double nu = spec.matern_nu();
  CHECK(eval_kernel(spec, 0.0) == Approx(std::exp2(nu - 1.0) * std::tgamma(nu)));
  KernelSpec norm = spec;
  norm.normalized = true;
  CHECK(eval_kernel(norm, 0.0) == Approx(1.0));
  // Laplacian at a coincident pair is the analytic limit, cross-checked by FD
  const Point x = make_point(0.1, 0.2);
  const double lap0 = eval_component(spec, DifferentialComponent::laplacian(), x, x);
  CHECK(std::isfinite(lap0));
  const double err = oracles::fd_component_error(spec, DifferentialComponent::laplacian(),
                                                 x + make_point(1e-9, 0), x, lap0);
  CHECK(err <= 1e-5 * (1.0 + std::abs(lap0)));
  // integer order: nu = 3 in d = 2
  const KernelSpec m3 = KernelSpec::matern(8, 0.5, 2);
  CHECK(eval_kernel(m3, 0.0) == Approx(std::exp2(2.0) * std::tgamma(3.0)));
  CHECK(std::isfinite(eval_component(m3, DifferentialComponent::laplacian(), x, x)));
}

TEST_CASE("Matern orders without a second-derivative limit raise a domain error") {
  const KernelSpec nu_half = KernelSpec::matern(3, 0.5, 2);  // nu = 0.5
  const Point x = make_point(0.4, 0.4);
  CHECK_THROWS_AS(eval_component(nu_half, DifferentialComponent::laplacian(), x, x),
                  std::domain_error);
  CHECK(std::isfinite(eval_kernel(nu_half, 0.0)));
}

TEST_CASE("normalization flag rescales values but not collocation roots") {
  const KernelSpec plain = KernelSpec::matern(11, 0.4, 2);
  KernelSpec scaled = plain;
  scaled.normalized = true;
  const double ratio = eval_kernel(plain, 0.3) / eval_kernel(scaled, 0.3);
  CHECK(eval_kernel(plain, 0.9) / eval_kernel(scaled, 0.9) == Approx(ratio).epsilon(1e-13));
}
