#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "kansa/operator_newton.hpp"
#include "kansa/problems.hpp"

using namespace kansa;
using Catch::Approx;

namespace {

ProblemDefinition linear_poisson() {
  ProblemDefinition p;
  p.name = "poisson";
  p.dim = 2;
  p.components = {DifferentialComponent::identity(), DifferentialComponent::laplacian()};
  auto f = [](const Point& x) { return std::sin(x[0]) * std::cos(x[1]); };
  p.pde_residual = [f](const Point& x, const Vec& v) { return v(1) + 2.0 * f(x); };
  p.pde_d1 = [](const Point&, const Vec&) { return Vec{{0.0, 1.0}}; };
  p.pde_d2 = [](const Point&, const Vec&) { return Mat::Zero(2, 2).eval(); };
  p.dirichlet_value = f;
  p.exact_solution = f;
  p.linearized_pde = [](const Point&, const Vec&) { return Vec{{0.0, 1.0}}; };
  return p;
}

// the full Newton step on the square collocation system, built from the
// analytic Jacobian of the uneliminated formulation
Vec newton_step_reference(const CollocationSystem& full_sys, const Vec& alpha) {
  const Mat J = full_sys.jacobian(alpha);
  const Vec W = full_sys.residual(alpha);
  return Vec(alpha - Eigen::PartialPivLU<Mat>(J).solve(W));
}

}  // namespace

TEST_CASE("linear problems converge in exactly one iteration") {
  const CollocationSystem sys = build_system(KernelSpec::mq(0.4, 2),
                                             generate_grid(GridDomain::UnitSquare, 8),
                                             linear_poisson(), false);
  for (unsigned seed : {1u, 2u, 3u}) {
    const Vec alpha0 = gaussian_vector(sys.unknowns(), seed);
    const Vec alpha1 = newton_iterate(sys, alpha0);
    const Vec W = kansa::detail::full_residual(sys, alpha1);
    CHECK(std::sqrt(W.squaredNorm() / W.size()) < 1e-9);
  }
}

TEST_CASE("linearized matrix equals the analytic Jacobian") {
  // cubic
  {
    const CollocationSystem sys = build_system(KernelSpec::mq(0.35, 2),
                                               generate_grid(GridDomain::UnitSquare, 9),
                                               cubic_semilinear(), false);
    for (unsigned seed : {4u, 5u}) {
      const Vec alpha = 0.3 * gaussian_vector(sys.unknowns(), seed);
      CHECK(check_newton_equivalence(sys, alpha) <= 1e-10);
    }
  }
  // plateau
  {
    const CollocationSystem sys = build_system(KernelSpec::matern(11, 0.4, 2),
                                               generate_disc(1.1, 70, 22, 1), plateau(0.47),
                                               false);
    for (unsigned seed : {6u, 7u}) {
      const Vec alpha = 0.3 * gaussian_vector(sys.unknowns(), seed);
      CHECK(check_newton_equivalence(sys, alpha) <= 1e-10);
    }
  }
  // Monge-Ampere, both dimensions
  {
    const CollocationSystem sys = build_system(KernelSpec::mq(0.4, 2),
                                               generate_grid(GridDomain::UnitSquare, 8),
                                               monge_ampere(2), false);
    const Vec alpha = 0.3 * gaussian_vector(sys.unknowns(), 8);
    CHECK(check_newton_equivalence(sys, alpha) <= 1e-10);
  }
  {
    const CollocationSystem sys = build_system(KernelSpec::mq(0.55, 3),
                                               generate_grid(GridDomain::UnitCube, 5),
                                               monge_ampere(3), false);
    const Vec alpha = 0.3 * gaussian_vector(sys.unknowns(), 9);
    CHECK(check_newton_equivalence(sys, alpha) <= 1e-10);
  }
  // linear problem: identical up to roundoff
  {
    const CollocationSystem sys = build_system(KernelSpec::mq(0.4, 2),
                                               generate_grid(GridDomain::UnitSquare, 8),
                                               linear_poisson(), false);
    const Vec alpha = gaussian_vector(sys.unknowns(), 10);
    CHECK(check_newton_equivalence(sys, alpha) <= 1e-14);
  }
}

TEST_CASE("one operator-Newton update is the Newton step on the collocation system") {
  struct Case {
    KernelSpec spec;
    Pointset ps;
    ProblemDefinition prob;
  };
  std::vector<Case> cases;
  cases.push_back({KernelSpec::mq(0.35, 2), generate_grid(GridDomain::UnitSquare, 9),
                   cubic_semilinear()});
  cases.push_back({KernelSpec::matern(7, 0.25, 2), generate_disc(1.0, 80, 24, 2), plateau(0.5)});
  cases.push_back({KernelSpec::mq(0.55, 3), generate_grid(GridDomain::UnitCube, 5),
                   monge_ampere(3)});
  for (auto& c : cases) {
    const CollocationSystem sys = build_system(c.spec, c.ps, c.prob, false);
    for (unsigned seed : {11u, 12u, 13u}) {
      const Vec alpha = 0.25 * gaussian_vector(sys.unknowns(), seed);
      const Vec by_operator = newton_iterate(sys, alpha);
      const Vec by_jacobian = newton_step_reference(sys, alpha);
      INFO(c.prob.name);
      CHECK((by_operator - by_jacobian).norm() <= 1e-9 * by_jacobian.norm());
    }
  }
}

TEST_CASE("operator-Newton solves the shrunken Plateau disc from the Laplacian guess") {
  const double s = 1.0;
  const Pointset ps = generate_disc(plateau_radius(s), 200, 40, 2);
  KernelSpec spec = KernelSpec::matern(11, 0.15, 2);
  spec.normalized = true;
  const CollocationSystem sys = build_system(spec, ps, plateau(s), false);
  // Laplacian guess in the full space
  const Vec alpha0 = solve_linear_collocation(sys, nullptr);
  const OperatorNewtonReport rep = operator_newton_solve(sys, alpha0);
  CHECK(rep.converged);
  CHECK_FALSE(rep.diverged);
  CHECK(rep.rms_rc.back() <= 1e-12);
  // convergence history is essentially monotone after the first few steps
  CHECK(rep.rms_rc.front() > rep.rms_rc.back());

  // a strong perturbation of the same guess never reaches a root
  const Vec noisy = alpha0 + 0.5 * alpha0.norm() *
                                 gaussian_vector(sys.unknowns(), 21).normalized();
  const OperatorNewtonReport bad = operator_newton_solve(sys, noisy);
  CHECK_FALSE(bad.converged);
  CHECK(bad.rms_rc.back() > 1.0);
}

TEST_CASE("linearization and ellipticity conditions at the current iterate") {
  const MoldPointset mp = generate_mold(MoldGeometry{}, 120, 44, 2);
  // interpolate the plane u = a*x: |grad u| is a everywhere
  auto plane_state = [&](const CollocationSystem& sys, double slope) {
    const Mat Phi = assemble_matrix(sys.kernel(), DifferentialComponent::identity(),
                                    sys.pointset().nodes, sys.centres());
    Mat A(sys.unknowns(), sys.unknowns());
    A.topRows(sys.pointset().size()) = Phi;
    // pad with extra-centre rows so the interpolation system is square
    int extra = sys.unknowns() - sys.pointset().size();
    for (int k = 0; k < extra; ++k) {
      const Point& x = sys.centres()[sys.pointset().size() + k];
      for (int j = 0; j < sys.unknowns(); ++j)
        A(sys.pointset().size() + k, j) =
            j < int(sys.centres().size())
                ? eval_kernel(sys.kernel(), (x - sys.centres()[j]).norm())
                : 0.0;
    }
    Vec rhs(sys.unknowns());
    for (int i = 0; i < sys.pointset().size(); ++i) rhs(i) = slope * sys.pointset().nodes[i][0];
    for (int k = 0; k < extra; ++k)
      rhs(sys.pointset().size() + k) = slope * sys.centres()[sys.pointset().size() + k][0];
    return Vec(Eigen::PartialPivLU<Mat>(A).solve(rhs));
  };

  // p-Laplacian with p = 2.6: the linearization breaks past |grad u| ~ 1.37
  const CollocationSystem plap =
      build_system(KernelSpec::imq(0.75, 2), mp.ps, hele_shaw(0.6, mp.geom, 0), false);
  const LinearizationReport ok = check_linearization_validity(plap, plane_state(plap, 1.0));
  CHECK(ok.nodes_checked > 0);
  CHECK(ok.linearization_violations.empty());
  CHECK(ok.ellipticity_violations.empty());
  const LinearizationReport broken = check_linearization_validity(plap, plane_state(plap, 2.0));
  CHECK(broken.linearization_violations.size() == size_t(broken.nodes_checked));
  CHECK(broken.ellipticity_violations.empty());  // the p-Laplacian stays elliptic

  // the least-area operator satisfies both conditions for any gradient
  const CollocationSystem mins = build_system(KernelSpec::matern(11, 0.4, 2),
                                              generate_disc(1.0, 80, 24, 2), plateau(0.5), false);
  for (double slope : {0.5, 3.0, 20.0}) {
    Mat Phi = assemble_matrix(mins.kernel(), DifferentialComponent::identity(),
                              mins.pointset().nodes, mins.centres());
    Vec rhs(mins.unknowns());
    for (int i = 0; i < mins.pointset().size(); ++i)
      rhs(i) = slope * mins.pointset().nodes[i][0];
    const Vec alpha = Eigen::PartialPivLU<Mat>(Phi).solve(rhs);
    const LinearizationReport rep = check_linearization_validity(mins, alpha);
    CHECK(rep.linearization_violations.empty());
    CHECK(rep.ellipticity_violations.empty());
  }

  // constant G (gamma = 0 gives the Laplacian): trivially fine
  const CollocationSystem lap =
      build_system(KernelSpec::imq(0.75, 2), mp.ps, hele_shaw(0.0, mp.geom, 0), false);
  const LinearizationReport triv = check_linearization_validity(lap, plane_state(lap, 5.0));
  CHECK(triv.linearization_violations.empty());
  CHECK(triv.ellipticity_violations.empty());
}
