#include <catch2/catch_amalgamated.hpp>

#include "kansa/bench.hpp"

using namespace kansa;
using namespace kansa::bench;
using Catch::Approx;

namespace {

json minimal_cubic(const char* name = "mini") {
  return json{{"name", name},
              {"problem", {{"id", "cubic"}}},
              {"kernel", {{"family", "MQ"}, {"c", 0.3}}},
              {"pointset", {{"kind", "grid"}, {"n_per_side", 9}}},
              {"solver", {{"method", "dogleg"}}},
              {"eval", {{"n_points", 200}, {"seed", 4}}}};
}

}  // namespace

TEST_CASE("config parsing: required fields and enums") {
  const RunConfig c = config_from_json(minimal_cubic());
  CHECK(c.problem.id == ProblemId::CubicSemilinear);
  CHECK(c.kernel.family == RbfFamily::MQ);
  CHECK(c.kernel.c == 0.3);
  CHECK(c.pointset.n_per_side == 9);
  CHECK(c.method == SolverMethod::Dogleg);

  json bad = minimal_cubic();
  bad.erase("problem");
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = minimal_cubic();
  bad["kernel"]["family"] = "GAUSS";
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = minimal_cubic();
  bad["solver"]["method"] = "bfgs";
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  // L is accepted as an alias for the shape parameter
  json wc = minimal_cubic();
  wc["kernel"] = {{"family", "WC4"}, {"L", 0.4}};
  CHECK(config_from_json(wc).kernel.c == 0.4);
}

TEST_CASE("config JSON round trip") {
  RunConfig c = config_from_json(minimal_cubic());
  c.problem.id = ProblemId::HeleShawPLaplace;
  c.problem.motz_per_corner = 2;
  c.pointset.kind = "mold";
  c.method = SolverMethod::TwoDSubspace;
  c.tr.scaling = true;
  const RunConfig rt = config_from_json(config_to_json(c));
  CHECK(rt.problem.id == c.problem.id);
  CHECK(rt.problem.motz_per_corner == 2);
  CHECK(rt.pointset.kind == "mold");
  CHECK(rt.method == c.method);
  CHECK(rt.tr.scaling);
}

TEST_CASE("runs are deterministic given the seed") {
  const RunConfig c = config_from_json(minimal_cubic());
  const RunResult a = run(c);
  const RunResult b = run(c);
  CHECK(csv_row(a.row, false) == csv_row(b.row, false));
  CHECK(a.row.mu_inf == b.row.mu_inf);
  CHECK(a.report.final_beta == b.report.final_beta);
}

TEST_CASE("run populates the metric row") {
  const RunResult r = run(config_from_json(minimal_cubic()));
  CHECK(r.ok);
  CHECK(r.row.N == 81);
  CHECK(r.row.mu_inf < 1e-18);
  CHECK(r.row.rms_eps > 0.0);
  CHECK(r.row.rms_eps < 0.1);
  CHECK(std::isfinite(r.row.cond_j));
  CHECK(r.row.rms_rc < 1e-9);
  CHECK(r.row.iterations > 0);
}

TEST_CASE("a single-point evaluation set works") {
  json j = minimal_cubic();
  j["eval"]["n_points"] = 1;
  const RunResult r = run(config_from_json(j));
  CHECK(std::isfinite(r.row.rms_eps));
  CHECK(r.row.rms_eps == Approx(r.row.max_eps));
}

TEST_CASE("sweep preserves order and isolates failures") {
  std::vector<RunConfig> configs;
  configs.push_back(config_from_json(minimal_cubic("first")));
  RunConfig broken = config_from_json(minimal_cubic("broken"));
  broken.kernel.c = -1.0;
  configs.push_back(broken);
  configs.push_back(config_from_json(minimal_cubic("last")));
  const auto results = sweep(configs);
  REQUIRE(results.size() == 3);
  CHECK(results[0].row.name == "first");
  CHECK(results[0].ok);
  CHECK(results[1].row.name == "broken");
  CHECK_FALSE(results[1].ok);
  CHECK_FALSE(results[1].row.error.empty());
  CHECK(results[2].row.name == "last");
  CHECK(results[2].ok);
  const std::string csv = sweep_csv(results, false);
  CHECK(csv.find("first") < csv.find("broken"));
  CHECK(csv.find("broken") < csv.find("last"));
  // empty sweep: header only
  CHECK(sweep_csv({}, false) == csv_header(false));
}

TEST_CASE("condition estimates track the SVD within a factor of ten") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 4; ++trial) {
    const int n = 40 + 30 * trial;
    Mat A = Mat::Random(n, n);
    A += Mat::Identity(n, n) * (trial * 0.3);
    const double exact = cond_2norm_svd(A);
    const double est = cond_2norm_estimate(A);
    CHECK(est <= 10.0 * exact);
    CHECK(est >= exact / 10.0);
  }
  // and on an actual collocation Jacobian
  const RunConfig c = config_from_json(minimal_cubic());
  BuiltRun in = build_inputs(c);
  KernelSpec k = c.kernel;
  k.dim = 2;
  const CollocationSystem sys = CollocationSystem::build(k, in.ps, in.prob);
  const Mat J = sys.jacobian(Vec::Zero(sys.reduced_dim()));
  CHECK(cond_2norm_estimate(J) <= 10.0 * cond_2norm_svd(J));
  CHECK(cond_2norm_estimate(J) >= cond_2norm_svd(J) / 10.0);
}

TEST_CASE("finite-difference Jacobian baseline collapses at high conditioning") {
  // analytic dogleg reaches machine-level merit where the FD baseline stalls
  json j = minimal_cubic("fd_hi");
  j["kernel"] = {{"family", "MQ"}, {"c", 0.32}};
  j["pointset"] = {{"kind", "grid"}, {"n_per_side", 20}};
  j["solver"] = {{"method", "fd_dogleg"}, {"max_iter", 60}};
  const RunResult fd_hi = run(config_from_json(j));
  CHECK(fd_hi.row.mu_inf > 1e-12);

  j["solver"] = {{"method", "dogleg"}, {"max_iter", 150}};
  const RunResult an_hi = run(config_from_json(j));
  CHECK(an_hi.row.mu_inf <= 1e-12);

  // at benign conditioning the FD baseline still finds the root
  j["kernel"] = {{"family", "MQ"}, {"c", 0.08}};
  j["solver"] = {{"method", "fd_dogleg"}, {"max_iter", 60}};
  const RunResult fd_lo = run(config_from_json(j));
  CHECK(fd_lo.row.mu_inf <= 1e-12);
}

TEST_CASE("trace files carry one JSON record per iteration") {
  namespace fs = std::filesystem;
  const std::string path = fs::temp_directory_path() / "kansa_trace.jsonl";
  json j = minimal_cubic("traced");
  j["output"] = {{"trace", path}};
  const RunResult r = run(config_from_json(j));
  std::ifstream f(path);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) {
    ++lines;
    const json rec = json::parse(line);
    if (lines > 1 && lines <= int(r.report.trace.size()) + 1) {
      CHECK(rec.contains("mu"));
      CHECK(rec.contains("delta"));
      CHECK(rec.contains("rho"));
      CHECK(rec.contains("step"));
      CHECK(rec.contains("accepted"));
    }
  }
  CHECK(lines == int(r.report.trace.size()) + 2);  // meta + records + summary
  fs::remove(path);
}

TEST_CASE("operator-Newton runs through the harness") {
  json j = minimal_cubic("newton");
  j["solver"] = {{"method", "operator_newton"}};
  const RunResult r = run(config_from_json(j));
  CHECK(r.ok);
  CHECK(r.row.rms_rc <= 1e-12);
  CHECK(r.row.method == "operator_newton");
}
