// Command-line harness: run one experiment, sweep a config list, validate a
// problem's derivatives against finite differences, or regenerate the preset
// experiment tables.
//
// Exit codes: 0 success, 1 solve failure, 2 configuration error.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "kansa/bench.hpp"

namespace {

using namespace kansa;
using namespace kansa::bench;

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
  return j;
}

int cmd_run(const std::string& path) {
  const RunConfig cfg = config_from_json(load_json(path));
  const RunResult res = run(cfg);
  std::cout << csv_header(true) << csv_row(res.row, true);
  return res.ok ? 0 : 1;
}

int cmd_sweep(const std::string& path, const std::string& out) {
  const json j = load_json(path);
  std::vector<RunConfig> configs;
  const json& list = j.is_array() ? j : j.at("runs");
  for (const json& item : list) configs.push_back(config_from_json(item));
  const auto results = sweep(configs);
  const std::string csv = sweep_csv(results);
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(out);
    if (!f) throw ConfigError("cannot open output file '" + out + "'");
    f << csv;
  }
  int failures = 0;
  for (const auto& r : results)
    if (!r.row.error.empty()) {
      std::cerr << r.row.name << ": " << r.row.error << "\n";
      ++failures;
    }
  return failures == 0 ? 0 : 1;
}

int cmd_validate(const std::string& problem) {
  const ProblemId id = kansa::bench::detail::problem_from_string(problem);
  const FdCheckReport rep = validate_problem(id);
  std::printf("%s derivative check (max scaled discrepancies)\n", problem.c_str());
  std::printf("  jacobian vs fd(residual):  %.3e  (tol 1e-6)\n", rep.jac_err);
  std::printf("  hessian  vs fd(gradient):  %.3e  (tol 1e-5)\n", rep.hess_err);
  std::printf("  d1       vs fd(residual):  %.3e  (tol 1e-6)\n", rep.d1_err);
  std::printf("  d2       vs fd(d1):        %.3e  (tol 1e-5)\n", rep.d2_err);
  const bool ok = rep.pass();
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

int cmd_tables(const std::string& out, bool timing) {
  const int failures = tables_command(out, timing);
  if (failures > 0) {
    std::cerr << failures << " preset run(s) failed\n";
    return 1;
  }
  std::cout << "tables written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshless RBF collocation solver for nonlinear elliptic BVPs"};
  app.require_subcommand(1);

  std::string config_path, out_path, problem;
  bool timing = false;

  CLI::App* run_cmd = app.add_subcommand("run", "run a single experiment from a JSON config");
  run_cmd->add_option("--config", config_path, "JSON run configuration")->required();

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a list of experiments");
  sweep_cmd->add_option("--config", config_path, "JSON array of run configurations")->required();
  sweep_cmd->add_option("--out", out_path, "output CSV (stdout if omitted)");

  CLI::App* val_cmd = app.add_subcommand("validate", "finite-difference derivative checks");
  val_cmd
      ->add_option("--problem", problem,
                   "cubic | plateau | hele_shaw | monge_ampere_2d | monge_ampere_3d")
      ->required();

  CLI::App* tab_cmd = app.add_subcommand("tables", "regenerate the preset experiment tables");
  tab_cmd->add_option("--out", out_path, "output directory")->required();
  tab_cmd->add_flag("--timing", timing, "include wall-clock columns (breaks byte determinism)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(config_path);
    if (sweep_cmd->parsed()) return cmd_sweep(config_path, out_path);
    if (val_cmd->parsed()) return cmd_validate(problem);
    if (tab_cmd->parsed()) return cmd_tables(out_path, timing);
  } catch (const kansa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
