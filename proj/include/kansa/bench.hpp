#pragma once

// Configuration-driven benchmark harness behind the CLI: JSON run configs,
// metric rows (CSV), iteration traces (JSONL), derivative validation against
// finite differences, concurrent sweeps, and the preset experiment tables.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

#include "kansa/problems.hpp"
#include "kansa/trust_region.hpp"

namespace kansa::bench {

using nlohmann::json;

// --- condition numbers ------------------------------------------------------------

inline double cond_2norm_svd(const Mat& A) {
  Eigen::BDCSVD<Mat> svd(A);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

// Power iteration on A'A for the top singular value, inverse iteration through
// a QR factorization for the bottom one. Deterministic start vector.
inline double cond_2norm_estimate(const Mat& A, int iters = 40) {
  const int n = int(A.cols());
  Vec v = Vec::Ones(n).normalized();
  double smax = 0.0;
  for (int k = 0; k < iters; ++k) {
    v = A.transpose() * (A * v);
    smax = std::sqrt(v.norm());
    v.normalize();
  }
  Eigen::ColPivHouseholderQR<Mat> qr(A);
  if (qr.rank() < n) return std::numeric_limits<double>::infinity();
  const Mat R = qr.matrixR().topLeftCorner(n, n).template triangularView<Eigen::Upper>();
  Vec w = Vec::Ones(n).normalized();
  double smin_inv = 0.0;
  for (int k = 0; k < iters; ++k) {
    // w <- (A'A)^-1 w; with A = Q R P', A^-T w = Q R^-T P' w
    Vec y = qr.colsPermutation().transpose() * w;
    y = R.transpose().triangularView<Eigen::Lower>().solve(y);
    const Vec z = qr.householderQ() * y;
    const Vec x = qr.solve(z);
    smin_inv = std::sqrt(x.norm());
    w = x.normalized();
  }
  return smin_inv > 0.0 ? smax * smin_inv : std::numeric_limits<double>::infinity();
}

inline double cond_2norm(const Mat& A, int svd_limit = 1500) {
  if (A.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  return A.cols() <= svd_limit ? cond_2norm_svd(A) : cond_2norm_estimate(A);
}

// --- run configuration ----------------------------------------------------------

struct PointsetRecipe {
  std::string kind = "grid";  // grid | cube | disc | mold | file
  int n_per_side = 23;
  double radius = -1.0;  // < 0: derive from the problem (plateau)
  int n_interior = 715;
  int n_boundary = 80;
  unsigned seed = 1;
  double grade = 0.3;  // disc radial grading exponent, 0.5 = uniform area
  std::string path;
  MoldGeometry mold;
  bool pdebc = true;

  int dim() const {
    if (kind == "cube") return 3;
    if (kind == "file") return 0;  // resolved at load
    return 2;
  }
};

struct ProblemRecipe {
  ProblemId id = ProblemId::CubicSemilinear;
  double s = 0.1;
  double gamma = 0.6;
  int motz_per_corner = 0;
};

enum class SolverMethod { Dogleg, NearlyExact, TwoDSubspace, FdDogleg, OperatorNewton };

inline const char* to_string(SolverMethod m) {
  switch (m) {
    case SolverMethod::Dogleg: return "dogleg";
    case SolverMethod::NearlyExact: return "full";
    case SolverMethod::TwoDSubspace: return "2dsub";
    case SolverMethod::FdDogleg: return "fd_dogleg";
    case SolverMethod::OperatorNewton: return "operator_newton";
  }
  return "?";
}

struct RunConfig {
  std::string name = "run";
  ProblemRecipe problem;
  KernelSpec kernel;
  PointsetRecipe pointset;
  GuessSpec guess;
  double guess_perturb = 0.0;  // adds perturb * standard normal draw to the guess
  unsigned perturb_seed = 99;
  SolverMethod method = SolverMethod::Dogleg;
  TrustRegionConfig tr;
  OperatorNewtonOptions newton;
  int n_eval = 2000;
  unsigned eval_seed = 1;
  bool eliminate = true;
  std::string csv_path;
  std::string trace_path;
};

// --- JSON (de)serialization -------------------------------------------------------

namespace detail {

inline std::string lower(std::string s) {
  for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline RbfFamily family_from_string(const std::string& s) {
  const std::string l = lower(s);
  if (l == "mq") return RbfFamily::MQ;
  if (l == "imq") return RbfFamily::IMQ;
  if (l == "matern") return RbfFamily::Matern;
  if (l == "wc4") return RbfFamily::WC4;
  throw ConfigError("unknown RBF family '" + s + "'");
}

inline ProblemId problem_from_string(const std::string& s) {
  const std::string l = lower(s);
  if (l == "cubic") return ProblemId::CubicSemilinear;
  if (l == "plateau") return ProblemId::Plateau;
  if (l == "hele_shaw") return ProblemId::HeleShawPLaplace;
  if (l == "monge_ampere_2d") return ProblemId::MongeAmpere2D;
  if (l == "monge_ampere_3d") return ProblemId::MongeAmpere3D;
  throw ConfigError("unknown problem id '" + s + "'");
}

inline SolverMethod method_from_string(const std::string& s) {
  const std::string l = lower(s);
  if (l == "dogleg") return SolverMethod::Dogleg;
  if (l == "nearly_exact" || l == "full") return SolverMethod::NearlyExact;
  if (l == "two_d_subspace" || l == "2dsub") return SolverMethod::TwoDSubspace;
  if (l == "fd_dogleg") return SolverMethod::FdDogleg;
  if (l == "operator_newton" || l == "newton") return SolverMethod::OperatorNewton;
  throw ConfigError("unknown solver method '" + s + "'");
}

inline GuessStrategy guess_from_string(const std::string& s) {
  const std::string l = lower(s);
  if (l == "zero") return GuessStrategy::Zero;
  if (l == "gaussian") return GuessStrategy::GaussianRandom;
  if (l == "laplacian") return GuessStrategy::Laplacian;
  if (l == "poisson") return GuessStrategy::Poisson;
  throw ConfigError("unknown guess strategy '" + s + "'");
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    c.name = detail::get_or<std::string>(j, "name", c.name);
    if (!j.contains("problem") || !j.at("problem").contains("id"))
      throw ConfigError("config needs problem.id");
    const json& jp = j.at("problem");
    c.problem.id = detail::problem_from_string(jp.at("id").get<std::string>());
    c.problem.s = detail::get_or(jp, "s", c.problem.s);
    c.problem.gamma = detail::get_or(jp, "gamma", c.problem.gamma);
    c.problem.motz_per_corner = detail::get_or(jp, "motz_per_corner", c.problem.motz_per_corner);

    if (!j.contains("kernel") || !j.at("kernel").contains("family"))
      throw ConfigError("config needs kernel.family");
    const json& jk = j.at("kernel");
    c.kernel.family = detail::family_from_string(jk.at("family").get<std::string>());
    c.kernel.c = detail::get_or(jk, "c", detail::get_or(jk, "L", 1.0));
    c.kernel.alpha = detail::get_or(jk, "alpha", 0);
    c.kernel.normalized = detail::get_or(jk, "normalized", false);
    c.kernel.augment_constant = detail::get_or(jk, "augment_constant", false);

    const json jps = j.value("pointset", json::object());
    c.pointset.kind = detail::get_or<std::string>(jps, "kind", c.pointset.kind);
    c.pointset.n_per_side = detail::get_or(jps, "n_per_side", c.pointset.n_per_side);
    c.pointset.radius = detail::get_or(jps, "radius", c.pointset.radius);
    c.pointset.n_interior = detail::get_or(jps, "n_interior", c.pointset.n_interior);
    c.pointset.n_boundary = detail::get_or(jps, "n_boundary", c.pointset.n_boundary);
    c.pointset.seed = detail::get_or(jps, "seed", c.pointset.seed);
    c.pointset.grade = detail::get_or(jps, "grade", c.pointset.grade);
    c.pointset.path = detail::get_or<std::string>(jps, "path", "");
    c.pointset.pdebc = detail::get_or(jps, "pdebc", true);
    if (jps.contains("mold")) {
      const json& jm = jps.at("mold");
      c.pointset.mold.width = detail::get_or(jm, "width", c.pointset.mold.width);
      c.pointset.mold.height = detail::get_or(jm, "height", c.pointset.mold.height);
      c.pointset.mold.slit_lo = detail::get_or(jm, "slit_lo", c.pointset.mold.slit_lo);
      c.pointset.mold.slit_hi = detail::get_or(jm, "slit_hi", c.pointset.mold.slit_hi);
    }

    const json jg = j.value("guess", json::object());
    c.guess.strategy = detail::guess_from_string(detail::get_or<std::string>(jg, "strategy", "zero"));
    c.guess.seed = detail::get_or(jg, "seed", c.guess.seed);
    c.guess.poisson_coeff = detail::get_or(jg, "poisson_coeff", c.guess.poisson_coeff);
    c.guess_perturb = detail::get_or(jg, "perturb", 0.0);
    c.perturb_seed = detail::get_or(jg, "perturb_seed", c.perturb_seed);

    const json js = j.value("solver", json::object());
    c.method = detail::method_from_string(detail::get_or<std::string>(js, "method", "dogleg"));
    c.tr.delta0 = detail::get_or(js, "delta0", c.tr.delta0);
    c.tr.delta_max = detail::get_or(js, "delta_max", c.tr.delta_max);
    c.tr.eta = detail::get_or(js, "eta", c.tr.eta);
    c.tr.scaling = detail::get_or(js, "scaling", false);
    c.tr.max_iter = detail::get_or(js, "max_iter", c.tr.max_iter);
    c.tr.stagnation.window = detail::get_or(js, "stagnation_window", c.tr.stagnation.window);
    c.tr.stagnation.rel_drop = detail::get_or(js, "stagnation_rel_drop", c.tr.stagnation.rel_drop);
    c.tr.stagnation.mu_floor_rel = detail::get_or(js, "mu_floor_rel", c.tr.stagnation.mu_floor_rel);
    c.tr.stagnation.reject_window =
        detail::get_or(js, "reject_window", c.tr.stagnation.reject_window);
    c.tr.stagnation.slow_window = detail::get_or(js, "slow_window", c.tr.stagnation.slow_window);
    c.tr.stagnation.slow_factor = detail::get_or(js, "slow_factor", c.tr.stagnation.slow_factor);
    c.tr.eig_tol = detail::get_or(js, "eig_tol", c.tr.eig_tol);
    c.tr.record_iterates = detail::get_or(js, "record_iterates", false);
    c.newton.max_iter = detail::get_or(js, "max_newton_iter", c.newton.max_iter);

    const json je = j.value("eval", json::object());
    c.n_eval = detail::get_or(je, "n_points", c.n_eval);
    c.eval_seed = detail::get_or(je, "seed", c.eval_seed);

    c.eliminate = detail::get_or(j, "eliminate", true);
    const json jo = j.value("output", json::object());
    c.csv_path = detail::get_or<std::string>(jo, "csv", "");
    c.trace_path = detail::get_or<std::string>(jo, "trace", "");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline json config_to_json(const RunConfig& c) {
  json j;
  j["name"] = c.name;
  j["problem"] = {{"id", to_string(c.problem.id)},
                  {"s", c.problem.s},
                  {"gamma", c.problem.gamma},
                  {"motz_per_corner", c.problem.motz_per_corner}};
  const char* fam = c.kernel.family == RbfFamily::MQ       ? "MQ"
                    : c.kernel.family == RbfFamily::IMQ    ? "IMQ"
                    : c.kernel.family == RbfFamily::Matern ? "MATERN"
                                                           : "WC4";
  j["kernel"] = {{"family", fam},
                 {"c", c.kernel.c},
                 {"alpha", c.kernel.alpha},
                 {"normalized", c.kernel.normalized},
                 {"augment_constant", c.kernel.augment_constant}};
  j["pointset"] = {{"kind", c.pointset.kind},
                   {"n_per_side", c.pointset.n_per_side},
                   {"radius", c.pointset.radius},
                   {"n_interior", c.pointset.n_interior},
                   {"n_boundary", c.pointset.n_boundary},
                   {"seed", c.pointset.seed},
                   {"grade", c.pointset.grade},
                   {"path", c.pointset.path},
                   {"pdebc", c.pointset.pdebc},
                   {"mold",
                    {{"width", c.pointset.mold.width},
                     {"height", c.pointset.mold.height},
                     {"slit_lo", c.pointset.mold.slit_lo},
                     {"slit_hi", c.pointset.mold.slit_hi}}}};
  j["guess"] = {{"strategy", to_string(c.guess.strategy)},
                {"seed", c.guess.seed},
                {"poisson_coeff", c.guess.poisson_coeff},
                {"perturb", c.guess_perturb},
                {"perturb_seed", c.perturb_seed}};
  j["solver"] = {{"method", to_string(c.method)},
                 {"delta0", c.tr.delta0},
                 {"delta_max", c.tr.delta_max},
                 {"eta", c.tr.eta},
                 {"scaling", c.tr.scaling},
                 {"max_iter", c.tr.max_iter},
                 {"stagnation_window", c.tr.stagnation.window},
                 {"stagnation_rel_drop", c.tr.stagnation.rel_drop},
                 {"mu_floor_rel", c.tr.stagnation.mu_floor_rel},
                 {"reject_window", c.tr.stagnation.reject_window},
                 {"eig_tol", c.tr.eig_tol},
                 {"record_iterates", c.tr.record_iterates},
                 {"max_newton_iter", c.newton.max_iter}};
  j["eval"] = {{"n_points", c.n_eval}, {"seed", c.eval_seed}};
  j["eliminate"] = c.eliminate;
  j["output"] = {{"csv", c.csv_path}, {"trace", c.trace_path}};
  return j;
}

// --- assembling a run -------------------------------------------------------------

struct BuiltRun {
  Pointset ps;
  ProblemDefinition prob;
  EvaluationSet eval;
  MotzFrame frames[2];
  bool has_frames = false;
};

inline BuiltRun build_inputs(const RunConfig& c) {
  BuiltRun b;
  const PointsetRecipe& r = c.pointset;
  if (r.kind == "grid") {
    b.ps = generate_grid(GridDomain::UnitSquare, r.n_per_side);
    b.eval = eval_set_unit(2, c.n_eval, c.eval_seed);
  } else if (r.kind == "cube") {
    b.ps = generate_grid(GridDomain::UnitCube, r.n_per_side);
    b.eval = eval_set_unit(3, c.n_eval, c.eval_seed);
  } else if (r.kind == "disc") {
    const double radius = r.radius > 0.0 ? r.radius : plateau_radius(c.problem.s);
    b.ps = generate_disc(radius, r.n_interior, r.n_boundary, r.seed, r.grade);
    b.eval = eval_set_disc(radius * 0.999, c.n_eval, c.eval_seed);
  } else if (r.kind == "mold") {
    MoldPointset mp = generate_mold(r.mold, r.n_interior, r.n_boundary, r.seed, r.pdebc);
    b.ps = std::move(mp.ps);
    b.frames[0] = mp.corner_frames[0];
    b.frames[1] = mp.corner_frames[1];
    b.has_frames = true;
    b.eval = eval_set_box(Point::Zero(), make_point(r.mold.width, r.mold.height), 2, c.n_eval,
                          c.eval_seed);
  } else if (r.kind == "file") {
    b.ps = load_pointset(r.path);
    if (c.problem.id == ProblemId::HeleShawPLaplace) {
      // corner frames derived from the configured geometry
      b.frames[0] = MotzFrame{make_point(r.mold.slit_lo, 0), make_point(-1, 0), make_point(0, 1)};
      b.frames[1] = MotzFrame{make_point(r.mold.slit_hi, 0), make_point(1, 0), make_point(0, 1)};
      b.has_frames = true;
    }
  } else {
    throw ConfigError("unknown pointset kind '" + r.kind + "'");
  }

  switch (c.problem.id) {
    case ProblemId::CubicSemilinear: b.prob = cubic_semilinear(); break;
    case ProblemId::Plateau: b.prob = plateau(c.problem.s); break;
    case ProblemId::HeleShawPLaplace: {
      b.prob = hele_shaw(c.problem.gamma, c.pointset.mold, c.problem.motz_per_corner);
      if (c.problem.motz_per_corner > 0) {
        if (!b.has_frames) throw ConfigError("Motz enrichment needs a mold geometry");
        b.prob.enrichment = MotzConfig{c.problem.motz_per_corner, {b.frames[0], b.frames[1]}};
      }
      break;
    }
    case ProblemId::MongeAmpere2D: b.prob = monge_ampere(2); break;
    case ProblemId::MongeAmpere3D: b.prob = monge_ampere(3); break;
  }
  if (b.prob.dim != b.ps.dim)
    throw ConfigError("problem dimension does not match the pointset");
  return b;
}

// --- metrics ----------------------------------------------------------------------

struct MetricsRow {
  std::string name, problem, method, kernel;
  int N = 0;  // number of RBF centres
  double shape = 0.0;
  double mu_inf = std::numeric_limits<double>::quiet_NaN();
  double rms_eps = std::numeric_limits<double>::quiet_NaN();
  double max_eps = std::numeric_limits<double>::quiet_NaN();
  double rms_r = std::numeric_limits<double>::quiet_NaN();
  double max_r = std::numeric_limits<double>::quiet_NaN();
  double rms_rc = std::numeric_limits<double>::quiet_NaN();
  double cond_j = std::numeric_limits<double>::quiet_NaN();
  double cond_h = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  int accepted = 0;
  bool converged = false;
  std::string reason;
  double wall_s = 0.0;
  std::string error;
};

inline std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  char b[48];
  std::snprintf(b, sizeof(b), "%.10g", v);
  return b;
}

inline std::string csv_header(bool timing) {
  std::string h =
      "name,problem,method,kernel,N,shape,mu_inf,rms_eps,max_eps,rms_R,max_R,rms_Rc,cond_J,"
      "cond_H,iterations,accepted,converged,reason";
  if (timing) h += ",wall_s";
  return h + "\n";
}

inline std::string csv_row(const MetricsRow& m, bool timing) {
  std::string s;
  s += m.name + "," + m.problem + "," + m.method + "," + m.kernel + ",";
  s += std::to_string(m.N) + "," + csv_num(m.shape) + "," + csv_num(m.mu_inf) + ",";
  s += csv_num(m.rms_eps) + "," + csv_num(m.max_eps) + "," + csv_num(m.rms_r) + ",";
  s += csv_num(m.max_r) + "," + csv_num(m.rms_rc) + "," + csv_num(m.cond_j) + ",";
  s += csv_num(m.cond_h) + "," + std::to_string(m.iterations) + "," + std::to_string(m.accepted);
  s += std::string(",") + (m.converged ? "1" : "0") + "," + (m.reason.empty() ? "-" : m.reason);
  if (timing) s += "," + csv_num(m.wall_s);
  return s + "\n";
}

struct RunResult {
  MetricsRow row;
  SolveReport report;                // trust-region methods
  OperatorNewtonReport newton;       // operator-Newton
  bool used_trust_region = false;
  bool ok = false;
};

inline void eval_metrics(const CollocationSystem& sys, const Vec& alpha, const EvaluationSet& es,
                         MetricsRow& m) {
  if (es.size() == 0) return;
  const ProblemDefinition& prob = sys.problem();
  double se = 0, me = 0, sr = 0, mr = 0;
  for (const Point& x : es.points) {
    const double r = sys.pde_residual_at(x, alpha);
    sr += r * r;
    mr = std::max(mr, std::abs(r));
    if (prob.exact_solution) {
      const double e = sys.value_at(x, alpha) - prob.exact_solution(x);
      se += e * e;
      me = std::max(me, std::abs(e));
    }
  }
  m.rms_r = std::sqrt(sr / es.size());
  m.max_r = mr;
  if (prob.exact_solution) {
    m.rms_eps = std::sqrt(se / es.size());
    m.max_eps = me;
  }
}

inline void write_trace(const std::string& path, const RunConfig& cfg, const SolveReport& rep) {
  if (path.empty()) return;
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open trace file '" + path + "'");
  json meta = {{"config", cfg.name},
               {"method", to_string(cfg.method)},
               {"mu0", rep.initial_mu},
               {"reduced_dim", rep.final_beta.size()}};
  f << meta.dump() << "\n";
  for (const IterationRecord& r : rep.trace) {
    json line = {{"k", r.k},          {"mu", r.mu},
                 {"delta", r.delta},  {"rho", r.rho},
                 {"step", to_string(r.kind)}, {"step_norm", r.step_norm},
                 {"accepted", r.accepted}};
    if (r.hessian_pd.has_value())
      line["hessian_pd"] = *r.hessian_pd;
    else
      line["hessian_pd"] = nullptr;
    f << line.dump() << "\n";
  }
  json tail = {{"final_mu", rep.final_mu},
               {"converged", rep.converged},
               {"reason", to_string(rep.reason)},
               {"iterations", rep.iterations},
               {"accepted", rep.accepted_steps}};
  f << tail.dump() << "\n";
}

inline RunResult run(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  MetricsRow& m = res.row;
  m.name = cfg.name;
  m.problem = to_string(cfg.problem.id);
  m.method = to_string(cfg.method);
  m.kernel = cfg.kernel.describe();
  m.shape = cfg.kernel.c;

  BuiltRun inputs = build_inputs(cfg);
  KernelSpec kernel = cfg.kernel;
  kernel.dim = inputs.ps.dim;
  const CollocationSystem sys =
      CollocationSystem::build(kernel, inputs.ps, inputs.prob, cfg.eliminate);
  m.N = int(sys.centres().size());

  Vec beta0 = initial_guess(cfg.guess, sys);

  if (cfg.method == SolverMethod::OperatorNewton) {
    Vec alpha0 = sys.alpha_of(beta0);
    if (cfg.guess_perturb != 0.0)
      alpha0 += cfg.guess_perturb * gaussian_vector(int(alpha0.size()), cfg.perturb_seed);
    res.newton = operator_newton_solve(sys, alpha0, cfg.newton);
    const Vec W = kansa::detail::full_residual(sys, res.newton.alpha);
    m.mu_inf = 0.5 * W.squaredNorm();
    m.rms_rc = res.newton.rms_rc.back();
    m.iterations = res.newton.iterations;
    m.converged = res.newton.converged;
    m.reason = res.newton.diverged ? "diverged" : (res.newton.converged ? "converged" : "stalled");
    if (!res.newton.diverged) eval_metrics(sys, res.newton.alpha, inputs.eval, m);
    res.ok = res.newton.converged;
  } else {
    if (cfg.guess_perturb != 0.0)
      beta0 += cfg.guess_perturb * gaussian_vector(int(beta0.size()), cfg.perturb_seed);
    TrustRegionConfig tr = cfg.tr;
    switch (cfg.method) {
      case SolverMethod::Dogleg:
      case SolverMethod::FdDogleg: tr.trs = TrsMethod::Dogleg; break;
      case SolverMethod::NearlyExact: tr.trs = TrsMethod::NearlyExact; break;
      case SolverMethod::TwoDSubspace: tr.trs = TrsMethod::TwoDSubspace; break;
      default: break;
    }
    CollocationEvaluator eval{&sys, cfg.method == SolverMethod::FdDogleg};
    res.report = trust_region_solve(eval, tr, beta0);
    res.used_trust_region = true;
    const SolveReport& rep = res.report;
    m.mu_inf = rep.final_mu;
    m.iterations = rep.iterations;
    m.accepted = rep.accepted_steps;
    m.converged = rep.converged;
    m.reason = to_string(rep.reason);
    const Vec alpha = sys.alpha_of(rep.final_beta);
    const Vec Wc = kansa::detail::full_residual(sys, alpha);
    m.rms_rc = std::sqrt(Wc.squaredNorm() / Wc.size());
    m.cond_j = cond_2norm(sys.jacobian(rep.final_beta));
    res.report.cond_J_final = m.cond_j;
    if (tr.trs != TrsMethod::Dogleg)
      m.cond_h = cond_2norm(sys.merit_hessian(rep.final_beta));
    eval_metrics(sys, alpha, inputs.eval, m);
    res.ok = rep.converged;
    write_trace(cfg.trace_path, cfg, rep);
  }
  m.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!cfg.csv_path.empty()) {
    std::ofstream f(cfg.csv_path);
    if (!f) throw ConfigError("cannot open csv file '" + cfg.csv_path + "'");
    f << csv_header(true) << csv_row(m, true);
  }
  return res;
}

// --- sweep ------------------------------------------------------------------------

inline int worker_count(int jobs) {
  int hw = int(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("SOLVER_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return std::max(1, std::min(jobs, hw));
}

// Runs every config (worker threads, one solve per thread), aggregating rows
// in input order. Failures are isolated per row.
inline std::vector<RunResult> sweep(const std::vector<RunConfig>& configs) {
  std::vector<RunResult> results(configs.size());
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      try {
        results[i] = run(configs[i]);
      } catch (const std::exception& e) {
        results[i].row.name = configs[i].name;
        results[i].row.problem = to_string(configs[i].problem.id);
        results[i].row.method = to_string(configs[i].method);
        results[i].row.kernel = configs[i].kernel.describe();
        results[i].row.reason = "error";
        results[i].row.error = e.what();
        results[i].ok = false;
      }
    }
  };
  const int n_workers = worker_count(int(configs.size()));
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return results;
}

inline std::string sweep_csv(const std::vector<RunResult>& results, bool timing = true) {
  std::string out = csv_header(timing);
  for (const RunResult& r : results) out += csv_row(r.row, timing);
  return out;
}

// --- derivative validation (finite-difference oracle suite) -----------------------

struct FdCheckReport {
  double jac_err = 0.0;      // analytic J vs central differences of the residual
  double hess_err = 0.0;     // analytic H vs central differences of the gradient
  double d1_err = 0.0;       // residual partials vs differences in component values
  double d2_err = 0.0;       // second partials vs differences of d1
  bool pass(double jac_tol = 1e-6, double hess_tol = 1e-5, double d1_tol = 1e-6,
            double d2_tol = 1e-5) const {
    return jac_err <= jac_tol && hess_err <= hess_tol && d1_err <= d1_tol && d2_err <= d2_tol;
  }
};

// Entrywise difference scaled by the row magnitude of the reference (FD noise
// is proportional to the row's residual scale).
inline double scaled_max_diff(const Mat& A, const Mat& B) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < B.rows(); ++i) {
    const double scale = 1.0 + B.row(i).cwiseAbs().maxCoeff();
    worst = std::max(worst, (A.row(i) - B.row(i)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

// Random coefficient states for derivative checks. Hele-Shaw states are kept
// away from the gradient guard by seeding from a Laplacian solve.
inline Vec fd_check_state(const CollocationSystem& sys, unsigned seed, double scale = 0.3) {
  const int n = sys.eliminated() ? sys.reduced_dim() : sys.unknowns();
  Vec beta = scale * gaussian_vector(n, seed);
  if (sys.problem().name == "hele_shaw")
    beta += sys.beta_of(solve_linear_collocation(sys, nullptr));
  return beta;
}

inline FdCheckReport fd_check(const CollocationSystem& sys, int n_states = 5,
                              unsigned seed0 = 2024) {
  FdCheckReport rep;
  const ProblemDefinition& prob = sys.problem();
  const int S = prob.S();
  std::mt19937_64 rng(seed0);
  for (int t = 0; t < n_states; ++t) {
    const Vec beta = fd_check_state(sys, seed0 + 17 * t);
    // Richardson-extrapolated central differences
    const Mat J1 = sys.fd_jacobian(beta);
    const Mat J2 = sys.fd_jacobian(beta, 0.0, true, 0.5);
    rep.jac_err =
        std::max(rep.jac_err, scaled_max_diff((4.0 * J2 - J1) / 3.0, sys.jacobian(beta)));

    const Mat H = sys.merit_hessian(beta);
    Mat Hfd(H.rows(), H.cols());
    Vec bp = beta;
    auto grad_diff = [&](int jcol, double h) {
      double mu;
      Vec gp, gm;
      bp(jcol) = beta(jcol) + h;
      sys.merit_and_grad(bp, mu, gp);
      bp(jcol) = beta(jcol) - h;
      sys.merit_and_grad(bp, mu, gm);
      bp(jcol) = beta(jcol);
      return ((gp - gm) / (2.0 * h)).eval();
    };
    for (int jcol = 0; jcol < H.cols(); ++jcol) {
      const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                       (1.0 + std::abs(beta(jcol)));
      Hfd.col(jcol) = (4.0 * grad_diff(jcol, 0.5 * h) - grad_diff(jcol, h)) / 3.0;
    }
    rep.hess_err = std::max(rep.hess_err, scaled_max_diff(Hfd, H));

    // d1/d2 against differences in the component values themselves
    for (int rep_i = 0; rep_i < 4; ++rep_i) {
      Vec v = gaussian_vector(S, unsigned(rng()));
      if (prob.name == "hele_shaw" || prob.name == "plateau") {
        // keep |grad u| O(1)
        for (int m = 0; m < S; ++m)
          if (prob.components[m].kind == DiffKind::FirstPartial && std::abs(v(m)) < 0.3)
            v(m) = v(m) < 0 ? v(m) - 0.5 : v(m) + 0.5;
      }
      const Point x = make_point(0.31, 0.43, prob.dim == 3 ? 0.27 : 0.0);
      const Vec d1 = prob.pde_d1(x, v);
      const Mat d2 = prob.pde_d2(x, v);
      Vec d1fd(S);
      Mat d2fd(S, S);
      Vec vp = v;
      for (int mcol = 0; mcol < S; ++mcol) {
        const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                         (1.0 + std::abs(v(mcol)));
        vp(mcol) = v(mcol) + h;
        const double wp = prob.pde_residual(x, vp);
        const Vec d1p = prob.pde_d1(x, vp);
        vp(mcol) = v(mcol) - h;
        const double wm = prob.pde_residual(x, vp);
        const Vec d1m = prob.pde_d1(x, vp);
        vp(mcol) = v(mcol);
        d1fd(mcol) = (wp - wm) / (2.0 * h);
        d2fd.col(mcol) = (d1p - d1m) / (2.0 * h);
      }
      rep.d1_err = std::max(rep.d1_err, scaled_max_diff(d1fd, d1));
      rep.d2_err = std::max(rep.d2_err, scaled_max_diff(d2fd, d2));
    }
  }
  return rep;
}

// Small instance of each problem for the validate verb and the derivative
// acceptance checks.
inline RunConfig validation_config(ProblemId id) {
  RunConfig c;
  c.problem.id = id;
  c.n_eval = 50;
  switch (id) {
    case ProblemId::CubicSemilinear:
      c.kernel = KernelSpec::mq(0.25, 2);
      c.pointset.kind = "grid";
      c.pointset.n_per_side = 12;
      break;
    case ProblemId::Plateau:
      c.problem.s = 0.3;
      c.kernel = KernelSpec::matern(11, 0.35, 2);
      c.pointset.kind = "disc";
      c.pointset.n_interior = 110;
      c.pointset.n_boundary = 30;
      break;
    case ProblemId::HeleShawPLaplace:
      c.kernel = KernelSpec::imq(0.75, 2);
      c.pointset.kind = "mold";
      c.pointset.n_interior = 120;
      c.pointset.n_boundary = 46;
      c.problem.motz_per_corner = 1;
      break;
    case ProblemId::MongeAmpere2D:
      c.kernel = KernelSpec::mq(0.3, 2);
      c.pointset.kind = "grid";
      c.pointset.n_per_side = 12;
      break;
    case ProblemId::MongeAmpere3D:
      c.kernel = KernelSpec::mq(0.45, 3);
      c.pointset.kind = "cube";
      c.pointset.n_per_side = 6;
      break;
  }
  return c;
}

inline FdCheckReport validate_problem(ProblemId id, int n_states = 5) {
  const RunConfig c = validation_config(id);
  BuiltRun inputs = build_inputs(c);
  KernelSpec kernel = c.kernel;
  kernel.dim = inputs.ps.dim;
  const CollocationSystem sys = CollocationSystem::build(kernel, inputs.ps, inputs.prob, true);
  return fd_check(sys, n_states);
}

// --- preset tables ------------------------------------------------------------------

// One named group per experiment table; each group becomes <group>.csv.
inline std::vector<RunConfig> paper_presets() {
  std::vector<RunConfig> out;
  auto push = [&out](RunConfig c) { out.push_back(std::move(c)); };

  // cubic semilinear, compactly supported kernel, grid refinement
  for (int n : {23, 26, 28, 32}) {
    RunConfig c;
    c.name = "table3/wc4_n" + std::to_string(n * n);
    c.problem.id = ProblemId::CubicSemilinear;
    c.kernel = KernelSpec::wc4(0.3, 2);
    c.pointset.kind = "grid";
    c.pointset.n_per_side = n;
    c.method = SolverMethod::Dogleg;
    push(c);
  }
  // cubic semilinear, multiquadric: shape sweep at fixed N, then N sweep
  for (double cc : {0.08, 0.16, 0.24, 0.32, 0.40}) {
    RunConfig c;
    c.name = "table5/mq_c" + csv_num(cc);
    c.problem.id = ProblemId::CubicSemilinear;
    c.kernel = KernelSpec::mq(cc, 2);
    c.pointset.kind = "grid";
    c.pointset.n_per_side = 20;
    c.method = SolverMethod::Dogleg;
    c.tr.max_iter = 120;
    push(c);
  }
  for (int n : {18, 27, 35}) {
    RunConfig c;
    c.name = "table5/mq_n" + std::to_string(n * n);
    c.problem.id = ProblemId::CubicSemilinear;
    c.kernel = KernelSpec::mq(0.15, 2);
    c.pointset.kind = "grid";
    c.pointset.n_per_side = n;
    c.method = SolverMethod::Dogleg;
    c.tr.max_iter = 120;
    push(c);
  }
  // finite-difference Jacobian baseline: fine at low conditioning, fails high
  for (double cc : {0.08, 0.32}) {
    RunConfig c;
    c.name = "table6/fd_mq_c" + csv_num(cc);
    c.problem.id = ProblemId::CubicSemilinear;
    c.kernel = KernelSpec::mq(cc, 2);
    c.pointset.kind = "grid";
    c.pointset.n_per_side = 20;
    c.method = SolverMethod::FdDogleg;
    c.tr.max_iter = 60;
    push(c);
  }
  // Plateau on the disc: all three subproblem methods, two sharpness levels
  for (double s : {0.10, 0.02}) {
    for (SolverMethod mth :
         {SolverMethod::Dogleg, SolverMethod::NearlyExact, SolverMethod::TwoDSubspace}) {
      RunConfig c;
      std::string stag = s == 0.10 ? "s10" : "s02";
      c.name = "figure4/" + stag + "_" + to_string(mth);
      c.problem.id = ProblemId::Plateau;
      c.problem.s = s;
      c.kernel = KernelSpec::matern(11, 0.10, 2);
      c.kernel.normalized = true;
      c.pointset.kind = "disc";
      c.pointset.n_interior = 715;
      c.pointset.n_boundary = 80;
      c.pointset.seed = 2;
      c.pointset.grade = s <= 0.05 ? 0.28 : 0.4;
      c.guess.strategy = GuessStrategy::GaussianRandom;
      c.guess.seed = 5;
      c.method = mth;
      c.tr.max_iter = 300;
      push(c);
    }
  }
  // operator-Newton on the shrunken Plateau disc, perturbed Laplacian guesses
  for (double pert : {0.0, 0.03, 0.3}) {
    RunConfig c;
    c.name = "table7/newton_pert" + csv_num(pert);
    c.problem.id = ProblemId::Plateau;
    c.problem.s = 1.0;
    c.kernel = KernelSpec::matern(11, 0.10, 2);
    c.kernel.normalized = true;
    c.pointset.kind = "disc";
    c.pointset.n_interior = 715;
    c.pointset.n_boundary = 80;
    c.pointset.seed = 2;
    c.guess.strategy = GuessStrategy::Laplacian;
    c.guess_perturb = pert;
    c.perturb_seed = 5;
    c.method = SolverMethod::OperatorNewton;
    push(c);
  }
  // Hele-Shaw mold: Motz enrichment sweep at two shape parameters
  for (double cc : {0.75, 1.5}) {
    for (int n : {0, 1, 2, 3}) {
      RunConfig c;
      c.name = "table8/imq_c" + csv_num(cc) + "_motz" + std::to_string(n);
      c.problem.id = ProblemId::HeleShawPLaplace;
      c.problem.gamma = 0.6;
      c.problem.motz_per_corner = n;
      c.kernel = KernelSpec::imq(cc, 2);
      c.pointset.kind = "mold";
      c.pointset.n_interior = 986;
      c.pointset.n_boundary = 166;
      c.pointset.seed = 3;
      c.guess.strategy = GuessStrategy::Laplacian;
      c.method = SolverMethod::Dogleg;
      c.tr.max_iter = 150;
      push(c);
    }
  }
  // Monge-Ampere in 3D: dogleg stalls, Hessian-based methods converge
  for (SolverMethod mth :
       {SolverMethod::Dogleg, SolverMethod::NearlyExact, SolverMethod::TwoDSubspace}) {
    RunConfig c;
    c.name = std::string("figure6/mq_") + to_string(mth);
    c.problem.id = ProblemId::MongeAmpere3D;
    c.kernel = KernelSpec::mq(0.264, 3);
    c.pointset.kind = "cube";
    c.pointset.n_per_side = 11;
    c.guess.strategy = GuessStrategy::Poisson;
    c.method = mth;
    c.tr.max_iter = mth == SolverMethod::Dogleg ? 150 : 120;
    c.n_eval = 1000;
    push(c);
  }
  return out;
}

// Runs every preset, writes one CSV per table group plus config JSONs and
// iteration traces. Timing columns are off by default so reruns with the same
// seeds are byte-identical.
inline int tables_command(const std::string& outdir, bool timing = false) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  fs::create_directories(outdir + "/configs");
  fs::create_directories(outdir + "/traces");
  std::vector<RunConfig> presets = paper_presets();
  for (RunConfig& c : presets) {
    const std::string flat = [&] {
      std::string s = c.name;
      for (char& ch : s)
        if (ch == '/') ch = '_';
      return s;
    }();
    c.trace_path = outdir + "/traces/" + flat + ".jsonl";
    std::ofstream jf(outdir + "/configs/" + flat + ".json");
    jf << config_to_json(c).dump(2) << "\n";
  }
  const std::vector<RunResult> results = sweep(presets);
  std::map<std::string, std::string> tables;
  for (size_t i = 0; i < results.size(); ++i) {
    const std::string group = presets[i].name.substr(0, presets[i].name.find('/'));
    if (tables[group].empty()) tables[group] = csv_header(timing);
    tables[group] += csv_row(results[i].row, timing);
  }
  for (const auto& [group, csv] : tables) {
    std::ofstream f(outdir + "/" + group + ".csv");
    f << csv;
  }
  int failures = 0;
  for (const RunResult& r : results)
    if (!r.row.error.empty()) ++failures;
  return failures;
}

}  // namespace kansa::bench
