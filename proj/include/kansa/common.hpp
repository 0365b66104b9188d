#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace kansa {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Points are stored padded to 3 components; unused coordinates stay zero so
// distance and dot products are dimension-blind.
using Point = Eigen::Vector3d;

inline Point make_point(double x, double y = 0.0, double z = 0.0) { return Point(x, y, z); }

// Bad kernel specs, mismatched dimensions, malformed run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pointset files or generated pointsets violating a structural invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value met while evaluating collocation residuals.
struct EvalError : std::runtime_error {
  int node = -1;
  EvalError(const std::string& what, int node_index) : std::runtime_error(what), node(node_index) {}
};

// Linear-algebra failure during a solve (rank deficiency, singular factor).
struct SolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace kansa
