#pragma once

// Pointset generation and IO: tensor grids, Halton-filled discs, the
// rectangle-with-inlet mold layout with mixed boundary tags and off-boundary
// extra centres, plus evaluation sets and fill distance.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "kansa/common.hpp"

namespace kansa {

// Boundary condition tag per boundary node. The *AndPde variants also carry a
// PDE collocation row, balanced by one extra off-boundary centre each.
enum class BcTag { Dirichlet, Neumann, DirichletAndPde, NeumannAndPde };

inline bool tag_has_pde(BcTag t) {
  return t == BcTag::DirichletAndPde || t == BcTag::NeumannAndPde;
}
inline bool tag_is_dirichlet(BcTag t) {
  return t == BcTag::Dirichlet || t == BcTag::DirichletAndPde;
}

struct Pointset {
  int dim = 2;
  std::vector<Point> nodes;  // first `interior` entries lie inside the domain
  int interior = 0;
  std::vector<Point> normals;  // outward unit normal per boundary node
  std::vector<BcTag> tags;     // per boundary node
  std::vector<Point> extra_centres;

  int size() const { return int(nodes.size()); }
  int boundary_count() const { return size() - interior; }
  bool is_boundary(int i) const { return i >= interior; }
  const Point& normal_of(int i) const { return normals[i - interior]; }
  BcTag tag_of(int i) const { return tags[i - interior]; }
  bool pde_row_at(int i) const { return !is_boundary(i) || tag_has_pde(tag_of(i)); }

  int pde_row_count() const {
    int n = interior;
    for (BcTag t : tags) n += tag_has_pde(t) ? 1 : 0;
    return n;
  }

  double min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < nodes.size(); ++i)
      for (size_t j = i + 1; j < nodes.size(); ++j)
        best = std::min(best, (nodes[i] - nodes[j]).norm());
    return best;
  }

  void validate() const {
    if (interior < 0 || interior > size()) throw ValidationError("interior count out of range");
    if (int(normals.size()) != boundary_count() || int(tags.size()) != boundary_count())
      throw ValidationError("boundary annotations do not match boundary node count");
    for (size_t k = 0; k < normals.size(); ++k)
      if (std::abs(normals[k].norm() - 1.0) > 1e-8)
        throw ValidationError("boundary normal " + std::to_string(k) + " is not unit length");
    if (size() > 1 && !(min_pairwise_distance() > 0.0))
      throw ValidationError("pointset contains duplicate nodes");
  }
};

struct EvaluationSet {
  std::vector<Point> points;
  int size() const { return int(points.size()); }
};

// Local polar frame at a boundary singularity: theta = 0 along the Neumann
// edge, the domain on the `into_domain` side. Axis vectors must be unit and
// orthogonal; keeping them exact (axis-aligned) avoids branch-cut noise for
// points lying exactly on the edges.
struct MotzFrame {
  Point origin = Point::Zero();
  Point edge_dir = make_point(1, 0);
  Point into_domain = make_point(0, 1);

  static MotzFrame from_angle(const Point& origin, double edge_angle) {
    MotzFrame f;
    f.origin = origin;
    f.edge_dir = make_point(std::cos(edge_angle), std::sin(edge_angle));
    f.into_domain = make_point(-std::sin(edge_angle), std::cos(edge_angle));
    return f;
  }
};

// --- low-discrepancy sampling -------------------------------------------------

inline double halton(std::size_t index, int base) {
  double f = 1.0, value = 0.0;
  while (index > 0) {
    f /= base;
    value += f * double(index % base);
    index /= base;
  }
  return value;
}

inline Point halton_point(std::size_t index, int dim) {
  static const int bases[3] = {2, 3, 5};
  Point p = Point::Zero();
  for (int k = 0; k < dim; ++k) p[k] = halton(index, bases[k]);
  return p;
}

// --- generators ----------------------------------------------------------------

enum class GridDomain { UnitSquare, UnitCube };

// Tensor grid on the unit square/cube, interior nodes first, Dirichlet tags.
inline Pointset generate_grid(GridDomain domain, int n_per_side) {
  if (n_per_side < 3) throw ConfigError("generate_grid needs n_per_side >= 3");
  const int d = domain == GridDomain::UnitSquare ? 2 : 3;
  const int n = n_per_side;
  const double h = 1.0 / (n - 1);
  Pointset ps;
  ps.dim = d;
  std::vector<Point> boundary;
  std::vector<Point> bnormals;
  const int nz = d == 3 ? n : 1;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Point p = make_point(i * h, j * h, d == 3 ? k * h : 0.0);
        const bool edge_i = (i == 0 || i == n - 1);
        const bool edge_j = (j == 0 || j == n - 1);
        const bool edge_k = d == 3 && (k == 0 || k == n - 1);
        if (edge_i || edge_j || edge_k) {
          Point nvec = Point::Zero();
          if (i == 0) nvec[0] = -1;
          if (i == n - 1) nvec[0] = 1;
          if (j == 0) nvec[1] = -1;
          if (j == n - 1) nvec[1] = 1;
          if (d == 3 && k == 0) nvec[2] = -1;
          if (d == 3 && k == n - 1) nvec[2] = 1;
          boundary.push_back(p);
          bnormals.push_back(nvec.normalized());
        } else {
          ps.nodes.push_back(p);
        }
      }
  ps.interior = int(ps.nodes.size());
  ps.nodes.insert(ps.nodes.end(), boundary.begin(), boundary.end());
  ps.normals = std::move(bnormals);
  ps.tags.assign(ps.boundary_count(), BcTag::Dirichlet);
  return ps;
}

namespace detail {

// A few Lloyd iterations against a dense low-discrepancy sample cloud:
// scatters stay scattered but clumps and voids even out, which matters for
// both interpolation accuracy and conditioning. Deterministic.
inline void lloyd_smooth(std::vector<Point>& nodes, int n_free,
                         const std::vector<Point>& samples, double keep_radius,
                         int iters = 4) {
  std::vector<Point> sum(n_free);
  std::vector<int> count(n_free);
  for (int it = 0; it < iters; ++it) {
    std::fill(sum.begin(), sum.end(), Point::Zero().eval());
    std::fill(count.begin(), count.end(), 0);
    for (const Point& s : samples) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < nodes.size(); ++j) {
        const double d = (s - nodes[j]).squaredNorm();
        if (d < bd) {
          bd = d;
          best = int(j);
        }
      }
      if (best < n_free) {
        sum[best] += s;
        ++count[best];
      }
    }
    for (int j = 0; j < n_free; ++j) {
      if (count[j] == 0) continue;
      Point p = sum[j] / count[j];
      const double r = p.norm();
      if (keep_radius > 0.0 && r > keep_radius) p *= keep_radius / r;
      nodes[j] = p;
    }
  }
}

}  // namespace detail

// Disc of given radius centred at the origin: Halton-driven interior fill,
// mildly graded toward the rim (where elliptic boundary layers live) and
// evened out by a few Lloyd iterations; equispaced boundary ring with exact
// radial normals. `grade` is the radial mapping exponent, 0.5 = uniform area.
inline Pointset generate_disc(double radius, int n_interior, int n_boundary, unsigned seed = 0,
                              double grade = 0.3) {
  if (!(radius > 0.0)) throw ConfigError("generate_disc needs a positive radius");
  if (n_boundary < 1) throw ConfigError("generate_disc needs at least one boundary node");
  Pointset ps;
  ps.dim = 2;
  const double spacing = 2.0 * std::numbers::pi * radius / n_boundary;
  const double r_keep = radius - 0.1 * spacing;
  auto polar = [grade](const Point& q, double rmax) {
    const double th = 2.0 * std::numbers::pi * q[0];
    const double r = rmax * std::pow(q[1], grade);
    return make_point(r * std::cos(th), r * std::sin(th));
  };
  std::size_t idx = 1 + seed;
  while (int(ps.nodes.size()) < n_interior)
    ps.nodes.push_back(polar(halton_point(idx++, 2), r_keep));
  if (n_interior > 0) {
    std::vector<Point> cloud;
    std::size_t cidx = 500009 + seed;
    while (int(cloud.size()) < 40 * n_interior)
      cloud.push_back(polar(halton_point(cidx++, 2), radius));
    // ring nodes take part as fixed sites so interior nodes keep their distance
    std::vector<Point> sites = ps.nodes;
    for (int k = 0; k < n_boundary; ++k) {
      const double th = 2.0 * std::numbers::pi * k / n_boundary;
      sites.push_back(make_point(radius * std::cos(th), radius * std::sin(th)));
    }
    detail::lloyd_smooth(sites, n_interior, cloud, r_keep);
    ps.nodes.assign(sites.begin(), sites.begin() + n_interior);
  }
  ps.interior = n_interior;
  for (int k = 0; k < n_boundary; ++k) {
    const double th = 2.0 * std::numbers::pi * k / n_boundary;
    const Point node = make_point(radius * std::cos(th), radius * std::sin(th));
    ps.nodes.push_back(node);
    ps.normals.push_back(node.normalized());
    ps.tags.push_back(BcTag::Dirichlet);
  }
  return ps;
}

// Floor plan of an injection mold: rectangle [0,w] x [0,h] with an inlet slit
// on the bottom edge. Inlet and front carry Dirichlet data, walls homogeneous
// Neumann; all boundary nodes except the two slit endpoints also collocate
// the PDE and get one extra centre pushed outward along the normal.
struct MoldGeometry {
  double width = 2.0;
  double height = 1.0;
  double slit_lo = 0.75;
  double slit_hi = 1.25;

  bool on_inlet(const Point& p) const {
    return p[1] == 0.0 && p[0] >= slit_lo && p[0] <= slit_hi;
  }
  bool on_front(const Point& p) const { return p[1] == height; }
};

struct MoldPointset {
  Pointset ps;
  MoldGeometry geom;
  MotzFrame corner_frames[2];  // slit_lo end, slit_hi end
};

inline MoldPointset generate_mold(const MoldGeometry& geom, int n_interior, int n_boundary,
                                  unsigned seed = 0, bool pdebc = true) {
  if (n_boundary < 8) throw ConfigError("generate_mold needs at least 8 boundary nodes");
  MoldPointset out;
  out.geom = geom;
  Pointset& ps = out.ps;
  ps.dim = 2;

  const double w = geom.width, h = geom.height;
  const double perimeter = 2.0 * (w + h);
  const double target = perimeter / n_boundary;

  struct Segment {
    Point a, b;
    Point normal;
    BcTag tag;
    bool include_ends;
  };
  // Bottom edge split at the slit; rectangle corners are skipped by a half
  // spacing inset, the slit endpoints are kept as Dirichlet-only nodes.
  const BcTag wall = pdebc ? BcTag::NeumannAndPde : BcTag::Neumann;
  const BcTag diri = pdebc ? BcTag::DirichletAndPde : BcTag::Dirichlet;
  std::vector<Segment> segs = {
      {make_point(0, 0), make_point(geom.slit_lo, 0), make_point(0, -1), wall, false},
      {make_point(geom.slit_lo, 0), make_point(geom.slit_hi, 0), make_point(0, -1), diri, true},
      {make_point(geom.slit_hi, 0), make_point(w, 0), make_point(0, -1), wall, false},
      {make_point(w, 0), make_point(w, h), make_point(1, 0), wall, false},
      {make_point(w, h), make_point(0, h), make_point(0, 1), diri, false},
      {make_point(0, h), make_point(0, 0), make_point(-1, 0), wall, false},
  };

  std::vector<Point> bnodes;
  std::vector<Point> bnormals;
  std::vector<BcTag> btags;
  std::vector<double> bspacing;
  for (const Segment& s : segs) {
    const double len = (s.b - s.a).norm();
    const int cells = std::max(1, int(std::round(len / target)));
    const double step = len / cells;
    const Point dir = (s.b - s.a) / len;
    const int k0 = s.include_ends ? 0 : 1;
    const int k1 = s.include_ends ? cells : cells - 1;
    for (int k = k0; k <= k1; ++k) {
      Point p = s.a + (k * step) * dir;
      // the slit endpoints never take a PDE row
      BcTag tag = s.tag;
      if (s.include_ends && (k == 0 || k == cells)) tag = BcTag::Dirichlet;
      bnodes.push_back(p);
      bnormals.push_back(s.normal);
      btags.push_back(tag);
      bspacing.push_back(step);
    }
  }

  // Interior Halton fill, kept clear of the boundary by a fraction of the
  // local spacing.
  const double margin = 0.4 * target;
  std::size_t idx = 1 + seed;
  while (int(ps.nodes.size()) < n_interior) {
    const Point q = halton_point(idx++, 2);
    const Point p = make_point(q[0] * w, q[1] * h);
    if (p[0] > margin && p[0] < w - margin && p[1] > margin && p[1] < h - margin)
      ps.nodes.push_back(p);
  }
  ps.interior = n_interior;
  ps.nodes.insert(ps.nodes.end(), bnodes.begin(), bnodes.end());
  ps.normals = std::move(bnormals);
  ps.tags = std::move(btags);
  for (size_t k = 0; k < ps.tags.size(); ++k)
    if (tag_has_pde(ps.tags[k]))
      ps.extra_centres.push_back(bnodes[k] + bspacing[k] * ps.normals[k]);

  out.corner_frames[0] = MotzFrame{make_point(geom.slit_lo, 0), make_point(-1, 0), make_point(0, 1)};
  out.corner_frames[1] = MotzFrame{make_point(geom.slit_hi, 0), make_point(1, 0), make_point(0, 1)};
  return out;
}

// --- evaluation sets -----------------------------------------------------------

inline EvaluationSet eval_set_box(const Point& lo, const Point& hi, int dim, int n,
                                  unsigned seed = 0) {
  EvaluationSet es;
  std::size_t idx = 1000003 + seed;
  while (es.size() < n) {
    const Point q = halton_point(idx++, dim);
    Point p = lo;
    for (int k = 0; k < dim; ++k) p[k] = lo[k] + q[k] * (hi[k] - lo[k]);
    es.points.push_back(p);
  }
  return es;
}

inline EvaluationSet eval_set_unit(int dim, int n, unsigned seed = 0) {
  Point hi = Point::Zero();
  for (int k = 0; k < dim; ++k) hi[k] = 1.0;
  return eval_set_box(Point::Zero(), hi, dim, n, seed);
}

inline EvaluationSet eval_set_disc(double radius, int n, unsigned seed = 0) {
  EvaluationSet es;
  std::size_t idx = 1000003 + seed;
  while (es.size() < n) {
    const Point q = halton_point(idx++, 2);
    const Point p = make_point((2.0 * q[0] - 1.0) * radius, (2.0 * q[1] - 1.0) * radius);
    if (p.norm() < radius) es.points.push_back(p);
  }
  return es;
}

inline double fill_distance(const Pointset& ps, const EvaluationSet& probe) {
  if (ps.nodes.empty() || probe.points.empty())
    throw ConfigError("fill_distance needs nonempty pointset and probe");
  double worst = 0.0;
  for (const Point& p : probe.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point& q : ps.nodes) best = std::min(best, (p - q).norm());
    worst = std::max(worst, best);
  }
  return worst;
}

// --- plain text IO ---------------------------------------------------------------
//
// Format: header `d M N n_extra`, then one node per line. Interior lines are
// `x [y [z]] I`; boundary lines append the tag (D, N, DP, NP) and the outward
// normal components; extra centres come last with tag X.

namespace detail {

inline const char* tag_code(BcTag t) {
  switch (t) {
    case BcTag::Dirichlet: return "D";
    case BcTag::Neumann: return "N";
    case BcTag::DirichletAndPde: return "DP";
    case BcTag::NeumannAndPde: return "NP";
  }
  return "?";
}

inline BcTag tag_from_code(const std::string& s, int line) {
  if (s == "D") return BcTag::Dirichlet;
  if (s == "N") return BcTag::Neumann;
  if (s == "DP") return BcTag::DirichletAndPde;
  if (s == "NP") return BcTag::NeumannAndPde;
  throw ValidationError("line " + std::to_string(line) + ": unknown boundary tag '" + s + "'");
}

inline void print_coords(std::string& out, const Point& p, int dim) {
  char buf[32];
  for (int k = 0; k < dim; ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g ", p[k]);
    out += buf;
  }
}

}  // namespace detail

inline void save_pointset(const Pointset& ps, const std::string& path) {
  std::string out;
  out += std::to_string(ps.dim) + " " + std::to_string(ps.interior) + " " +
         std::to_string(ps.size()) + " " + std::to_string(ps.extra_centres.size()) + "\n";
  for (int i = 0; i < ps.size(); ++i) {
    detail::print_coords(out, ps.nodes[i], ps.dim);
    if (!ps.is_boundary(i)) {
      out += "I\n";
    } else {
      out += detail::tag_code(ps.tag_of(i));
      out += " ";
      detail::print_coords(out, ps.normal_of(i), ps.dim);
      out += "\n";
    }
  }
  for (const Point& p : ps.extra_centres) {
    detail::print_coords(out, p, ps.dim);
    out += "X\n";
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << out;
}

inline Pointset load_pointset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open pointset file '" + path + "'");
  std::string line;
  int lineno = 0;
  auto next_line = [&]() {
    if (!std::getline(f, line)) throw ValidationError("unexpected end of pointset file");
    ++lineno;
  };
  next_line();
  int d = 0, m = 0, n = 0, nx = 0;
  {
    std::istringstream hdr(line);
    if (!(hdr >> d >> m >> n >> nx))
      throw ValidationError("line 1: malformed header, expected 'd M N n_extra'");
  }
  if (d < 1 || d > 3 || m < 0 || n < m || nx < 0)
    throw ValidationError("line 1: header values out of range");
  Pointset ps;
  ps.dim = d;
  ps.interior = m;
  auto parse_point = [&](std::istringstream& ss) {
    Point p = Point::Zero();
    for (int k = 0; k < d; ++k)
      if (!(ss >> p[k]))
        throw ValidationError("line " + std::to_string(lineno) + ": malformed coordinate");
    return p;
  };
  for (int i = 0; i < n; ++i) {
    next_line();
    std::istringstream ss(line);
    const Point p = parse_point(ss);
    std::string tag;
    if (!(ss >> tag))
      throw ValidationError("line " + std::to_string(lineno) + ": missing node tag");
    ps.nodes.push_back(p);
    if (i < m) {
      if (tag != "I")
        throw ValidationError("line " + std::to_string(lineno) + ": expected interior tag I");
    } else {
      ps.tags.push_back(detail::tag_from_code(tag, lineno));
      ps.normals.push_back(parse_point(ss));
    }
  }
  for (int i = 0; i < nx; ++i) {
    next_line();
    std::istringstream ss(line);
    const Point p = parse_point(ss);
    std::string tag;
    if (!(ss >> tag) || tag != "X")
      throw ValidationError("line " + std::to_string(lineno) + ": expected extra-centre tag X");
    ps.extra_centres.push_back(p);
  }
  ps.validate();
  return ps;
}

}  // namespace kansa
