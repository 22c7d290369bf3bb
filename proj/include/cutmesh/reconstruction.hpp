#pragma once

// Reconstruction of the zero-level set of phi^h inside one cut simplex:
// sign-based validity check, topology classification, edge intersections and
// Newton root search for the interface-element nodes. Everything here works
// in the reference coordinates of the element (or refinement cell) whose
// nodal values are passed in.

#include "core.hpp"
#include "levelset.hpp"
#include "mesh.hpp"
#include "parallel.hpp"
#include "reference_element.hpp"
#include "transfinite.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cutmesh {

// ---------------------------------------------------------------------------
// Search variants

enum class Reconstruction2D { Linear = 1, Hermite = 2 };
enum class Direction2D { OppositeNode = 1, EdgeDirections = 2, Normal = 3, Gradient = 4 };
enum class GradientMode { Fixed, Live };
enum class Inner3D { A_Normal, B_GradFixed, C_GradLive };

/// Start-value and search-direction strategy. Two-digit codes 11..24 select
/// the 2D (and 3D outer-node) strategy, with an a/b suffix on x4 codes for a
/// fixed or live gradient; a leading A/B/C selects the 3D inner-node strategy.
struct SearchVariant {
  Reconstruction2D reconstruction = Reconstruction2D::Linear;
  Direction2D direction = Direction2D::Normal;
  GradientMode gradient_mode = GradientMode::Fixed;
  Inner3D inner = Inner3D::A_Normal;

  /// Accepts "13", "14a", "24b", "A13", "C14b", ... A bare "x4" means "x4a".
  static SearchVariant parse(std::string_view code)
  {
    SearchVariant v;
    std::string_view s = code;
    if (!s.empty() && (s[0] == 'A' || s[0] == 'B' || s[0] == 'C')) {
      v.inner = s[0] == 'A' ? Inner3D::A_Normal
                : s[0] == 'B' ? Inner3D::B_GradFixed
                              : Inner3D::C_GradLive;
      s.remove_prefix(1);
    }
    auto bad = [&] { return std::invalid_argument("unknown search variant '" + std::string(code) + "'"); };
    if (s.size() < 2 || s.size() > 3)
      throw bad();
    if (s[0] != '1' && s[0] != '2')
      throw bad();
    if (s[1] < '1' || s[1] > '4')
      throw bad();
    v.reconstruction = s[0] == '1' ? Reconstruction2D::Linear : Reconstruction2D::Hermite;
    v.direction = static_cast<Direction2D>(s[1] - '0');
    if (s.size() == 3) {
      if (v.direction != Direction2D::Gradient || (s[2] != 'a' && s[2] != 'b'))
        throw bad();
      v.gradient_mode = s[2] == 'a' ? GradientMode::Fixed : GradientMode::Live;
    }
    return v;
  }

  /// Canonical code; `dim` 3 adds the inner-node letter.
  std::string code(int dim = 2) const
  {
    std::string out;
    if (dim == 3)
      out += inner == Inner3D::A_Normal ? 'A' : inner == Inner3D::B_GradFixed ? 'B' : 'C';
    out += reconstruction == Reconstruction2D::Linear ? '1' : '2';
    out += static_cast<char>('0' + static_cast<int>(direction));
    if (direction == Direction2D::Gradient)
      out += gradient_mode == GradientMode::Fixed ? 'a' : 'b';
    return out;
  }

  bool operator==(const SearchVariant&) const = default;
};

struct NewtonOptions {
  double tolerance = 1e-12;          // on |phi^h|
  int max_iterations = 30;
  int divergence_window = 3;         // consecutive non-decreasing residuals
  double domain_tolerance = 1e-8;    // iterates stay within the domain grown by this
  double degenerate_tolerance = 1e-12;  // |grad . N| relative to |grad| |N|
};

struct ReconstructionOptions {
  SearchVariant variant{};
  NewtonOptions newton{};
  int sample_density = 0;  // 0: default_sample_density(p)
  int depth_limit = 5;
};

// ---------------------------------------------------------------------------
// Sign sampling

/// Sample grid plus shape-function values at its points, cached per
/// (family, order, density).
struct SampleTable {
  SampleGrid grid;
  int node_count = 0;
  std::vector<double> shape;  // row-major: point x node

  double value(std::size_t point, std::span<const double> nodal) const
  {
    const double* N = shape.data() + point * node_count;
    double v = 0.0;
    for (int i = 0; i < node_count; ++i)
      v += N[i] * nodal[i];
    return v;
  }
};

inline const SampleTable& sample_table(const ReferenceElement& elem, int density)
{
  static std::mutex mutex;
  static std::map<std::array<int, 3>, std::unique_ptr<SampleTable>> cache;
  const std::array<int, 3> key{static_cast<int>(elem.family()), elem.order(), density};
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end())
    return *it->second;
  auto table = std::make_unique<SampleTable>();
  table->grid = sample_grid(elem, density);
  table->node_count = elem.node_count();
  table->shape.resize(table->grid.points.size() * elem.node_count());
  for (std::size_t q = 0; q < table->grid.points.size(); ++q)
    elem.shape_values(table->grid.points[q],
                      std::span<double>(table->shape.data() + q * elem.node_count(),
                                        elem.node_count()));
  return *cache.emplace(key, std::move(table)).first->second;
}

// ---------------------------------------------------------------------------
// Validity

enum class ValidityReason { Clean, MultiplyCutEdge, WrongCutCount, InteriorClosedLevelSet };

inline std::string_view to_string(ValidityReason r)
{
  switch (r) {
    case ValidityReason::Clean: return "Clean";
    case ValidityReason::MultiplyCutEdge: return "MultiplyCutEdge";
    case ValidityReason::WrongCutCount: return "WrongCutCount";
    case ValidityReason::InteriorClosedLevelSet: return "InteriorClosedLevelSet";
  }
  return "?";
}

struct FaceValidity {
  bool valid = true;
  int cut_edges = 0;
  ValidityReason reason = ValidityReason::Clean;
};

struct ValidityReport {
  bool valid = true;
  bool uncut = false;
  std::vector<int> edge_cuts;  // sign changes per element edge
  std::vector<FaceValidity> faces;  // 3D only
  ValidityReason reason = ValidityReason::Clean;
};

namespace detail {

inline FaceValidity check_face(const SampleGrid& grid, std::span<const int> face_points,
                               std::span<const int> face_edges, const std::vector<int>& edge_cuts,
                               const std::vector<int>& signs)
{
  FaceValidity f;
  for (int e : face_edges) {
    if (edge_cuts[e] > 1) {
      f.valid = false;
      f.reason = ValidityReason::MultiplyCutEdge;
    }
    if (edge_cuts[e] > 0)
      ++f.cut_edges;
  }
  if (!f.valid)
    return f;
  if (f.cut_edges != 0 && f.cut_edges != 2) {
    f.valid = false;
    f.reason = ValidityReason::WrongCutCount;
    return f;
  }
  if (f.cut_edges == 0) {
    const int s0 = signs[grid.edge_points[face_edges[0]].front()];
    for (int i : face_points)
      if (signs[i] != s0) {
        f.valid = false;
        f.reason = ValidityReason::InteriorClosedLevelSet;
        break;
      }
  }
  return f;
}

}  // namespace detail

/// Sign-only validity test on the sample grid of `density` subdivisions
/// (0: the default 2p).
inline ValidityReport check_validity(const ReferenceElement& elem, std::span<const double> nodal,
                                     int density = 0)
{
  if (density <= 0)
    density = default_sample_density(elem.order());
  const auto& table = sample_table(elem, std::max(density, elem.order() + 1));
  const auto& grid = table.grid;
  std::vector<int> signs(grid.points.size());
  for (std::size_t q = 0; q < grid.points.size(); ++q)
    signs[q] = sign_of(table.value(q, nodal));

  ValidityReport rep;
  for (const auto& path : grid.edge_points) {
    int changes = 0;
    for (std::size_t k = 1; k < path.size(); ++k)
      if (signs[path[k]] != signs[path[k - 1]])
        ++changes;
    rep.edge_cuts.push_back(changes);
  }

  if (elem.dim() == 2) {
    const auto f = detail::check_face(grid, grid.face_points[0], grid.face_edges[0], rep.edge_cuts,
                                      signs);
    rep.valid = f.valid;
    rep.reason = f.reason;
    rep.uncut = f.valid && f.cut_edges == 0;
    return rep;
  }

  bool any_cut = false;
  for (std::size_t k = 0; k < grid.face_points.size(); ++k) {
    rep.faces.push_back(
        detail::check_face(grid, grid.face_points[k], grid.face_edges[k], rep.edge_cuts, signs));
    if (!rep.faces.back().valid && rep.valid) {
      rep.valid = false;
      rep.reason = rep.faces.back().reason;
    }
    any_cut = any_cut || rep.faces.back().cut_edges > 0;
  }
  if (rep.valid && !any_cut) {
    for (int s : signs)
      if (s != signs[0]) {
        rep.valid = false;
        rep.reason = ValidityReason::InteriorClosedLevelSet;
        break;
      }
    rep.uncut = rep.valid;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Topology

enum class CutCase { Uncut, Triangle, TetraTop1, TetraTop2 };

inline std::string_view to_string(CutCase c)
{
  switch (c) {
    case CutCase::Uncut: return "Uncut";
    case CutCase::Triangle: return "Triangle";
    case CutCase::TetraTop1: return "TetraTop1";
    case CutCase::TetraTop2: return "TetraTop2";
  }
  return "?";
}

/// Corner-sign case of a simplex plus a canonical corner order:
///   Triangle  (L, A, B): L is the lone corner, (L, A, B) counterclockwise;
///   TetraTop1 (L, A, B, C): L lone, positively oriented;
///   TetraTop2 (P0, P1, M0, M1): P positive, M negative, positively oriented.
/// cut_edges lists the cut corner pairs: Triangle (L,A), (L,B); Top1 (L,A),
/// (L,B), (L,C); Top2 (P0,M0), (P0,M1), (P1,M1), (P1,M0), i.e. the corners
/// of the interface quadrilateral in order.
struct CutTopology {
  CutCase kind = CutCase::Uncut;
  SignVector corner_signs;
  std::vector<int> perm;
  std::vector<std::array<int, 2>> cut_edges;
};

inline CutTopology classify_topology(const ReferenceElement& elem, std::span<const double> nodal)
{
  CutTopology t;
  const int nc = elem.corner_count();
  for (int i = 0; i < nc; ++i)
    t.corner_signs.push_back(static_cast<std::int8_t>(sign_of(nodal[i])));
  int positive = 0;
  for (auto s : t.corner_signs)
    positive += s > 0;
  if (positive == 0 || positive == nc) {
    t.kind = CutCase::Uncut;
    t.perm.resize(nc);
    for (int i = 0; i < nc; ++i)
      t.perm[i] = i;
    return t;
  }
  const auto corners = reference_corners(elem.family());
  if (elem.family() == Family::Triangle) {
    int lone = -1;
    for (int i = 0; i < 3; ++i)
      if (t.corner_signs[i] != t.corner_signs[(i + 1) % 3] &&
          t.corner_signs[i] != t.corner_signs[(i + 2) % 3])
        lone = i;
    if (lone < 0)
      throw InternalConsistencyError("classify_topology: no lone corner in a cut triangle");
    t.kind = CutCase::Triangle;
    t.perm = {lone, (lone + 1) % 3, (lone + 2) % 3};
    t.cut_edges = {{t.perm[0], t.perm[1]}, {t.perm[0], t.perm[2]}};
    return t;
  }
  if (elem.family() != Family::Tetrahedron)
    throw InternalConsistencyError("classify_topology: only simplices are classified");

  if (positive == 1 || positive == 3) {
    const int lone_sign = positive == 1 ? 1 : -1;
    int lone = 0;
    while (t.corner_signs[lone] != lone_sign)
      ++lone;
    std::vector<int> rest;
    for (int i = 0; i < 4; ++i)
      if (i != lone)
        rest.push_back(i);
    if (orient3d(corners[lone], corners[rest[0]], corners[rest[1]], corners[rest[2]]) < 0)
      std::swap(rest[1], rest[2]);
    t.kind = CutCase::TetraTop1;
    t.perm = {lone, rest[0], rest[1], rest[2]};
    t.cut_edges = {{lone, rest[0]}, {lone, rest[1]}, {lone, rest[2]}};
    return t;
  }
  std::vector<int> P, M;
  for (int i = 0; i < 4; ++i)
    (t.corner_signs[i] > 0 ? P : M).push_back(i);
  if (orient3d(corners[P[0]], corners[P[1]], corners[M[0]], corners[M[1]]) < 0)
    std::swap(M[0], M[1]);
  t.kind = CutCase::TetraTop2;
  t.perm = {P[0], P[1], M[0], M[1]};
  t.cut_edges = {{P[0], M[0]}, {P[0], M[1]}, {P[1], M[1]}, {P[1], M[0]}};
  return t;
}

// ---------------------------------------------------------------------------
// Edge intersections

struct EdgeIntersection {
  int from = 0, to = 0;
  double t = 0.0;  // parameter from corner `from` to corner `to`
  Point point = Point::Zero();
  int iterations = 0;
};

/// Root of phi^h on the straight segment a + t (b - a), t in [0, 1], by
/// Newton from the linear-interpolation start with bisection safeguard.
inline EdgeIntersection edge_root(const ReferenceElement& elem, std::span<const double> nodal,
                                  const Point& a, const Point& b, const NewtonOptions& opt = {})
{
  const Point d = b - a;
  auto g = [&](double t, double& dg) {
    Point grad;
    const double v = interpolate_with_gradient(elem, nodal, a + t * d, grad);
    dg = grad.dot(d);
    return v;
  };
  double d0, d1;
  const double g0 = g(0.0, d0), g1 = g(1.0, d1);
  if (sign_of(g0) == sign_of(g1))
    throw RootSearchFailed("edge_root: no sign change along the edge");
  const int s0 = sign_of(g0);
  double lo = 0.0, hi = 1.0;
  double t = g0 / (g0 - g1);
  if (!(t >= 0.0 && t <= 1.0))
    t = 0.5;
  EdgeIntersection out;
  double dv = 0.0;
  double v = g(t, dv);
  int it = 0;
  for (; std::abs(v) > opt.tolerance; ++it) {
    if (it >= 200)
      throw RootSearchFailed("edge_root: no convergence");
    if (sign_of(v) == s0)
      lo = t;
    else
      hi = t;
    double tn = t - v / dv;
    if (!(tn > lo && tn < hi))
      tn = 0.5 * (lo + hi);
    if (tn == t)
      break;
    t = tn;
    v = g(t, dv);
  }
  // One polishing step.
  if (dv != 0.0) {
    const double tn = t - v / dv;
    if (tn >= 0.0 && tn <= 1.0) {
      double dn;
      const double vn = g(tn, dn);
      if (std::abs(vn) < std::abs(v)) {
        t = tn;
        v = vn;
      }
    }
  }
  if (std::abs(v) > opt.tolerance)
    throw RootSearchFailed("edge_root: residual above tolerance");
  out.t = t;
  out.point = a + t * d;
  out.iterations = it;
  return out;
}

/// One root per cut edge of the topology, in cut_edges order.
inline std::vector<EdgeIntersection> find_edge_intersections(const ReferenceElement& elem,
                                                             std::span<const double> nodal,
                                                             const CutTopology& topo,
                                                             const NewtonOptions& opt = {})
{
  const auto corners = reference_corners(elem.family());
  std::vector<EdgeIntersection> out;
  for (const auto& [i, j] : topo.cut_edges) {
    auto e = edge_root(elem, nodal, corners[i], corners[j], opt);
    e.from = i;
    e.to = j;
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Newton search along a path

struct NewtonResult {
  Point root = Point::Zero();
  int iterations = 0;
};

namespace detail {

/// Half-spaces n . r <= c describing a simplex reference domain.
inline void domain_halfspaces(Family family, std::vector<std::pair<Point, double>>& out)
{
  out.clear();
  switch (family) {
    case Family::Line:
      out = {{make_point(1), 1.0}, {make_point(-1), 1.0}};
      break;
    case Family::Triangle:
      out = {{make_point(-1, 0), 0.0}, {make_point(0, -1), 0.0}, {make_point(1, 1), 1.0}};
      break;
    case Family::Tetrahedron:
      out = {{make_point(-1, 0, 0), 0.0},
             {make_point(0, -1, 0), 0.0},
             {make_point(0, 0, -1), 0.0},
             {make_point(1, 1, 1), 1.0}};
      break;
    case Family::Quadrilateral:
      out = {{make_point(1, 0), 1.0}, {make_point(-1, 0), 1.0},
             {make_point(0, 1), 1.0}, {make_point(0, -1), 1.0}};
      break;
    case Family::Prism:
      out = {{make_point(-1, 0, 0), 0.0}, {make_point(0, -1, 0), 0.0}, {make_point(1, 1, 0), 1.0},
             {make_point(0, 0, 1), 1.0}, {make_point(0, 0, -1), 1.0}};
      break;
  }
}

/// Largest fraction mu in [0, 1] with r + mu d inside the domain grown by
/// `tol`. Constraints already violated at r do not restrict the step.
inline double step_fraction(Family family, const Point& r, const Point& d, double tol)
{
  thread_local std::vector<std::pair<Point, double>> hs;
  domain_halfspaces(family, hs);
  double mu = 1.0;
  for (const auto& [n, c] : hs) {
    const double slack = c + tol * n.norm() - n.dot(r);
    const double rate = n.dot(d);
    if (slack >= 0 && rate > 0)
      mu = std::min(mu, slack / rate);
  }
  return std::max(mu, 0.0);
}

}  // namespace detail

/// Newton iteration r <- r - phi / (grad . N) N. With `live` set, N is
/// replaced by the current gradient at every step; otherwise N is fixed.
inline NewtonResult newton_search(const ReferenceElement& elem, std::span<const double> nodal,
                                  const Point& start, Point N, bool live,
                                  const NewtonOptions& opt = {})
{
  Point r = start;
  Point g;
  double v = interpolate_with_gradient(elem, nodal, r, g);
  double prev = std::abs(v);
  int it = 0, stalled = 0;
  auto step = [&](Point& dir) -> Point {
    if (live)
      dir = g;
    const double denom = g.dot(dir);
    if (!(std::abs(denom) > opt.degenerate_tolerance * g.norm() * dir.norm()) || g.norm() == 0)
      throw RootSearchFailed("newton_search: search direction tangent to the level set");
    return -v / denom * dir;
  };
  while (std::abs(v) > opt.tolerance) {
    if (it >= opt.max_iterations)
      throw RootSearchFailed("newton_search: iteration limit reached");
    Point d = step(N);
    r += detail::step_fraction(elem.family(), r, d, opt.domain_tolerance) * d;
    ++it;
    v = interpolate_with_gradient(elem, nodal, r, g);
    if (!std::isfinite(v))
      throw RootSearchFailed("newton_search: non-finite residual");
    if (std::abs(v) >= prev) {
      if (++stalled >= opt.divergence_window)
        throw RootSearchFailed("newton_search: diverging");
    }
    else
      stalled = 0;
    prev = std::abs(v);
  }
  // Polishing step, kept only if it lowers the residual.
  if (v != 0.0) {
    Point dir = N;
    if (live)
      dir = g;
    const double denom = g.dot(dir);
    if (std::abs(denom) > opt.degenerate_tolerance * g.norm() * dir.norm() && g.norm() > 0) {
      const Point rn = r - v / denom * dir;
      Point gn;
      const double vn = interpolate_with_gradient(elem, nodal, rn, gn);
      if (std::abs(vn) < std::abs(v) && contains(elem.family(), rn, opt.domain_tolerance))
        r = rn;
    }
  }
  if (!contains(elem.family(), r, opt.domain_tolerance))
    throw RootSearchFailed("newton_search: root outside the reference domain");
  return {r, it};
}

// ---------------------------------------------------------------------------
// Interface elements

/// Higher-order element on the zero-level set. Nodes are reference
/// coordinates of the element the reconstruction ran on (after decomposition
/// they are re-expressed in the background element's reference space).
struct InterfaceElement {
  Family family = Family::Line;
  int order = 1;
  std::vector<Point> nodes;
  std::vector<int> iterations;  // Newton iterations per node; fixed nodes count 0
  long parent = -1;
  int function = 0;
  SignVector signs;  // signs of the other level-set functions; own entry 0
};

/// Intermediate curve between two intersection points on a triangle plus
/// per-node search directions.
struct StartValues {
  std::vector<Point> points;      // Line node order: [I_A, I_B, interior...]
  std::vector<Point> directions;  // unused entries for the endpoints
  bool hermite = false;           // false also when Hermite fell back to Linear
};

namespace detail {

inline Point perp(const Point& t) { return make_point(-t[1], t[0]); }

struct Hermite {
  Point p0, p1, t0, t1;
  Point operator()(double s) const
  {
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * t0 + (-2 * s3 + 3 * s2) * p1 +
           (s3 - s2) * t1;
  }
  Point derivative(double s) const
  {
    const double s2 = s * s;
    return (6 * s2 - 6 * s) * p0 + (3 * s2 - 4 * s + 1) * t0 + (-6 * s2 + 6 * s) * p1 +
           (3 * s2 - 2 * s) * t1;
  }
};

/// Zero-level-set tangent at x: perpendicular to grad phi^h, oriented along
/// `chord` and scaled to its length.
inline Point hermite_tangent(const ReferenceElement& tri, std::span<const double> nodal,
                             const Point& x, const Point& chord)
{
  const Point g = interpolate_gradient(tri, nodal, x);
  double scale = 0.0;
  for (double v : nodal)
    scale = std::max(scale, std::abs(v));
  if (g.norm() <= 1e-14 * std::max(scale, 1e-300))
    throw DegenerateGradient("hermite_tangent: vanishing gradient at an intersection");
  Point t = perp(g).normalized();
  if (t.dot(chord) < 0)
    t = -t;
  return chord.norm() * t;
}

}  // namespace detail

/// Start points and directions for an interface curve from I_A (on edge L-A)
/// to I_B (on edge L-B) of a reference triangle with corners indexed L, A, B.
inline StartValues build_start_values_2d(const ReferenceElement& tri,
                                         std::span<const double> nodal, int L, int A, int B,
                                         const Point& IA, const Point& IB,
                                         const SearchVariant& variant)
{
  const int p = tri.order();
  const auto& line = reference_element(Family::Line, p);
  const auto corners = reference_corners(Family::Triangle);
  const Point chord = IB - IA;

  StartValues sv;
  detail::Hermite h{IA, IB, chord, chord};
  if (variant.reconstruction == Reconstruction2D::Hermite) {
    try {
      h.t0 = detail::hermite_tangent(tri, nodal, IA, chord);
      h.t1 = detail::hermite_tangent(tri, nodal, IB, chord);
      sv.hermite = true;
    }
    catch (const DegenerateGradient&) {
      h.t0 = h.t1 = chord;  // cubic Hermite with chord tangents is the chord itself
    }
  }
  const Point dA = (corners[A] - corners[L]).normalized();
  const Point dB = (corners[B] - corners[L]).normalized();

  for (int j = 0; j <= p; ++j) {
    const double s = 0.5 * (line.node(j)[0] + 1.0);
    Point x = j == 0 ? IA : j == 1 ? IB : (sv.hermite ? h(s) : Point(IA + s * chord));
    Point N = Point::Zero();
    switch (variant.direction) {
      case Direction2D::OppositeNode: N = corners[L] - x; break;
      case Direction2D::EdgeDirections: N = (1 - s) * dA + s * dB; break;
      case Direction2D::Normal: N = detail::perp(sv.hermite ? h.derivative(s) : chord); break;
      case Direction2D::Gradient: N = interpolate_gradient(tri, nodal, x); break;
    }
    if (N.norm() > 0)
      N.normalize();
    sv.points.push_back(x);
    sv.directions.push_back(N);
  }
  return sv;
}

/// Interface curve inside a reference triangle between fixed intersection
/// points; interior nodes by Newton along the variant's directions.
inline InterfaceElement reconstruct_curve(const ReferenceElement& tri, std::span<const double> nodal,
                                          int L, int A, int B, const Point& IA, const Point& IB,
                                          const SearchVariant& variant, const NewtonOptions& opt)
{
  const auto sv = build_start_values_2d(tri, nodal, L, A, B, IA, IB, variant);
  InterfaceElement out;
  out.family = Family::Line;
  out.order = tri.order();
  out.nodes.push_back(IA);
  out.nodes.push_back(IB);
  out.iterations = {0, 0};
  const bool live =
      variant.direction == Direction2D::Gradient && variant.gradient_mode == GradientMode::Live;
  for (std::size_t j = 2; j < sv.points.size(); ++j) {
    if (sv.directions[j].norm() == 0)
      throw RootSearchFailed("reconstruct_curve: zero search direction");
    const auto res = newton_search(tri, nodal, sv.points[j], sv.directions[j], live, opt);
    out.nodes.push_back(res.root);
    out.iterations.push_back(res.iterations);
  }
  return out;
}

/// Interface line element of a cut reference triangle.
inline InterfaceElement reconstruct_2d(const ReferenceElement& tri, std::span<const double> nodal,
                                       const CutTopology& topo,
                                       const std::vector<EdgeIntersection>& cuts,
                                       const ReconstructionOptions& opts = {})
{
  if (topo.kind != CutCase::Triangle || cuts.size() != 2)
    throw InternalConsistencyError("reconstruct_2d: not a cut triangle");
  return reconstruct_curve(tri, nodal, topo.perm[0], topo.perm[1], topo.perm[2], cuts[0].point,
                           cuts[1].point, opts.variant, opts.newton);
}

inline InterfaceElement reconstruct_2d(const ReferenceElement& tri, std::span<const double> nodal,
                                       const ReconstructionOptions& opts = {})
{
  const auto topo = classify_topology(tri, nodal);
  if (topo.kind != CutCase::Triangle)
    throw InternalConsistencyError("reconstruct_2d: element is not cut");
  const auto cuts = find_edge_intersections(tri, nodal, topo, opts.newton);
  return reconstruct_2d(tri, nodal, topo, cuts, opts);
}

namespace detail {

/// Interface curve on the tetrahedron face (lone, X, Y) from the
/// intersection on edge lone-X to the one on edge lone-Y, as a line element
/// in tetrahedron coordinates. The endpoints are the given points verbatim.
inline std::vector<Point> face_curve(const ReferenceElement& tet, std::span<const double> nodal,
                                     int lone, int X, int Y, const Point& IX, const Point& IY,
                                     const SearchVariant& variant, const NewtonOptions& opt,
                                     std::vector<int>* iterations)
{
  const auto corners = reference_corners(Family::Tetrahedron);
  const auto& tri = reference_element(Family::Triangle, tet.order());
  const std::array<int, 3> face{lone, X, Y};
  const auto& ids = tet.entity_nodes(Family::Triangle, face);
  std::vector<double> fv(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    fv[i] = nodal[ids[i]];
  const Point o = corners[lone], ex = corners[X] - o, ey = corners[Y] - o;
  const double tX = (IX - o).dot(ex) / ex.squaredNorm();
  const double tY = (IY - o).dot(ey) / ey.squaredNorm();
  const auto curve =
      reconstruct_curve(tri, fv, 0, 1, 2, make_point(tX, 0), make_point(0, tY), variant, opt);
  std::vector<Point> out;
  out.push_back(IX);
  out.push_back(IY);
  for (std::size_t j = 2; j < curve.nodes.size(); ++j)
    out.push_back(o + curve.nodes[j][0] * ex + curve.nodes[j][1] * ey);
  if (iterations)
    iterations->insert(iterations->end(), curve.iterations.begin() + 2, curve.iterations.end());
  return out;
}

}  // namespace detail

/// Interface element of a cut reference tetrahedron: a triangle (Top1) or a
/// quadrilateral (Top2). Outer nodes come from 2D reconstructions on the
/// faces, inner nodes from Newton searches started on the transfinite surface
/// spanned by the outer curves.
inline InterfaceElement reconstruct_3d(const ReferenceElement& tet, std::span<const double> nodal,
                                       const CutTopology& topo,
                                       const std::vector<EdgeIntersection>& cuts,
                                       const ReconstructionOptions& opts = {})
{
  const int p = tet.order();
  const auto& v = opts.variant;
  const auto& opt = opts.newton;

  // Faces carrying each interface edge, as (lone, X, Y) so that the face
  // curve runs from cut k to cut k+1.
  std::vector<std::array<int, 3>> faces;
  std::vector<int> from_cut, to_cut;
  InterfaceElement out;
  out.order = p;
  if (topo.kind == CutCase::TetraTop1) {
    const int L = topo.perm[0], A = topo.perm[1], B = topo.perm[2], C = topo.perm[3];
    faces = {{L, A, B}, {L, B, C}, {L, C, A}};
    from_cut = {0, 1, 2};
    to_cut = {1, 2, 0};
    out.family = Family::Triangle;
  }
  else if (topo.kind == CutCase::TetraTop2) {
    const int P0 = topo.perm[0], P1 = topo.perm[1], M0 = topo.perm[2], M1 = topo.perm[3];
    faces = {{P0, M0, M1}, {M1, P0, P1}, {P1, M1, M0}, {M0, P1, P0}};
    from_cut = {0, 1, 2, 3};
    to_cut = {1, 2, 3, 0};
    out.family = Family::Quadrilateral;
  }
  else
    throw InternalConsistencyError("reconstruct_3d: element is not a cut tetrahedron");

  const auto& elem = reference_element(out.family, p);
  out.nodes.assign(elem.node_count(), Point::Zero());
  out.iterations.assign(elem.node_count(), 0);
  const int ne = static_cast<int>(faces.size());
  std::vector<std::vector<Point>> edges;
  std::vector<bool> on_edge(elem.node_count(), false);
  for (int k = 0; k < ne; ++k) {
    std::vector<int> its;
    auto curve = detail::face_curve(tet, nodal, faces[k][0], faces[k][1], faces[k][2],
                                    cuts[from_cut[k]].point, cuts[to_cut[k]].point, v, opt, &its);
    const std::array<int, 2> corner_pair{k, (k + 1) % ne};
    const auto& ids = elem.entity_nodes(Family::Line, corner_pair);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      out.nodes[ids[j]] = curve[j];
      on_edge[ids[j]] = true;
      if (j >= 2)
        out.iterations[ids[j]] = its[j - 2];
    }
    edges.push_back(std::move(curve));
  }

  std::vector<int> inner;
  for (int i = 0; i < elem.node_count(); ++i)
    if (!on_edge[i])
      inner.push_back(i);
  if (inner.empty())
    return out;

  auto solve_inner = [&](const auto& map) {
    const bool live = v.inner == Inner3D::C_GradLive;
    for (int i : inner) {
      const Point& xi = elem.node(i);
      const Point r0 = map(xi);
      Point N;
      if (v.inner == Inner3D::A_Normal) {
        const Matrix3 J = map.jacobian(xi);
        N = J.col(0).cross(J.col(1));
      }
      else
        N = interpolate_gradient(tet, nodal, r0);
      if (!(N.norm() > 0))
        throw RootSearchFailed("reconstruct_3d: zero search direction");
      const auto res = newton_search(tet, nodal, r0, N.normalized(), live, opt);
      out.nodes[i] = res.root;
      out.iterations[i] = res.iterations;
    }
  };
  try {
    if (out.family == Family::Triangle)
      solve_inner(TriangleFromEdges({edges[0], edges[1], edges[2]}));
    else
      solve_inner(QuadFromEdges({edges[0], edges[1], edges[2], edges[3]}));
  }
  catch (const std::invalid_argument& e) {
    throw RootSearchFailed(std::string("reconstruct_3d: ") + e.what());
  }
  return out;
}

inline InterfaceElement reconstruct_3d(const ReferenceElement& tet, std::span<const double> nodal,
                                       const ReconstructionOptions& opts = {})
{
  const auto topo = classify_topology(tet, nodal);
  if (topo.kind == CutCase::Uncut)
    throw InternalConsistencyError("reconstruct_3d: element is not cut");
  const auto cuts = find_edge_intersections(tet, nodal, topo, opts.newton);
  return reconstruct_3d(tet, nodal, topo, cuts, opts);
}

/// Dispatch on the element dimension.
inline InterfaceElement reconstruct(const ReferenceElement& elem, std::span<const double> nodal,
                                    const CutTopology& topo,
                                    const std::vector<EdgeIntersection>& cuts,
                                    const ReconstructionOptions& opts = {})
{
  return elem.dim() == 2 ? reconstruct_2d(elem, nodal, topo, cuts, opts)
                         : reconstruct_3d(elem, nodal, topo, cuts, opts);
}

// ---------------------------------------------------------------------------
// Refinement

/// Leaf of a refinement tree: a simplex given by its order-p node
/// coordinates in the root reference element, with nodal level-set values.
struct Cell {
  Family family = Family::Triangle;
  std::vector<Point> nodes;
  std::vector<std::vector<double>> values;  // per level-set function
  std::vector<int> lineage;                 // child index per refinement step
  int depth = 0;
  bool identity = false;  // nodes are the root's reference nodes
};

/// Red refinement of simplex cells. Child values are phi^h of the root
/// element interpolated at the child nodes; no analytic data is used.
struct RefinementTree {
  const ReferenceElement* root = nullptr;
  std::vector<std::vector<double>> root_values;  // per function, root nodal values
  int depth_limit = 5;
  long element = -1;
  double corner_perturbation = 1e-12;  // above the sign tie tolerance

  Cell make_root() const
  {
    Cell c;
    c.family = root->family();
    c.nodes = root->nodes();
    c.values = root_values;
    c.identity = true;
    return c;
  }

  /// Cell over arbitrary root-space nodes (of an order-p simplex). Corner
  /// values within corner_perturbation of zero are moved off the zero-level
  /// set (see lift_corner), so no cut lands exactly on a cell corner.
  Cell make_cell(Family family, std::vector<Point> nodes, std::vector<int> lineage,
                 int depth) const
  {
    Cell c;
    c.family = family;
    c.nodes = std::move(nodes);
    c.lineage = std::move(lineage);
    c.depth = depth;
    const int corners = static_cast<int>(reference_corners(family).size());
    for (const auto& rv : root_values) {
      std::vector<double> v(c.nodes.size());
      for (std::size_t i = 0; i < c.nodes.size(); ++i)
        v[i] = interpolate(*root, rv, c.nodes[i]);
      for (int i = 0; i < corners; ++i)
        if (std::abs(v[i]) < corner_perturbation)
          v[i] = lift_corner(family, v, i);
      c.values.push_back(std::move(v));
    }
    return c;
  }

  /// A level set through a cell corner leaves a near-zero cut on the edges
  /// to corners of the opposite sign. Picks the sign for which those edges
  /// are most transversal to the level set; an edge nearly tangent to it
  /// would give a collapsed sub-element edge parallel to the interface.
  double lift_corner(Family family, const std::vector<double>& v, int i) const
  {
    const auto& elem = reference_element(family, root->order());
    const auto rc = reference_corners(family);
    const Point g = interpolate_gradient(elem, v, rc[i]);
    const double gn = g.norm();
    if (!(gn > 0))
      return corner_perturbation;
    auto quality = [&](int sign) {
      double q = 2.0;  // no cut edge at this corner
      for (int j = 0; j < static_cast<int>(rc.size()); ++j) {
        if (j == i || std::abs(v[j]) < corner_perturbation || (v[j] > 0) == (sign > 0))
          continue;
        const Point e = rc[j] - rc[i];
        q = std::min(q, std::abs(g.dot(e)) / (gn * e.norm()));
      }
      return q;
    };
    return quality(-1) > quality(1) ? -corner_perturbation : corner_perturbation;
  }

  /// Corner coordinates (in the parent cell's reference space) of the
  /// children of a red refinement, positively oriented.
  static std::vector<std::vector<Point>> child_corners(Family family)
  {
    const auto c = reference_corners(family);
    auto mid = [&](int i, int j) -> Point { return 0.5 * (c[i] + c[j]); };
    std::vector<std::vector<Point>> out;
    if (family == Family::Triangle) {
      out = {{c[0], mid(0, 1), mid(2, 0)},
             {mid(0, 1), c[1], mid(1, 2)},
             {mid(2, 0), mid(1, 2), c[2]},
             {mid(1, 2), mid(2, 0), mid(0, 1)}};
      for (auto& t : out)
        if (orient2d(t[0], t[1], t[2]) < 0)
          std::swap(t[1], t[2]);
      return out;
    }
    const Point m01 = mid(0, 1), m02 = mid(0, 2), m03 = mid(0, 3), m12 = mid(1, 2),
                m13 = mid(1, 3), m23 = mid(2, 3);
    out = {{c[0], m01, m02, m03}, {m01, c[1], m12, m13}, {m02, m12, c[2], m23},
           {m03, m13, m23, c[3]}, {m02, m13, m01, m12}, {m02, m13, m12, m23},
           {m02, m13, m23, m03},  {m02, m13, m03, m01}};
    for (auto& t : out)
      if (orient3d(t[0], t[1], t[2], t[3]) < 0)
        std::swap(t[2], t[3]);
    return out;
  }

  std::vector<Cell> refine(const Cell& cell) const
  {
    if (cell.depth >= depth_limit)
      throw RefinementExhausted("refinement depth limit reached in element " +
                                    std::to_string(element),
                                element, cell.depth);
    const auto& elem = reference_element(cell.family, root->order());
    const auto& lin = reference_element(cell.family, 1);
    std::vector<Cell> out;
    const auto kids = child_corners(cell.family);
    for (std::size_t k = 0; k < kids.size(); ++k) {
      std::vector<Point> nodes;
      nodes.reserve(elem.node_count());
      for (const auto& r : elem.nodes()) {
        const Point local = isoparametric_map(lin, kids[k], r);
        nodes.push_back(cell.identity ? local : isoparametric_map(elem, cell.nodes, local));
      }
      auto lineage = cell.lineage;
      lineage.push_back(static_cast<int>(k));
      out.push_back(make_cell(cell.family, std::move(nodes), std::move(lineage), cell.depth + 1));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Element and mesh drivers

struct ElementReconstruction {
  long element = -1;
  std::vector<InterfaceElement> interfaces;  // nodes in root reference coordinates
  int refinements = 0;
  int max_depth = 0;
  double max_residual = 0.0;        // |phi^h| over all interface nodes
  double max_face_coordinate = 0.0;  // 3D outer nodes, in the cell they were found in
};

/// Interface elements of one background element for level-set function 0,
/// refining cells whose data is invalid or whose root search fails.
inline ElementReconstruction reconstruct_element(const ReferenceElement& elem,
                                                 std::vector<double> values,
                                                 const ReconstructionOptions& opts = {},
                                                 long element = -1)
{
  if (static_cast<int>(values.size()) != elem.node_count())
    throw std::invalid_argument("reconstruct_element: nodal value count mismatch");
  RefinementTree tree;
  tree.root = &elem;
  tree.root_values = {std::move(values)};
  tree.depth_limit = opts.depth_limit;
  tree.element = element;
  ElementReconstruction out;
  out.element = element;

  std::vector<Cell> todo{tree.make_root()};
  while (!todo.empty()) {
    Cell cell = std::move(todo.back());
    todo.pop_back();
    const auto& v = cell.values[0];
    try {
      const auto rep = check_validity(elem, v, opts.sample_density);
      if (rep.valid) {
        if (rep.uncut)
          continue;
        const auto topo = classify_topology(elem, v);
        const auto cuts = find_edge_intersections(elem, v, topo, opts.newton);
        auto iface = reconstruct(elem, v, topo, cuts, opts);
        const auto& ie = reference_element(iface.family, elem.order());
        for (const auto& r : iface.nodes)
          out.max_residual = std::max(out.max_residual, std::abs(interpolate(elem, v, r)));
        if (elem.dim() == 3) {
          for (int e = 0; e < static_cast<int>(reference_edges(iface.family).size()); ++e)
            for (int i : ie.edge_path(e)) {
              const Point& r = iface.nodes[i];
              const double face = std::min({std::abs(r[0]), std::abs(r[1]), std::abs(r[2]),
                                            std::abs(1.0 - r[0] - r[1] - r[2])});
              out.max_face_coordinate = std::max(out.max_face_coordinate, face);
            }
        }
        if (!cell.identity)
          for (auto& r : iface.nodes)
            r = isoparametric_map(elem, cell.nodes, r);
        iface.parent = element;
        iface.function = 0;
        iface.signs = {0};
        out.interfaces.push_back(std::move(iface));
        continue;
      }
    }
    catch (const RootSearchFailed&) {
    }
    ++out.refinements;
    for (auto& child : tree.refine(cell)) {
      out.max_depth = std::max(out.max_depth, child.depth);
      todo.push_back(std::move(child));
    }
  }
  return out;
}

struct ReconstructionResult {
  int dim = 2;
  int order = 1;
  std::vector<ElementReconstruction> elements;  // cut elements only, by element id
  long refined_elements = 0;
};

/// Reconstructs the zero-level set of function `fn` over the whole mesh;
/// element loop runs in parallel, output is ordered by element id.
inline ReconstructionResult reconstruct_mesh(const BackgroundMesh& mesh, const LevelSetField& ls,
                                             const ReconstructionOptions& opts = {}, int fn = 0)
{
  if (ls.mesh_id != mesh.id)
    throw std::invalid_argument("reconstruct_mesh: level-set field belongs to another mesh");
  std::vector<ElementReconstruction> all(mesh.element_count());
  const auto& ref = mesh.reference();
  parallel_for(mesh.element_count(), [&](std::size_t e) {
    all[e] = reconstruct_element(ref, ls.element_values(mesh, fn, e), opts, static_cast<long>(e));
  });
  ReconstructionResult res;
  res.dim = mesh.dim;
  res.order = mesh.order;
  for (auto& e : all) {
    if (e.interfaces.empty() && e.refinements == 0)
      continue;
    res.refined_elements += e.refinements > 0;
    res.elements.push_back(std::move(e));
  }
  return res;
}

}  // namespace cutmesh
