#pragma once

// Decomposition of cut simplices into higher-order sub-elements with one
// curved side, successive decomposition for several level-set functions, and
// the mesh-level driver.

#include "core.hpp"
#include "levelset.hpp"
#include "mesh.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "reconstruction.hpp"
#include "reference_element.hpp"
#include "transfinite.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <numeric>
#include <vector>

namespace cutmesh {

/// Sub-element of a decomposed element. Nodes are reference coordinates of
/// the background element (or of the cell passed to decompose_triangle /
/// decompose_tetra when called directly).
struct SubElement {
  Family family = Family::Triangle;
  int order = 1;
  std::vector<Point> nodes;
  SignVector signs;
  long parent = -1;
  std::vector<int> lineage;
  int curved_entity = -1;  // edge (2D) or face (3D) index carrying the interface, -1 if none
  int function = -1;       // level-set function that generated the curved side
};

struct DecompositionOptions {
  ReconstructionOptions reconstruction{};
  int jacobian_density = 0;           // 0: default_sample_density(p)
  std::vector<int> function_order;    // empty: 0, 1, ..., k-1
};

struct ElementDecomposition {
  long element = -1;
  bool cut = false;
  SignVector signs;  // for uncut elements
  std::vector<SubElement> subs;
  std::vector<InterfaceElement> interfaces;
  int refinements = 0;
  int max_depth = 0;
};

struct DecompositionResult {
  int dim = 2;
  int order = 1;
  int function_count = 1;
  std::vector<ElementDecomposition> elements;
  long refined_elements = 0;
  long failure_retries = 0;
};

// ---------------------------------------------------------------------------

namespace detail {

/// Straight line element from a to b in Line node order.
inline std::vector<Point> straight_line(const Point& a, const Point& b, int p)
{
  const auto& line = reference_element(Family::Line, p);
  std::vector<Point> out;
  out.reserve(p + 1);
  for (const auto& u : line.nodes())
    out.push_back(a + 0.5 * (u[0] + 1.0) * (b - a));
  out[0] = a;
  out[1] = b;
  return out;
}

/// Same curve traversed backwards, in Line node order.
inline std::vector<Point> reversed_line(const std::vector<Point>& line)
{
  std::vector<Point> out{line[1], line[0]};
  for (std::size_t j = line.size(); j-- > 2;)
    out.push_back(line[j]);
  return out;
}

inline void overwrite(std::vector<Point>& nodes, const ReferenceElement& elem, Family sub,
                      std::span<const int> corners, const std::vector<Point>& values)
{
  const auto& ids = elem.entity_nodes(sub, corners);
  for (std::size_t j = 0; j < ids.size(); ++j)
    nodes[ids[j]] = values[j];
}

/// Permutation of quad nodes swapping the two reference coordinates.
inline const std::vector<int>& quad_transpose(int p)
{
  static std::mutex mutex;
  static std::map<int, std::vector<int>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(p);
  if (it != cache.end())
    return it->second;
  const auto& q = reference_element(Family::Quadrilateral, p);
  std::vector<int> perm(q.node_count(), -1);
  for (int i = 0; i < q.node_count(); ++i) {
    const Point t = make_point(q.node(i)[1], q.node(i)[0]);
    for (int j = 0; j < q.node_count(); ++j)
      if ((q.node(j) - t).norm() < 1e-12)
        perm[i] = j;
  }
  return cache.emplace(p, std::move(perm)).first->second;
}

}  // namespace detail

/// Order of the volume rule whose points are checked alongside the sample grid.
inline constexpr int jacobian_check_rule_order = 11;

/// Throws DecompositionFailed unless det J > 0 at every sample point of the
/// element and at every point of the order-11 volume rule (space dimension =
/// element dimension). Sample points alone miss thin negative pockets.
inline void check_jacobian(const ReferenceElement& elem, std::span<const Point> nodes,
                           int density = 0)
{
  if (density <= 0)
    density = default_sample_density(elem.order());
  auto check = [&](const Point& r) {
    const double det = jacobian(elem, nodes, r).topLeftCorner(elem.dim(), elem.dim()).determinant();
    if (!(det > 0))
      throw DecompositionFailed("non-positive Jacobian in a " + std::string(to_string(elem.family())) +
                                " sub-element");
  };
  for (const auto& r : sample_table(elem, std::max(density, elem.order() + 1)).grid.points)
    check(r);
  for (const auto& r : build_rule(elem.family(), jacobian_check_rule_order).points)
    check(r);
}

/// Sub-triangle (L, I_A, I_B) with the interface as edge 1 and
/// sub-quadrilateral (I_B, I_A, A, B) with the reversed interface as edge 0.
inline std::vector<SubElement> decompose_triangle(const ReferenceElement& tri,
                                                  const CutTopology& topo,
                                                  const InterfaceElement& iface,
                                                  int jacobian_density = 0)
{
  if (topo.kind != CutCase::Triangle)
    throw InternalConsistencyError("decompose_triangle: not a cut triangle");
  const int p = tri.order();
  const auto corners = reference_corners(Family::Triangle);
  const Point L = corners[topo.perm[0]], A = corners[topo.perm[1]], B = corners[topo.perm[2]];
  const Point IA = iface.nodes[0], IB = iface.nodes[1];
  const int lone_sign = topo.corner_signs[topo.perm[0]];

  std::vector<SubElement> out(2);
  try {
    const TriangleFromEdges tmap(
        {detail::straight_line(L, IA, p), iface.nodes, detail::straight_line(IB, L, p)});
    out[0].family = Family::Triangle;
    out[0].nodes = nodes_from_map(Family::Triangle, p, tmap);
    const std::array<int, 2> e1{1, 2};
    detail::overwrite(out[0].nodes, tri, Family::Line, e1, iface.nodes);
    out[0].curved_entity = 1;
    out[0].signs = {static_cast<std::int8_t>(lone_sign)};

    const auto rev = detail::reversed_line(iface.nodes);
    const QuadFromEdges qmap({rev, detail::straight_line(IA, A, p), detail::straight_line(A, B, p),
                              detail::straight_line(B, IB, p)});
    const auto& quad = reference_element(Family::Quadrilateral, p);
    out[1].family = Family::Quadrilateral;
    out[1].nodes = nodes_from_map(Family::Quadrilateral, p, qmap);
    const std::array<int, 2> e0{0, 1};
    detail::overwrite(out[1].nodes, quad, Family::Line, e0, rev);
    out[1].curved_entity = 0;
    out[1].signs = {static_cast<std::int8_t>(-lone_sign)};
  }
  catch (const std::invalid_argument& e) {
    throw DecompositionFailed(std::string("decompose_triangle: ") + e.what());
  }
  for (auto& s : out) {
    s.order = p;
    check_jacobian(reference_element(s.family, p), s.nodes, jacobian_density);
  }
  return out;
}

/// Top1: sub-tetrahedron with apex L and the interface as face {1,2,3}, plus
/// a prism with the interface as bottom and (A, B, C) as top.
/// Top2: two prisms sharing the interface quadrilateral as face {1,2,5,4};
/// the positive one has bottom (P0, Q1, Q2), the negative one (M0, Q1, Q4).
inline std::vector<SubElement> decompose_tetra(const ReferenceElement& tet, const CutTopology& topo,
                                               const InterfaceElement& iface,
                                               int jacobian_density = 0)
{
  const int p = tet.order();
  const auto corners = reference_corners(Family::Tetrahedron);
  const auto& prism = reference_element(Family::Prism, p);
  std::vector<SubElement> out(2);
  try {
    if (topo.kind == CutCase::TetraTop1) {
      const int lone_sign = topo.corner_signs[topo.perm[0]];
      const Point L = corners[topo.perm[0]];
      const std::array<Point, 3> top{corners[topo.perm[1]], corners[topo.perm[2]],
                                     corners[topo.perm[3]]};
      const TetraOneCurvedFace tmap(iface.nodes, L);
      out[0].family = Family::Tetrahedron;
      out[0].nodes = nodes_from_map(Family::Tetrahedron, p, tmap);
      const std::array<int, 3> f0{1, 2, 3};
      detail::overwrite(out[0].nodes, tet, Family::Triangle, f0, iface.nodes);
      out[0].curved_entity = 0;
      out[0].signs = {static_cast<std::int8_t>(lone_sign)};

      const PrismCurvedTriangle pmap(iface.nodes, top);
      out[1].family = Family::Prism;
      out[1].nodes = nodes_from_map(Family::Prism, p, pmap);
      const std::array<int, 3> bottom{0, 1, 2};
      detail::overwrite(out[1].nodes, prism, Family::Triangle, bottom, iface.nodes);
      out[1].curved_entity = 0;
      out[1].signs = {static_cast<std::int8_t>(-lone_sign)};
    }
    else if (topo.kind == CutCase::TetraTop2) {
      const Point P0 = corners[topo.perm[0]], P1 = corners[topo.perm[1]],
                  M0 = corners[topo.perm[2]], M1 = corners[topo.perm[3]];
      const std::array<int, 4> face{1, 2, 5, 4};
      const PrismCurvedQuad plus(iface.nodes, P0, P1);
      out[0].family = Family::Prism;
      out[0].nodes = nodes_from_map(Family::Prism, p, plus);
      detail::overwrite(out[0].nodes, prism, Family::Quadrilateral, face, iface.nodes);
      out[0].curved_entity = 3;
      out[0].signs = {1};

      const auto& perm = detail::quad_transpose(p);
      std::vector<Point> transposed(iface.nodes.size());
      for (std::size_t i = 0; i < perm.size(); ++i)
        transposed[i] = iface.nodes[perm[i]];
      const PrismCurvedQuad minus(transposed, M0, M1);
      out[1].family = Family::Prism;
      out[1].nodes = nodes_from_map(Family::Prism, p, minus);
      detail::overwrite(out[1].nodes, prism, Family::Quadrilateral, face, transposed);
      out[1].curved_entity = 3;
      out[1].signs = {-1};
    }
    else
      throw InternalConsistencyError("decompose_tetra: not a cut tetrahedron");
  }
  catch (const std::invalid_argument& e) {
    throw DecompositionFailed(std::string("decompose_tetra: ") + e.what());
  }
  for (auto& s : out) {
    s.order = p;
    check_jacobian(reference_element(s.family, p), s.nodes, jacobian_density);
  }
  return out;
}

namespace detail {

/// Alternative splits of a quadrilateral or prism into simplices, given as
/// corner lists in the reference domain of the non-simplex element.
inline std::vector<std::vector<std::vector<Point>>> simplex_splits(Family family)
{
  const auto rc = reference_corners(family);
  std::vector<std::vector<std::vector<Point>>> out;
  if (family == Family::Quadrilateral) {
    const Point o = Point::Zero();
    out.push_back({{rc[0], rc[1], rc[2]}, {rc[0], rc[2], rc[3]}});
    out.push_back({{rc[0], rc[1], rc[3]}, {rc[1], rc[2], rc[3]}});
    out.push_back({{rc[0], rc[1], o}, {rc[1], rc[2], o}, {rc[2], rc[3], o}, {rc[3], rc[0], o}});
    return out;
  }
  // One split per labelling of the bottom triangle; the identity comes first.
  std::array<int, 3> s{0, 1, 2};
  do {
    std::vector<std::vector<Point>> split{
        {rc[s[0]], rc[s[1]], rc[s[2]], rc[s[2] + 3]},
        {rc[s[0]], rc[s[1]], rc[s[2] + 3], rc[s[1] + 3]},
        {rc[s[0]], rc[s[1] + 3], rc[s[2] + 3], rc[s[0] + 3]}};
    for (auto& t : split)
      if (orient3d(t[0], t[1], t[2], t[3]) < 0)
        std::swap(t[2], t[3]);
    out.push_back(std::move(split));
  } while (std::next_permutation(s.begin(), s.end()));
  return out;
}

/// Affine pieces of the non-simplex reference domain used when no split of
/// the whole element has positive Jacobians: 4 sub-quads or 8 sub-prisms.
inline std::vector<std::function<Point(const Point&)>> same_family_children(Family family)
{
  std::vector<std::function<Point(const Point&)>> out;
  if (family == Family::Quadrilateral) {
    for (double y0 : {-1.0, 0.0})
      for (double x0 : {-1.0, 0.0})
        out.push_back([x0, y0](const Point& a) {
          return make_point(x0 + 0.5 * (a[0] + 1), y0 + 0.5 * (a[1] + 1));
        });
    return out;
  }
  const auto& lin = reference_element(Family::Triangle, 1);
  for (const auto& tri : RefinementTree::child_corners(Family::Triangle))
    for (double w0 : {-1.0, 0.0})
      out.push_back([&lin, tri, w0](const Point& a) {
        const Point ab = isoparametric_map(lin, tri, make_point(a[0], a[1]));
        return make_point(ab[0], ab[1], w0 + 0.5 * (a[2] + 1));
      });
  return out;
}

inline bool jacobian_ok(const ReferenceElement& elem, std::span<const Point> nodes, int density)
{
  try {
    check_jacobian(elem, nodes, density);
    return true;
  }
  catch (const DecompositionFailed&) {
    return false;
  }
}

}  // namespace detail

/// Splits a quadrilateral or prism sub-element into simplices of the same
/// order by resampling its map at the simplex nodes. With `check`, the first
/// split whose pieces all have positive Jacobians is taken; if none does,
/// the element is halved per direction and the halves are split in turn.
inline std::vector<SubElement> simplexify(const SubElement& sub, bool check = true,
                                          int jacobian_density = 0, int depth = 0)
{
  if (is_simplex(sub.family))
    return {sub};
  const int p = sub.order;
  const auto& elem = reference_element(sub.family, p);
  const Family target = sub.family == Family::Quadrilateral ? Family::Triangle : Family::Tetrahedron;
  const auto& simplex = reference_element(target, p);
  const auto& lin = reference_element(target, 1);

  for (const auto& split : detail::simplex_splits(sub.family)) {
    std::vector<SubElement> out;
    bool ok = true;
    for (const auto& corners : split) {
      SubElement s = sub;
      s.family = target;
      s.nodes.clear();
      for (const auto& r : simplex.nodes())
        s.nodes.push_back(isoparametric_map(elem, sub.nodes, isoparametric_map(lin, corners, r)));
      s.curved_entity = -1;
      if (check && !detail::jacobian_ok(simplex, s.nodes, jacobian_density)) {
        ok = false;
        break;
      }
      out.push_back(std::move(s));
    }
    if (ok)
      return out;
  }
  if (depth >= 4)
    throw DecompositionFailed("simplexify: no split with positive Jacobians");
  std::vector<SubElement> out;
  for (const auto& child : detail::same_family_children(sub.family)) {
    SubElement c = sub;
    c.nodes.clear();
    for (const auto& r : elem.nodes())
      c.nodes.push_back(isoparametric_map(elem, sub.nodes, child(r)));
    for (auto& t : simplexify(c, check, jacobian_density, depth + 1))
      out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Successive decomposition of one background element

namespace detail {

struct Piece {
  Cell cell;        // nodes in root reference space; values refreshed per pass
  SignVector signs;  // 0 for functions not processed yet
  int curved_entity = -1;
  int function = -1;
  Family family = Family::Triangle;  // may be non-simplex after a cut
};

class ElementDecomposer {
 public:
  ElementDecomposer(const ReferenceElement& root, std::vector<std::vector<double>> values,
                    const DecompositionOptions& opts, long element)
      : opts_(opts), p_(root.order()), k_(static_cast<int>(values.size()))
  {
    tree_.root = &root;
    tree_.root_values = std::move(values);
    tree_.depth_limit = opts.reconstruction.depth_limit;
    tree_.element = element;
    out_.element = element;
  }

  ElementDecomposition run()
  {
    std::vector<int> order = opts_.function_order;
    if (order.empty()) {
      order.resize(k_);
      std::iota(order.begin(), order.end(), 0);
    }
    Piece root;
    root.cell = tree_.make_root();
    root.family = root.cell.family;
    root.signs.assign(k_, 0);
    std::vector<Piece> pieces{root};

    for (std::size_t pass = 0; pass < order.size(); ++pass) {
      const int f = order[pass];
      if (f < 0 || f >= k_)
        throw std::invalid_argument("decompose: function index out of range");
      std::vector<Piece> next;
      for (auto& piece : pieces)
        for (auto& cell_piece : to_cells(piece))
          process(cell_piece, f, next, false);
      split_interfaces(f);
      pieces = std::move(next);
    }

    const bool untouched = pieces.size() == 1 && pieces[0].cell.identity &&
                           pieces[0].family == tree_.root->family() && out_.interfaces.empty();
    if (untouched) {
      out_.cut = false;
      out_.signs = pieces[0].signs;
      return out_;
    }
    out_.cut = true;
    for (auto& piece : pieces) {
      SubElement s;
      s.family = piece.family;
      s.order = p_;
      s.nodes = std::move(piece.cell.nodes);
      s.signs = piece.signs;
      s.parent = out_.element;
      s.lineage = piece.cell.lineage;
      s.curved_entity = piece.curved_entity;
      s.function = piece.function;
      out_.subs.push_back(std::move(s));
    }
    for (auto& i : out_.interfaces)
      i.parent = out_.element;
    return std::move(out_);
  }

 private:
  /// Simplex cells of a piece, with level-set values for the next pass.
  std::vector<Piece> to_cells(Piece& piece)
  {
    if (is_simplex(piece.family)) {
      if (piece.cell.values.empty()) {
        auto cell = tree_.make_cell(piece.family, std::move(piece.cell.nodes), piece.cell.lineage,
                                    piece.cell.depth);
        piece.cell = std::move(cell);
      }
      return {piece};
    }
    SubElement s;
    s.family = piece.family;
    s.order = p_;
    s.nodes = piece.cell.nodes;
    std::vector<Piece> out;
    for (auto& t : simplexify(s, true, opts_.jacobian_density)) {
      Piece q;
      q.cell = tree_.make_cell(t.family, std::move(t.nodes), piece.cell.lineage, piece.cell.depth);
      q.family = t.family;
      q.signs = piece.signs;
      q.function = piece.function;
      out.push_back(std::move(q));
    }
    return out;
  }

  /// Decomposes `piece` (a simplex cell) with respect to function f. Pieces
  /// of dimension lower than the root (surface cells) produce interface
  /// pieces instead of volume pieces.
  void process(Piece& piece, int f, std::vector<Piece>& sink, bool surface)
  {
    const auto& elem = reference_element(piece.cell.family, p_);
    const auto& v = piece.cell.values[f];
    const auto& ropt = opts_.reconstruction;
    bool refine = false;
    try {
      const auto rep = check_validity(elem, v, ropt.sample_density);
      if (!rep.valid)
        refine = true;
      else if (rep.uncut) {
        piece.signs[f] = static_cast<std::int8_t>(sign_of(v[0]));
        sink.push_back(piece);
        return;
      }
      else {
        const auto topo = classify_topology(elem, v);
        if (topo.kind == CutCase::Uncut)
          throw InternalConsistencyError("decompose: valid cut element with uniform corner signs");
        const auto cuts = find_edge_intersections(elem, v, topo, ropt.newton);
        auto iface = reconstruct(elem, v, topo, cuts, ropt);
        auto subs = elem.dim() == 2 ? decompose_triangle(elem, topo, iface, opts_.jacobian_density)
                                    : decompose_tetra(elem, topo, iface, opts_.jacobian_density);
        emit(piece, f, elem, std::move(iface), std::move(subs), sink, surface);
        return;
      }
    }
    catch (const RootSearchFailed&) {
      refine = true;
    }
    catch (const DecompositionFailed&) {
      refine = true;
    }
    if (refine) {
      ++out_.refinements;
      auto children = tree_.refine(piece.cell);
      for (auto& c : children) {
        out_.max_depth = std::max(out_.max_depth, c.depth);
        Piece q;
        q.cell = std::move(c);
        q.family = q.cell.family;
        q.signs = piece.signs;
        q.function = piece.function;
        process(q, f, sink, surface);
      }
    }
  }

  void emit(const Piece& piece, int f, const ReferenceElement& elem, InterfaceElement iface,
            std::vector<SubElement> subs, std::vector<Piece>& sink, bool surface)
  {
    const auto& cell = piece.cell;
    auto to_root = [&](std::vector<Point>& nodes) {
      if (cell.identity)
        return;
      for (auto& x : nodes)
        x = isoparametric_map(elem, cell.nodes, x);
    };
    to_root(iface.nodes);
    for (auto& s : subs) {
      to_root(s.nodes);
      if (!cell.identity && !surface)
        check_jacobian(reference_element(s.family, p_), s.nodes, opts_.jacobian_density);
    }
    for (auto& s : subs) {
      Piece q;
      q.cell.family = s.family;  // non-simplex families are simplexified before reuse
      q.cell.nodes = std::move(s.nodes);
      q.cell.lineage = cell.lineage;
      q.cell.depth = cell.depth;
      q.family = s.family;
      q.signs = piece.signs;
      q.signs[f] = s.signs[0];
      q.curved_entity = s.curved_entity;
      q.function = f;
      sink.push_back(std::move(q));
    }
    if (!surface) {
      iface.function = f;
      iface.signs = piece.signs;
      iface.signs[f] = 0;
      out_.interfaces.push_back(std::move(iface));
    }
  }

  /// Tags or splits the interface elements of earlier functions by f.
  void split_interfaces(int f)
  {
    std::vector<InterfaceElement> kept;
    for (auto& iface : out_.interfaces) {
      if (iface.function == f || iface.signs[f] != 0) {
        kept.push_back(std::move(iface));
        continue;
      }
      if (iface.family == Family::Line)
        split_line(iface, f, kept, 0);
      else
        split_surface(iface, f, kept);
    }
    out_.interfaces = std::move(kept);
  }

  void split_line(InterfaceElement& iface, int f, std::vector<InterfaceElement>& sink, int depth)
  {
    const auto& line = reference_element(Family::Line, p_);
    std::vector<double> g(iface.nodes.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = interpolate(*tree_.root, tree_.root_values[f], iface.nodes[i]);
    const int density = opts_.reconstruction.sample_density > 0
                            ? opts_.reconstruction.sample_density
                            : default_sample_density(p_);
    const auto& table = sample_table(line, std::max(density, p_ + 1));
    const auto& path = table.grid.edge_points[0];
    int changes = 0;
    for (std::size_t k = 1; k < path.size(); ++k)
      if (sign_of(table.value(path[k], g)) != sign_of(table.value(path[k - 1], g)))
        ++changes;
    if (changes == 0) {
      iface.signs[f] = static_cast<std::int8_t>(sign_of(table.value(path[0], g)));
      sink.push_back(std::move(iface));
      return;
    }

    auto part = [&](double a, double b) {
      InterfaceElement piece = iface;
      piece.nodes.clear();
      piece.iterations.assign(line.node_count(), 0);
      for (const auto& u : line.nodes())
        piece.nodes.push_back(
            isoparametric_map(line, iface.nodes, make_point(a + 0.5 * (u[0] + 1.0) * (b - a))));
      return piece;
    };
    if (changes == 1) {
      try {
        const double s =
            -1.0 + 2.0 * edge_root(line, g, make_point(-1), make_point(1), opts_.reconstruction.newton).t;
        for (const auto& [a, b] : {std::pair{-1.0, s}, std::pair{s, 1.0}}) {
          auto piece = part(a, b);
          piece.signs[f] = static_cast<std::int8_t>(sign_of(interpolate(line, g, make_point(0.5 * (a + b)))));
          sink.push_back(std::move(piece));
        }
        return;
      }
      catch (const RootSearchFailed&) {
      }
    }
    if (depth >= tree_.depth_limit)
      throw RefinementExhausted("interface splitting depth limit reached in element " +
                                    std::to_string(tree_.element),
                                tree_.element, depth);
    for (const auto& [a, b] : {std::pair{-1.0, 0.0}, std::pair{0.0, 1.0}}) {
      auto piece = part(a, b);
      split_line(piece, f, sink, depth + 1);
    }
  }

  void split_surface(const InterfaceElement& iface, int f, std::vector<InterfaceElement>& sink)
  {
    std::vector<Piece> cells;
    SubElement s;
    s.family = iface.family;
    s.order = p_;
    s.nodes = iface.nodes;
    for (auto& t : simplexify(s, false)) {
      Piece q;
      q.cell = tree_.make_cell(t.family, std::move(t.nodes), {}, 0);
      q.family = t.family;
      q.signs = iface.signs;
      cells.push_back(std::move(q));
    }
    std::vector<Piece> out;
    for (auto& c : cells)
      process(c, f, out, true);
    for (auto& q : out) {
      InterfaceElement e = iface;
      e.family = q.family;
      e.nodes = std::move(q.cell.nodes);
      e.iterations.assign(e.nodes.size(), 0);
      e.signs = q.signs;
      sink.push_back(std::move(e));
    }
  }

  const DecompositionOptions& opts_;
  int p_;
  int k_;
  RefinementTree tree_;
  ElementDecomposition out_;
};

}  // namespace detail

/// Successive decomposition of one reference element with respect to k
/// level-set functions given by their nodal values on that element.
inline ElementDecomposition decompose_element(const ReferenceElement& elem,
                                              std::vector<std::vector<double>> values,
                                              const DecompositionOptions& opts = {},
                                              long element = -1)
{
  if (values.empty())
    throw std::invalid_argument("decompose_element: need at least one level-set function");
  for (const auto& v : values)
    if (static_cast<int>(v.size()) != elem.node_count())
      throw std::invalid_argument("decompose_element: nodal value count mismatch");
  return detail::ElementDecomposer(elem, std::move(values), opts, element).run();
}

/// Decomposes every element of the mesh; element loop runs in parallel.
inline DecompositionResult decompose_multi(const BackgroundMesh& mesh, const LevelSetField& ls,
                                           const DecompositionOptions& opts = {})
{
  if (ls.mesh_id != mesh.id)
    throw std::invalid_argument("decompose_multi: level-set field belongs to another mesh");
  DecompositionResult res;
  res.dim = mesh.dim;
  res.order = mesh.order;
  res.function_count = ls.function_count();
  res.elements.resize(mesh.element_count());
  const auto& ref = mesh.reference();
  parallel_for(mesh.element_count(), [&](std::size_t e) {
    std::vector<std::vector<double>> values;
    for (int f = 0; f < ls.function_count(); ++f)
      values.push_back(ls.element_values(mesh, f, e));
    res.elements[e] = decompose_element(ref, std::move(values), opts, static_cast<long>(e));
  });
  for (const auto& e : res.elements) {
    res.refined_elements += e.refinements > 0;
    res.failure_retries += e.refinements;
  }
  return res;
}

/// Physical-space node coordinates of a sub-element or interface element.
struct PhysicalElement {
  Family family = Family::Triangle;
  int order = 1;
  std::vector<Point> nodes;
  SignVector signs;
  long parent = -1;
  int function = -1;
  bool interface = false;
};

/// Pushes sub-element and interface nodes through the background elements'
/// isoparametric maps. Volume sub-elements are re-checked for a positive
/// physical Jacobian.
inline std::vector<PhysicalElement> map_to_physical(const DecompositionResult& result,
                                                    const BackgroundMesh& mesh)
{
  const auto& ref = mesh.reference();
  std::vector<PhysicalElement> out;
  for (const auto& ed : result.elements) {
    const auto bg = mesh.element_nodes(ed.element);
    auto push = [&](Family fam, const std::vector<Point>& nodes, const SignVector& signs, int fn,
                    bool iface) {
      PhysicalElement pe;
      pe.family = fam;
      pe.order = result.order;
      pe.signs = signs;
      pe.parent = ed.element;
      pe.function = fn;
      pe.interface = iface;
      for (const auto& r : nodes)
        pe.nodes.push_back(isoparametric_map(ref, bg, r));
      if (!iface)
        check_jacobian(reference_element(fam, result.order), pe.nodes);
      out.push_back(std::move(pe));
    };
    if (!ed.cut) {
      push(ref.family(), ref.nodes(), ed.signs, -1, false);
      continue;
    }
    for (const auto& s : ed.subs)
      push(s.family, s.nodes, s.signs, s.function, false);
    for (const auto& i : ed.interfaces)
      push(i.family, i.nodes, i.signs, i.function, true);
  }
  return out;
}

}  // namespace cutmesh
