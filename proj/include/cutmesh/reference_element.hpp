#pragma once

#include "core.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace cutmesh {

/// Reference domains:
///   Line           u in [-1, 1]
///   Triangle       {a, b >= 0, a + b <= 1}
///   Quadrilateral  [-1, 1]^2
///   Tetrahedron    {a, b, c >= 0, a + b + c <= 1}
///   Prism          Triangle x [-1, 1]
enum class Family { Line, Triangle, Quadrilateral, Tetrahedron, Prism };

inline constexpr int dimension(Family family)
{
  switch (family) {
    case Family::Line: return 1;
    case Family::Triangle:
    case Family::Quadrilateral: return 2;
    case Family::Tetrahedron:
    case Family::Prism: return 3;
  }
  return 0;
}

inline constexpr std::string_view to_string(Family family)
{
  switch (family) {
    case Family::Line: return "line";
    case Family::Triangle: return "triangle";
    case Family::Quadrilateral: return "quadrilateral";
    case Family::Tetrahedron: return "tetrahedron";
    case Family::Prism: return "prism";
  }
  return "?";
}

inline constexpr bool is_simplex(Family family)
{
  return family == Family::Line || family == Family::Triangle || family == Family::Tetrahedron;
}

inline constexpr double reference_measure(Family family)
{
  switch (family) {
    case Family::Line: return 2.0;
    case Family::Triangle: return 0.5;
    case Family::Quadrilateral: return 4.0;
    case Family::Tetrahedron: return 1.0 / 6.0;
    case Family::Prism: return 1.0;
  }
  return 0.0;
}

inline int lagrange_node_count(Family family, int order)
{
  const int p = order;
  switch (family) {
    case Family::Line: return p + 1;
    case Family::Triangle: return (p + 1) * (p + 2) / 2;
    case Family::Quadrilateral: return (p + 1) * (p + 1);
    case Family::Tetrahedron: return (p + 1) * (p + 2) * (p + 3) / 6;
    case Family::Prism: return (p + 1) * (p + 1) * (p + 2) / 2;
  }
  return 0;
}

/// Closed-domain membership with tolerance.
inline bool contains(Family family, const Point& r, double tol = 1e-12)
{
  const double a = r[0], b = r[1], c = r[2];
  switch (family) {
    case Family::Line: return a >= -1 - tol && a <= 1 + tol;
    case Family::Triangle: return a >= -tol && b >= -tol && a + b <= 1 + tol;
    case Family::Quadrilateral:
      return a >= -1 - tol && a <= 1 + tol && b >= -1 - tol && b <= 1 + tol;
    case Family::Tetrahedron: return a >= -tol && b >= -tol && c >= -tol && a + b + c <= 1 + tol;
    case Family::Prism:
      return a >= -tol && b >= -tol && a + b <= 1 + tol && c >= -1 - tol && c <= 1 + tol;
  }
  return false;
}

/// Corner coordinates of the reference domain in the documented order.
inline std::vector<Point> reference_corners(Family family)
{
  switch (family) {
    case Family::Line: return {make_point(-1), make_point(1)};
    case Family::Triangle: return {make_point(0, 0), make_point(1, 0), make_point(0, 1)};
    case Family::Quadrilateral:
      return {make_point(-1, -1), make_point(1, -1), make_point(1, 1), make_point(-1, 1)};
    case Family::Tetrahedron:
      return {make_point(0, 0, 0), make_point(1, 0, 0), make_point(0, 1, 0), make_point(0, 0, 1)};
    case Family::Prism:
      return {make_point(0, 0, -1), make_point(1, 0, -1), make_point(0, 1, -1),
              make_point(0, 0, 1),  make_point(1, 0, 1),  make_point(0, 1, 1)};
  }
  return {};
}

/// Edge table: pairs of corner indices, oriented from first to second.
inline std::vector<std::array<int, 2>> reference_edges(Family family)
{
  switch (family) {
    case Family::Line: return {{0, 1}};
    case Family::Triangle: return {{0, 1}, {1, 2}, {2, 0}};
    case Family::Quadrilateral: return {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
    case Family::Tetrahedron: return {{0, 1}, {1, 2}, {2, 0}, {0, 3}, {1, 3}, {2, 3}};
    case Family::Prism:
      return {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}, {0, 3}, {1, 4}, {2, 5}};
  }
  return {};
}

/// Face table (3D families): corner lists with outward orientation. Tetrahedron
/// face k is opposite corner k.
inline std::vector<std::vector<int>> reference_faces(Family family)
{
  switch (family) {
    case Family::Tetrahedron: return {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
    case Family::Prism: return {{0, 2, 1}, {3, 4, 5}, {0, 1, 4, 3}, {1, 2, 5, 4}, {2, 0, 3, 5}};
    case Family::Triangle: return {{0, 1, 2}};
    case Family::Quadrilateral: return {{0, 1, 2, 3}};
    default: return {};
  }
}

// ---------------------------------------------------------------------------
// One-dimensional Lagrange polynomials on arbitrary distinct nodes.

/// Values of the Lagrange basis on `nodes` at x.
inline void lagrange_1d(std::span<const double> nodes, double x, std::span<double> values)
{
  const std::size_t n = nodes.size();
  for (std::size_t j = 0; j < n; ++j) {
    double v = 1.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != j)
        v *= (x - nodes[k]) / (nodes[j] - nodes[k]);
    values[j] = v;
  }
}

/// Values and first derivatives of the Lagrange basis on `nodes` at x.
inline void lagrange_1d(std::span<const double> nodes, double x, std::span<double> values,
                        std::span<double> derivs)
{
  const std::size_t n = nodes.size();
  for (std::size_t j = 0; j < n; ++j) {
    double v = 1.0;
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j)
        continue;
      const double inv = 1.0 / (nodes[j] - nodes[k]);
      d = d * (x - nodes[k]) * inv + v * inv;
      v *= (x - nodes[k]) * inv;
    }
    values[j] = v;
    derivs[j] = d;
  }
}

/// Equispaced nodes -1 + 2j/p, j = 0..p.
inline std::vector<double> equispaced_nodes(int order)
{
  std::vector<double> x(order + 1);
  for (int j = 0; j <= order; ++j)
    x[j] = -1.0 + 2.0 * j / order;
  return x;
}

namespace detail {

// Factor tables of the simplex Lagrange basis: ell[k] = prod_{s<k} (p*l - s)/(s+1)
// and its derivative with respect to l.
inline void simplex_factor_table(int order, double lambda, double* ell, double* dell)
{
  ell[0] = 1.0;
  dell[0] = 0.0;
  for (int k = 1; k <= order; ++k) {
    const double f = (order * lambda - (k - 1)) / k;
    ell[k] = ell[k - 1] * f;
    dell[k] = dell[k - 1] * f + ell[k - 1] * static_cast<double>(order) / k;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Lagrange element on a reference domain with equispaced nodes.
///
/// Node order: corners first (order of reference_corners), then edge-interior
/// nodes edge by edge along the edge orientation, then face-interior nodes
/// face by face, then element-interior nodes. Use entity_nodes() rather than
/// relying on the order past the corners.
class ReferenceElement {
 public:
  ReferenceElement(Family family, int order) : family_(family), order_(order)
  {
    if (order < 1)
      throw std::invalid_argument("ReferenceElement: order must be >= 1");
    build_nodes();
  }

  Family family() const { return family_; }
  int order() const { return order_; }
  int dim() const { return dimension(family_); }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int corner_count() const { return static_cast<int>(reference_corners(family_).size()); }
  const std::vector<Point>& nodes() const { return nodes_; }
  const Point& node(int i) const { return nodes_[i]; }

  /// Shape function values at r (one per node).
  void shape_values(const Point& r, std::span<double> values) const
  {
    evaluate(r, values.data(), nullptr);
  }

  /// Reference gradients at r; row i is the gradient of N_i.
  void shape_gradients(const Point& r, std::span<Point> grads) const
  {
    evaluate(r, nullptr, grads.data());
  }

  void shape_values_and_gradients(const Point& r, std::span<double> values,
                                  std::span<Point> grads) const
  {
    evaluate(r, values.data(), grads.data());
  }

  std::vector<double> shape_values(const Point& r) const
  {
    std::vector<double> v(nodes_.size());
    evaluate(r, v.data(), nullptr);
    return v;
  }

  std::vector<Point> shape_gradients(const Point& r) const
  {
    std::vector<Point> g(nodes_.size());
    evaluate(r, nullptr, g.data());
    return g;
  }

  /// Indices of the nodes lying on the sub-entity spanned by `corners`, ordered
  /// like the nodes of a reference element of `sub_family` (same order) whose
  /// corners are mapped onto `corners` in the given order.
  const std::vector<int>& entity_nodes(Family sub_family, std::span<const int> corners) const
  {
    std::vector<int> key(corners.begin(), corners.end());
    key.push_back(static_cast<int>(sub_family));
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = entity_cache_.find(key);
    if (it != entity_cache_.end())
      return it->second;
    auto result = compute_entity_nodes(sub_family, corners);
    return entity_cache_.emplace(std::move(key), std::move(result)).first->second;
  }

  /// Node indices along edge `e` of reference_edges(), in path order from the
  /// first corner to the second (p + 1 entries).
  std::vector<int> edge_path(int e) const
  {
    const auto edge = reference_edges(family_)[e];
    const auto& line = entity_nodes(Family::Line, edge);
    std::vector<int> path;
    path.reserve(order_ + 1);
    path.push_back(line[0]);
    for (int j = 2; j <= order_; ++j)
      path.push_back(line[j]);
    path.push_back(line[1]);
    return path;
  }

 private:
  void evaluate(const Point& r, double* values, Point* grads) const;
  void build_nodes();
  std::vector<int> compute_entity_nodes(Family sub_family, std::span<const int> corners) const;

  Family family_;
  int order_;
  std::vector<Point> nodes_;
  // Simplex families: barycentric multi-index per node. Quad: (i, j).
  // Prism: (i0, i1, i2, k).
  std::vector<std::array<int, 4>> index_;

  mutable std::mutex cache_mutex_;
  mutable std::map<std::vector<int>, std::vector<int>> entity_cache_;
};

/// Shared immutable reference element for (family, order).
inline const ReferenceElement& reference_element(Family family, int order)
{
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<ReferenceElement>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{static_cast<int>(family), order}];
  if (!slot)
    slot = std::make_unique<ReferenceElement>(family, order);
  return *slot;
}

// ---------------------------------------------------------------------------

inline void ReferenceElement::build_nodes()
{
  const int p = order_;
  struct Entry {
    std::array<int, 4> index;
    Point x;
    std::tuple<int, int, int, int> key;
  };
  std::vector<Entry> entries;

  auto simplex_key = [&](const std::array<int, 4>& alpha, int nbary) {
    // Entity rank and id from the support of the multi-index.
    std::vector<int> support;
    for (int m = 0; m < nbary; ++m)
      if (alpha[m] > 0)
        support.push_back(m);
    const int rank = static_cast<int>(support.size()) - 1;
    if (rank == 0)
      return std::make_tuple(0, support[0], 0, 0);
    if (rank == 1) {
      const auto edges = reference_edges(family_);
      for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
        const auto [c0, c1] = edges[e];
        if ((support[0] == c0 && support[1] == c1) || (support[0] == c1 && support[1] == c0))
          return std::make_tuple(1, e, alpha[c1], 0);
      }
    }
    if (rank == 2 && nbary == 4) {
      const auto faces = reference_faces(family_);
      for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
        const auto& fc = faces[f];
        if (std::is_permutation(fc.begin(), fc.end(), support.begin()))
          return std::make_tuple(2, f, alpha[fc[2]], alpha[fc[1]]);
      }
    }
    // Element interior: lexicographic on the reversed multi-index.
    return std::make_tuple(rank, 0, alpha[nbary - 1] * (p + 1) + (nbary > 2 ? alpha[nbary - 2] : 0),
                           nbary > 3 ? alpha[1] : 0);
  };

  switch (family_) {
    case Family::Line: {
      for (int j = 0; j <= p; ++j) {
        std::array<int, 4> alpha{p - j, j, 0, 0};
        const int rank = (j == 0 || j == p) ? 0 : 1;
        entries.push_back({alpha, make_point(-1.0 + 2.0 * j / p),
                           {rank, j == p ? 1 : 0, j, 0}});
      }
      break;
    }
    case Family::Triangle: {
      for (int j = 0; j <= p; ++j)
        for (int i = 0; i + j <= p; ++i) {
          std::array<int, 4> alpha{p - i - j, i, j, 0};
          entries.push_back(
              {alpha, make_point(double(i) / p, double(j) / p), simplex_key(alpha, 3)});
        }
      break;
    }
    case Family::Tetrahedron: {
      for (int k = 0; k <= p; ++k)
        for (int j = 0; j + k <= p; ++j)
          for (int i = 0; i + j + k <= p; ++i) {
            std::array<int, 4> alpha{p - i - j - k, i, j, k};
            entries.push_back({alpha, make_point(double(i) / p, double(j) / p, double(k) / p),
                               simplex_key(alpha, 4)});
          }
      break;
    }
    case Family::Quadrilateral: {
      for (int j = 0; j <= p; ++j)
        for (int i = 0; i <= p; ++i) {
          const bool ei = (i == 0 || i == p), ej = (j == 0 || j == p);
          std::tuple<int, int, int, int> key;
          if (ei && ej) {
            const int corner = (j == 0) ? (i == 0 ? 0 : 1) : (i == p ? 2 : 3);
            key = {0, corner, 0, 0};
          }
          else if (ej) {
            key = (j == 0) ? std::make_tuple(1, 0, i, 0) : std::make_tuple(1, 2, p - i, 0);
          }
          else if (ei) {
            key = (i == p) ? std::make_tuple(1, 1, j, 0) : std::make_tuple(1, 3, p - j, 0);
          }
          else {
            key = {2, 0, j, i};
          }
          entries.push_back({{i, j, 0, 0},
                             make_point(-1.0 + 2.0 * i / p, -1.0 + 2.0 * j / p),
                             key});
        }
      break;
    }
    case Family::Prism: {
      const auto edges = reference_edges(Family::Prism);
      for (int k = 0; k <= p; ++k)
        for (int j = 0; j <= p; ++j)
          for (int i = 0; i + j <= p; ++i) {
            std::array<int, 4> alpha{p - i - j, i, j, k};
            std::vector<int> support;
            for (int m = 0; m < 3; ++m)
              if (alpha[m] > 0)
                support.push_back(m);
            const bool cap = (k == 0 || k == p);
            const int level = (k == p) ? 3 : 0;
            std::tuple<int, int, int, int> key;
            if (support.size() == 1) {
              key = cap ? std::make_tuple(0, support[0] + level, 0, 0)
                        : std::make_tuple(1, 6 + support[0], k, 0);
            }
            else if (support.size() == 2) {
              // Which triangle edge: (0,1) -> 0, (1,2) -> 1, (2,0) -> 2.
              int te = 0;
              if (support[0] == 1 && support[1] == 2)
                te = 1;
              else if (support[0] == 0 && support[1] == 2)
                te = 2;
              const int c1 = edges[te][1];
              if (cap)
                key = {1, te + level, alpha[c1], 0};
              else
                key = {2, 2 + te, k, alpha[c1]};
            }
            else {
              key = cap ? std::make_tuple(2, k == 0 ? 0 : 1, j, i) : std::make_tuple(3, k, j, i);
            }
            entries.push_back({alpha,
                               make_point(double(i) / p, double(j) / p, -1.0 + 2.0 * k / p),
                               key});
          }
      break;
    }
  }

  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& l, const Entry& r) { return l.key < r.key; });
  nodes_.reserve(entries.size());
  index_.reserve(entries.size());
  for (const auto& e : entries) {
    nodes_.push_back(e.x);
    index_.push_back(e.index);
  }
}

inline void ReferenceElement::evaluate(const Point& r, double* values, Point* grads) const
{
  const int p = order_;
  const int n = node_count();
  // Stack tables sized for orders well beyond what is supported in practice.
  constexpr int kMax = 16;
  if (p >= kMax)
    throw std::invalid_argument("ReferenceElement: order too large");
  double ell[4][kMax], dell[4][kMax];

  switch (family_) {
    case Family::Line:
    case Family::Quadrilateral: {
      // 1D Lagrange on equispaced nodes in each direction.
      double x[kMax];
      for (int j = 0; j <= p; ++j)
        x[j] = -1.0 + 2.0 * j / p;
      const int dirs = (family_ == Family::Line) ? 1 : 2;
      for (int d = 0; d < dirs; ++d)
        lagrange_1d(std::span<const double>(x, p + 1), r[d], std::span<double>(ell[d], p + 1),
                    std::span<double>(dell[d], p + 1));
      for (int i = 0; i < n; ++i) {
        const auto& idx = index_[i];
        if (family_ == Family::Line) {
          const int j = idx[1];
          if (values)
            values[i] = ell[0][j];
          if (grads)
            grads[i] = make_point(dell[0][j]);
        }
        else {
          const int a = idx[0], b = idx[1];
          if (values)
            values[i] = ell[0][a] * ell[1][b];
          if (grads)
            grads[i] = make_point(dell[0][a] * ell[1][b], ell[0][a] * dell[1][b]);
        }
      }
      return;
    }
    case Family::Triangle:
    case Family::Tetrahedron:
    case Family::Prism: {
      const int nbary = (family_ == Family::Tetrahedron) ? 4 : 3;
      double lambda[4];
      if (nbary == 3) {
        lambda[0] = 1.0 - r[0] - r[1];
        lambda[1] = r[0];
        lambda[2] = r[1];
      }
      else {
        lambda[0] = 1.0 - r[0] - r[1] - r[2];
        lambda[1] = r[0];
        lambda[2] = r[1];
        lambda[3] = r[2];
      }
      for (int m = 0; m < nbary; ++m)
        detail::simplex_factor_table(p, lambda[m], ell[m], dell[m]);
      double wv[kMax], wd[kMax];
      if (family_ == Family::Prism) {
        double x[kMax];
        for (int j = 0; j <= p; ++j)
          x[j] = -1.0 + 2.0 * j / p;
        lagrange_1d(std::span<const double>(x, p + 1), r[2], std::span<double>(wv, p + 1),
                    std::span<double>(wd, p + 1));
      }
      for (int i = 0; i < n; ++i) {
        const auto& a = index_[i];
        double prod = 1.0;
        double dl[4] = {0, 0, 0, 0};  // derivative with respect to each barycentric
        for (int m = 0; m < nbary; ++m) {
          double other = 1.0;
          for (int q = 0; q < nbary; ++q)
            if (q != m)
              other *= ell[q][a[q]];
          dl[m] = dell[m][a[m]] * other;
          if (m == 0)
            prod = ell[0][a[0]] * other;
        }
        double value = prod;
        Point g = Point::Zero();
        for (int d = 0; d < nbary - 1; ++d)
          g[d] = dl[d + 1] - dl[0];
        if (family_ == Family::Prism) {
          const int k = a[3];
          g[0] *= wv[k];
          g[1] *= wv[k];
          g[2] = value * wd[k];
          value *= wv[k];
        }
        if (values)
          values[i] = value;
        if (grads)
          grads[i] = g;
      }
      return;
    }
  }
}

inline std::vector<int> ReferenceElement::compute_entity_nodes(Family sub_family,
                                                               std::span<const int> corners) const
{
  const auto parent_corners = reference_corners(family_);
  const auto& sub = reference_element(sub_family, order_);
  const auto sub_corner_count = reference_corners(sub_family).size();
  if (corners.size() != sub_corner_count)
    throw std::invalid_argument("entity_nodes: corner count does not match sub-family");

  std::vector<int> result;
  result.reserve(sub.node_count());
  for (const auto& s : sub.nodes()) {
    Point x = Point::Zero();
    switch (sub_family) {
      case Family::Line: {
        const double t = 0.5 * (s[0] + 1.0);
        x = (1 - t) * parent_corners[corners[0]] + t * parent_corners[corners[1]];
        break;
      }
      case Family::Triangle:
        x = (1 - s[0] - s[1]) * parent_corners[corners[0]] + s[0] * parent_corners[corners[1]] +
            s[1] * parent_corners[corners[2]];
        break;
      case Family::Quadrilateral: {
        const double a = s[0], b = s[1];
        x = 0.25 * (1 - a) * (1 - b) * parent_corners[corners[0]] +
            0.25 * (1 + a) * (1 - b) * parent_corners[corners[1]] +
            0.25 * (1 + a) * (1 + b) * parent_corners[corners[2]] +
            0.25 * (1 - a) * (1 + b) * parent_corners[corners[3]];
        break;
      }
      case Family::Tetrahedron:
        x = (1 - s[0] - s[1] - s[2]) * parent_corners[corners[0]] +
            s[0] * parent_corners[corners[1]] + s[1] * parent_corners[corners[2]] +
            s[2] * parent_corners[corners[3]];
        break;
      case Family::Prism: {
        const double lo = 0.5 * (1 - s[2]), hi = 0.5 * (1 + s[2]);
        const double l0 = 1 - s[0] - s[1];
        x = lo * (l0 * parent_corners[corners[0]] + s[0] * parent_corners[corners[1]] +
                  s[1] * parent_corners[corners[2]]) +
            hi * (l0 * parent_corners[corners[3]] + s[0] * parent_corners[corners[4]] +
                  s[1] * parent_corners[corners[5]]);
        break;
      }
    }
    int found = -1;
    for (int i = 0; i < node_count(); ++i)
      if ((nodes_[i] - x).norm() < 1e-10) {
        found = i;
        break;
      }
    if (found < 0)
      throw std::invalid_argument("entity_nodes: corners do not span a sub-entity");
    result.push_back(found);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Isoparametric maps. Node coordinates may live in a space of higher dimension
// than the reference element (curves and surfaces).

inline Point isoparametric_map(const ReferenceElement& elem, std::span<const Point> node_coords,
                               const Point& r)
{
  if (static_cast<int>(node_coords.size()) != elem.node_count())
    throw std::invalid_argument("isoparametric_map: node count mismatch");
  thread_local std::vector<double> N;
  N.resize(elem.node_count());
  elem.shape_values(r, N);
  Point x = Point::Zero();
  for (int i = 0; i < elem.node_count(); ++i)
    x += N[i] * node_coords[i];
  return x;
}

/// Columns k < elem.dim() hold dx/dr_k; remaining columns are zero.
inline Matrix3 jacobian(const ReferenceElement& elem, std::span<const Point> node_coords,
                        const Point& r)
{
  if (static_cast<int>(node_coords.size()) != elem.node_count())
    throw std::invalid_argument("jacobian: node count mismatch");
  thread_local std::vector<Point> G;
  G.resize(elem.node_count());
  elem.shape_gradients(r, G);
  Matrix3 J = Matrix3::Zero();
  for (int i = 0; i < elem.node_count(); ++i)
    J += node_coords[i] * G[i].transpose();
  return J;
}

/// Determinant of the leading dim x dim block when `space_dim` equals the
/// element dimension; otherwise the Gram root sqrt(det(J^T J)).
inline double jacobian_measure(const Matrix3& J, int elem_dim, int space_dim)
{
  if (elem_dim == space_dim) {
    if (elem_dim == 1)
      return J(0, 0);
    if (elem_dim == 2)
      return J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
    return J.determinant();
  }
  if (elem_dim == 1)
    return J.col(0).norm();
  if (elem_dim == 2)
    return J.col(0).cross(J.col(1)).norm();
  return std::abs(J.determinant());
}

inline double jacobian_determinant(const ReferenceElement& elem,
                                   std::span<const Point> node_coords, const Point& r,
                                   int space_dim = -1)
{
  if (space_dim < 0)
    space_dim = elem.dim();
  return jacobian_measure(jacobian(elem, node_coords, r), elem.dim(), space_dim);
}

// ---------------------------------------------------------------------------

/// Structured lattice on a reference element used for sign-based validity
/// checks and Jacobian sampling.
struct SampleGrid {
  Family family{};
  int order = 0;
  int density = 0;
  std::vector<Point> points;
  /// Per element edge, indices into `points` ordered along the edge.
  std::vector<std::vector<int>> edge_points;
  /// Per element face (3D) or the element itself (2D), indices of points on it.
  std::vector<std::vector<int>> face_points;
  /// Per face, indices into the element edge table.
  std::vector<std::vector<int>> face_edges;
};

/// Lattice with `density` subdivisions per edge, merged with the element
/// nodes so that every node is a sample point.
inline SampleGrid sample_grid(const ReferenceElement& elem, int density)
{
  const int p = elem.order();
  if (density < p + 1)
    throw std::invalid_argument("sample_grid: density must be >= order + 1");
  SampleGrid grid;
  grid.family = elem.family();
  grid.order = p;
  grid.density = density;

  const auto& lattice = reference_element(elem.family(), density);
  grid.points = lattice.nodes();
  for (const auto& x : elem.nodes()) {
    bool present = false;
    for (const auto& y : grid.points)
      if ((x - y).norm() < 1e-12) {
        present = true;
        break;
      }
    if (!present)
      grid.points.push_back(x);
  }

  const auto corners = reference_corners(elem.family());
  const auto edges = reference_edges(elem.family());
  auto on_segment = [](const Point& x, const Point& a, const Point& b, double& t) {
    const Point d = b - a;
    t = (x - a).dot(d) / d.squaredNorm();
    return (a + t * d - x).norm() < 1e-12 && t > -1e-12 && t < 1 + 1e-12;
  };
  for (const auto& [c0, c1] : edges) {
    std::vector<std::pair<double, int>> on;
    for (int i = 0; i < static_cast<int>(grid.points.size()); ++i) {
      double t;
      if (on_segment(grid.points[i], corners[c0], corners[c1], t))
        on.emplace_back(t, i);
    }
    std::sort(on.begin(), on.end());
    std::vector<int> ids;
    for (const auto& [t, i] : on)
      ids.push_back(i);
    grid.edge_points.push_back(std::move(ids));
  }

  if (elem.family() == Family::Triangle || elem.family() == Family::Quadrilateral) {
    std::vector<int> all(grid.points.size());
    std::iota(all.begin(), all.end(), 0);
    grid.face_points.push_back(std::move(all));
    std::vector<int> fe(edges.size());
    std::iota(fe.begin(), fe.end(), 0);
    grid.face_edges.push_back(std::move(fe));
  }
  else if (elem.family() == Family::Tetrahedron) {
    for (const auto& face : reference_faces(Family::Tetrahedron)) {
      const Point a = corners[face[0]], b = corners[face[1]], c = corners[face[2]];
      const Point n = (b - a).cross(c - a);
      std::vector<int> ids;
      for (int i = 0; i < static_cast<int>(grid.points.size()); ++i)
        if (std::abs((grid.points[i] - a).dot(n)) < 1e-12 * n.norm())
          ids.push_back(i);
      grid.face_points.push_back(std::move(ids));
      std::vector<int> fe;
      for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
        const bool has0 = std::find(face.begin(), face.end(), edges[e][0]) != face.end();
        const bool has1 = std::find(face.begin(), face.end(), edges[e][1]) != face.end();
        if (has0 && has1)
          fe.push_back(e);
      }
      grid.face_edges.push_back(std::move(fe));
    }
  }
  return grid;
}

/// Default sample density: 2p subdivisions, i.e. 2p + 1 points per edge.
inline int default_sample_density(int order) { return 2 * order; }

}  // namespace cutmesh
