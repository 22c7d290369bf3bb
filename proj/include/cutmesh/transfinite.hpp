#pragma once

// Transfinite maps from prescribed curved boundary entities to element
// interiors. Each ramp-weighted deviation term is evaluated in factored form:
// an edge deviation of degree p vanishes at both ends, so it equals
// N1lin(u) N2lin(u) q(u) with q of degree p - 2, and the ramp denominator
// cancels exactly. The same holds for the tetrahedron face bubble
// (degree p - 3 after dividing by the three face barycentrics). No guard
// against 0/0 is needed at corners or along edges.

#include "core.hpp"
#include "reference_element.hpp"

#include <array>
#include <span>
#include <vector>

namespace cutmesh {

/// Curved edge given as a line element in Line node order
/// [start, end, interior...]. Stores the reduced deviation polynomial q.
class EdgeBubble {
 public:
  EdgeBubble() = default;

  explicit EdgeBubble(std::span<const Point> line_nodes)
  {
    const int n = static_cast<int>(line_nodes.size());
    if (n < 2)
      throw std::invalid_argument("EdgeBubble: need at least two nodes");
    order_ = n - 1;
    start_ = line_nodes[0];
    end_ = line_nodes[1];
    const auto& ref = reference_element(Family::Line, order_);
    for (int i = 2; i < n; ++i) {
      const double u = ref.node(i)[0];
      const Point lin = 0.5 * (1 - u) * start_ + 0.5 * (1 + u) * end_;
      u_.push_back(u);
      q_.push_back((line_nodes[i] - lin) / (0.25 * (1 - u) * (1 + u)));
    }
  }

  int order() const { return order_; }
  const Point& start() const { return start_; }
  const Point& end() const { return end_; }

  Point q(double u) const
  {
    Point r = Point::Zero();
    const std::size_t m = q_.size();
    for (std::size_t j = 0; j < m; ++j) {
      double l = 1.0;
      for (std::size_t k = 0; k < m; ++k)
        if (k != j)
          l *= (u - u_[k]) / (u_[j] - u_[k]);
      r += l * q_[j];
    }
    return r;
  }

  Point dq(double u) const
  {
    Point r = Point::Zero();
    const std::size_t m = q_.size();
    for (std::size_t j = 0; j < m; ++j) {
      double d = 0.0;
      for (std::size_t s = 0; s < m; ++s) {
        if (s == j)
          continue;
        double l = 1.0 / (u_[j] - u_[s]);
        for (std::size_t k = 0; k < m; ++k)
          if (k != j && k != s)
            l *= (u - u_[k]) / (u_[j] - u_[k]);
        d += l;
      }
      r += d * q_[j];
    }
    return r;
  }

  /// Curve minus its chord: (1 - u^2)/4 * q(u).
  Point deviation(double u) const { return 0.25 * (1 - u) * (1 + u) * q(u); }

  Point deviation_derivative(double u) const
  {
    return -0.5 * u * q(u) + 0.25 * (1 - u) * (1 + u) * dq(u);
  }

  /// Point on the curve.
  Point operator()(double u) const
  {
    return 0.5 * (1 - u) * start_ + 0.5 * (1 + u) * end_ + deviation(u);
  }

 private:
  int order_ = 1;
  Point start_ = Point::Zero();
  Point end_ = Point::Zero();
  std::vector<double> u_;
  std::vector<Point> q_;
};

namespace detail {

inline double closure_tolerance(const Point& a, const Point& b)
{
  return 1e-12 * std::max({1.0, a.norm(), b.norm()});
}

template <std::size_t N>
std::array<EdgeBubble, N> make_edge_bubbles(const std::array<std::vector<Point>, N>& edges)
{
  std::array<EdgeBubble, N> out;
  for (std::size_t k = 0; k < N; ++k) {
    if (edges[k].size() != edges[0].size())
      throw std::invalid_argument("transfinite map: edges must have the same order");
    out[k] = EdgeBubble(edges[k]);
  }
  for (std::size_t k = 0; k < N; ++k) {
    const Point& e = out[k].end();
    const Point& s = out[(k + 1) % N].start();
    if ((e - s).norm() > closure_tolerance(e, s))
      throw std::invalid_argument("transfinite map: edges do not form a closed contour");
  }
  return out;
}

}  // namespace detail

/// Triangle bounded by three curved edges (Line node order each). Edge k runs
/// from corner k to corner k+1 of the reference triangle, so edge 0 lies on
/// b = 0, edge 1 on the hypotenuse, edge 2 on a = 0 (from (0,1) to (0,0)).
class TriangleFromEdges {
 public:
  explicit TriangleFromEdges(const std::array<std::vector<Point>, 3>& edges)
      : e_(detail::make_edge_bubbles(edges))
  {
  }

  Point operator()(const Point& a) const
  {
    const double n1 = 1 - a[0] - a[1], n2 = a[0], n3 = a[1];
    return n1 * e_[0].start() + n2 * e_[1].start() + n3 * e_[2].start() +
           n1 * n2 * e_[0].q(2 * a[0] - 1) + n2 * n3 * e_[1].q(a[1] - a[0]) +
           n3 * n1 * e_[2].q(1 - 2 * a[1]);
  }

  /// Columns 0 and 1 hold d/da and d/db.
  Matrix3 jacobian(const Point& a) const
  {
    const double n1 = 1 - a[0] - a[1], n2 = a[0], n3 = a[1];
    const double u1 = 2 * a[0] - 1, u2 = a[1] - a[0], u3 = 1 - 2 * a[1];
    const Point q1 = e_[0].q(u1), q2 = e_[1].q(u2), q3 = e_[2].q(u3);
    const Point d1 = e_[0].dq(u1), d2 = e_[1].dq(u2), d3 = e_[2].dq(u3);
    const Point c1 = e_[0].start(), c2 = e_[1].start(), c3 = e_[2].start();
    Matrix3 J = Matrix3::Zero();
    J.col(0) = -c1 + c2 + (n1 - n2) * q1 + 2 * n1 * n2 * d1 + n3 * q2 - n2 * n3 * d2 - n3 * q3;
    J.col(1) = -c1 + c3 - n2 * q1 + n2 * q2 + n2 * n3 * d2 + (n1 - n3) * q3 - 2 * n3 * n1 * d3;
    return J;
  }

 private:
  std::array<EdgeBubble, 3> e_;
};

/// Quadrilateral bounded by four curved edges, edge k from corner k to k+1
/// (counterclockwise on [-1,1]^2).
class QuadFromEdges {
 public:
  explicit QuadFromEdges(const std::array<std::vector<Point>, 4>& edges)
      : e_(detail::make_edge_bubbles(edges))
  {
  }

  Point operator()(const Point& x) const
  {
    const double a = x[0], b = x[1];
    Point r = 0.25 * (1 - a) * (1 - b) * e_[0].start() + 0.25 * (1 + a) * (1 - b) * e_[1].start() +
              0.25 * (1 + a) * (1 + b) * e_[2].start() + 0.25 * (1 - a) * (1 + b) * e_[3].start();
    r += 0.5 * (1 - b) * e_[0].deviation(a);
    r += 0.5 * (1 + a) * e_[1].deviation(b);
    r += 0.5 * (1 + b) * e_[2].deviation(-a);
    r += 0.5 * (1 - a) * e_[3].deviation(-b);
    return r;
  }

  Matrix3 jacobian(const Point& x) const
  {
    const double a = x[0], b = x[1];
    const Point c1 = e_[0].start(), c2 = e_[1].start(), c3 = e_[2].start(), c4 = e_[3].start();
    Matrix3 J = Matrix3::Zero();
    J.col(0) = 0.25 * (-(1 - b) * c1 + (1 - b) * c2 + (1 + b) * c3 - (1 + b) * c4) +
               0.5 * (1 - b) * e_[0].deviation_derivative(a) + 0.5 * e_[1].deviation(b) -
               0.5 * (1 + b) * e_[2].deviation_derivative(-a) - 0.5 * e_[3].deviation(-b);
    J.col(1) = 0.25 * (-(1 - a) * c1 - (1 + a) * c2 + (1 + a) * c3 + (1 - a) * c4) -
               0.5 * e_[0].deviation(a) + 0.5 * (1 + a) * e_[1].deviation_derivative(b) +
               0.5 * e_[2].deviation(-a) - 0.5 * (1 - a) * e_[3].deviation_derivative(-b);
    return J;
  }

 private:
  std::array<EdgeBubble, 4> e_;
};

/// Line-element node lists of the boundary edges of a triangle or quad
/// element, in contour order, each starting at corner k.
inline std::vector<std::vector<Point>> boundary_edges(const ReferenceElement& elem,
                                                      std::span<const Point> node_coords)
{
  std::vector<std::vector<Point>> out;
  for (const auto& edge : reference_edges(elem.family())) {
    std::vector<Point> line;
    for (int i : elem.entity_nodes(Family::Line, edge))
      line.push_back(node_coords[i]);
    out.push_back(std::move(line));
  }
  return out;
}

/// Tetrahedron with one curved face. The face is a triangle element whose
/// corners 0, 1, 2 sit at tetrahedron corners 1, 2, 3; `apex` is corner 0.
class TetraOneCurvedFace {
 public:
  TetraOneCurvedFace(std::span<const Point> face_nodes, const Point& apex) : apex_(apex)
  {
    const int n = static_cast<int>(face_nodes.size());
    int p = 1;
    while (lagrange_node_count(Family::Triangle, p) < n)
      ++p;
    if (lagrange_node_count(Family::Triangle, p) != n)
      throw std::invalid_argument("TetraOneCurvedFace: bad face node count");
    order_ = p;
    const auto& face = reference_element(Family::Triangle, p);
    for (int k = 0; k < 3; ++k)
      corner_[k] = face_nodes[k];
    if ((corner_[1] - corner_[0]).cross(corner_[2] - corner_[0]).norm() <
        1e-14 * std::max(1.0, (corner_[1] - corner_[0]).squaredNorm()))
      throw std::invalid_argument("TetraOneCurvedFace: collinear face corners");

    const auto edges = reference_edges(Family::Triangle);
    for (int k = 0; k < 3; ++k) {
      std::vector<Point> line;
      for (int i : face.entity_nodes(Family::Line, edges[k]))
        line.push_back(face_nodes[i]);
      edge_[k] = EdgeBubble(line);
    }

    if (p >= 3) {
      // Face bubble divided by the three face barycentrics, sampled at the
      // interior face nodes; these form an order p - 3 lattice.
      auto bubble_at = [&](const Point& uv) {
        const double l0 = 1 - uv[0] - uv[1], l1 = uv[0], l2 = uv[1];
        const Point x = isoparametric_map(face, face_nodes, uv);
        const Point lin = l0 * corner_[0] + l1 * corner_[1] + l2 * corner_[2];
        return Point((x - lin - edge_sum(l0, l1, l2)) / (l0 * l1 * l2));
      };
      if (p == 3) {
        bubble_.push_back(bubble_at(make_point(1.0 / 3, 1.0 / 3)));
      }
      else {
        const auto& inner = reference_element(Family::Triangle, p - 3);
        for (const auto& mu : inner.nodes()) {
          const Point uv = make_point((mu[0] * (p - 3) + 1) / p, (mu[1] * (p - 3) + 1) / p);
          bubble_.push_back(bubble_at(uv));
        }
      }
    }
  }

  int order() const { return order_; }

  Point operator()(const Point& x) const
  {
    const double a = x[0], b = x[1], c = x[2];
    const double t = 1 - a - b - c;
    Point r = t * apex_ + a * corner_[0] + b * corner_[1] + c * corner_[2];
    r += edge_sum(a, b, c);
    if (!bubble_.empty())
      r += a * b * c * bubble(a + t / 3, b + t / 3, c + t / 3);
    return r;
  }

 private:
  // Ramp-weighted edge deviations with barycentric weights (l0, l1, l2) of
  // the face corners.
  Point edge_sum(double l0, double l1, double l2) const
  {
    return l0 * l1 * edge_[0].q(l1 - l0) + l1 * l2 * edge_[1].q(l2 - l1) +
           l2 * l0 * edge_[2].q(l0 - l2);
  }

  Point bubble(double l0, double l1, double l2) const
  {
    (void)l0;
    if (order_ == 3)
      return bubble_[0];
    const int p = order_;
    const auto& inner = reference_element(Family::Triangle, p - 3);
    thread_local std::vector<double> N;
    N.resize(inner.node_count());
    inner.shape_values(make_point((p * l1 - 1) / (p - 3), (p * l2 - 1) / (p - 3)), N);
    Point r = Point::Zero();
    for (int i = 0; i < inner.node_count(); ++i)
      r += N[i] * bubble_[i];
    return r;
  }

  int order_ = 1;
  Point apex_;
  std::array<Point, 3> corner_;
  std::array<EdgeBubble, 3> edge_;
  std::vector<Point> bubble_;
};

/// Prism whose bottom triangle (w = -1, corners 0, 1, 2) is a curved
/// triangle element and whose top (corners 3, 4, 5) is flat.
class PrismCurvedTriangle {
 public:
  PrismCurvedTriangle(std::span<const Point> bottom_nodes, const std::array<Point, 3>& top)
      : bottom_(bottom_nodes.begin(), bottom_nodes.end()), top_(top)
  {
    int p = 1;
    while (lagrange_node_count(Family::Triangle, p) < static_cast<int>(bottom_.size()))
      ++p;
    if (lagrange_node_count(Family::Triangle, p) != static_cast<int>(bottom_.size()))
      throw std::invalid_argument("PrismCurvedTriangle: bad face node count");
    order_ = p;
  }

  Point operator()(const Point& x) const
  {
    const auto& face = reference_element(Family::Triangle, order_);
    const Point ab = make_point(x[0], x[1]);
    const Point curved = isoparametric_map(face, bottom_, ab);
    const Point flat = (1 - x[0] - x[1]) * top_[0] + x[0] * top_[1] + x[1] * top_[2];
    return 0.5 * (1 - x[2]) * curved + 0.5 * (1 + x[2]) * flat;
  }

 private:
  int order_ = 1;
  std::vector<Point> bottom_;
  std::array<Point, 3> top_;
};

/// Prism whose lateral face over triangle edge 1 (prism corners 1, 2, 5, 4)
/// is a curved quadrilateral element with corners in that order: the quad's
/// first coordinate runs from corner 1 to corner 2, the second along the
/// prism axis. Edges 0-3 are straight. Evaluated slice by slice at constant
/// w: the slice is a triangle with one curved side.
class PrismCurvedQuad {
 public:
  PrismCurvedQuad(std::span<const Point> quad_nodes, const Point& bottom0, const Point& top3)
      : quad_(quad_nodes.begin(), quad_nodes.end()), c0_(bottom0), c3_(top3)
  {
    int p = 1;
    while (lagrange_node_count(Family::Quadrilateral, p) < static_cast<int>(quad_.size()))
      ++p;
    if (lagrange_node_count(Family::Quadrilateral, p) != static_cast<int>(quad_.size()))
      throw std::invalid_argument("PrismCurvedQuad: bad face node count");
    order_ = p;
  }

  Point operator()(const Point& x) const
  {
    const double w = x[2];
    const auto& face = reference_element(Family::Quadrilateral, order_);
    const auto& line = reference_element(Family::Line, order_);
    std::vector<Point> slice_edge;
    slice_edge.reserve(order_ + 1);
    for (const auto& u : line.nodes())
      slice_edge.push_back(isoparametric_map(face, quad_, make_point(u[0], w)));
    const Point p0 = 0.5 * (1 - w) * c0_ + 0.5 * (1 + w) * c3_;
    const EdgeBubble curved(slice_edge);
    const double n1 = 1 - x[0] - x[1], n2 = x[0], n3 = x[1];
    return n1 * p0 + n2 * curved.start() + n3 * curved.end() + n2 * n3 * curved.q(x[1] - x[0]);
  }

 private:
  int order_ = 1;
  std::vector<Point> quad_;
  Point c0_, c3_;
};

/// Node coordinates of an order-p element of `family` obtained by evaluating
/// `map` at its reference nodes.
template <class Map>
std::vector<Point> nodes_from_map(Family family, int order, const Map& map)
{
  const auto& ref = reference_element(family, order);
  std::vector<Point> out;
  out.reserve(ref.node_count());
  for (const auto& r : ref.nodes())
    out.push_back(map(r));
  return out;
}

}  // namespace cutmesh
