#include <cutmesh/transfinite.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace cutmesh;

namespace {

std::mt19937 gen(2024);

double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }

Point random_vec(double scale) { return make_point(uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale)); }

// Order-p line element from a to b with interior nodes displaced randomly.
std::vector<Point> curved_line(const Point& a, const Point& b, int p, double bulge)
{
  const auto& ref = reference_element(Family::Line, p);
  std::vector<Point> out;
  for (int i = 0; i < ref.node_count(); ++i) {
    const double t = 0.5 * (ref.node(i)[0] + 1);
    Point x = (1 - t) * a + t * b;
    if (i >= 2)
      x += random_vec(bulge);
    out.push_back(x);
  }
  return out;
}

Point eval_line(const std::vector<Point>& nodes, double u)
{
  const auto& ref = reference_element(Family::Line, static_cast<int>(nodes.size()) - 1);
  return isoparametric_map(ref, nodes, make_point(u));
}

// Element of `family` with corners `corners` whose non-corner nodes are
// randomly displaced.
std::vector<Point> curved_element(Family family, int p, const std::vector<Point>& corners,
                                  double bulge)
{
  const auto& lin = reference_element(family, 1);
  const auto& ref = reference_element(family, p);
  std::vector<Point> out;
  for (int i = 0; i < ref.node_count(); ++i) {
    Point x = isoparametric_map(lin, corners, ref.node(i));
    if (i >= lin.node_count())
      x += random_vec(bulge);
    out.push_back(x);
  }
  return out;
}

}  // namespace

TEST(EdgeBubble, ReproducesLineElement)
{
  for (int p = 1; p <= 6; ++p) {
    const auto nodes = curved_line(random_vec(1), random_vec(1), p, 0.3);
    const EdgeBubble e(nodes);
    for (int s = 0; s < 20; ++s) {
      const double u = uniform(-1, 1);
      EXPECT_LT((e(u) - eval_line(nodes, u)).norm(), 1e-13);
    }
  }
}

TEST(TriangleFromEdges, StraightEdgesGiveAffineMap)
{
  const Point c0 = make_point(0.1, 0.2), c1 = make_point(1.3, -0.1), c2 = make_point(0.4, 0.9);
  const TriangleFromEdges map({curved_line(c0, c1, 4, 0), curved_line(c1, c2, 4, 0),
                               curved_line(c2, c0, 4, 0)});
  for (int s = 0; s < 20; ++s) {
    const double a = uniform(0, 1), b = uniform(0, 1 - a);
    const Point expect = (1 - a - b) * c0 + a * c1 + b * c2;
    EXPECT_LT((map(make_point(a, b)) - expect).norm(), 1e-14);
  }
  EXPECT_LT((map(make_point(0, 0)) - c0).norm(), 1e-15);
}

TEST(TriangleFromEdges, DiagonalMidpointOracle)
{
  const Point c0 = make_point(0, 0), c1 = make_point(1, 0), c2 = make_point(0, 1);
  const auto diag = curved_line(c1, c2, 3, 0.2);
  const TriangleFromEdges map({curved_line(c0, c1, 3, 0), diag, curved_line(c2, c0, 3, 0)});
  EXPECT_LT((map(make_point(0.5, 0.5)) - eval_line(diag, 0.0)).norm(), 1e-14);
}

TEST(TriangleFromEdges, RejectsOpenContour)
{
  const Point c0 = make_point(0, 0), c1 = make_point(1, 0), c2 = make_point(0, 1);
  EXPECT_THROW(TriangleFromEdges({curved_line(c0, c1, 2, 0), curved_line(c1, c2, 2, 0),
                                  curved_line(c2, make_point(0, 0.1), 2, 0)}),
               std::invalid_argument);
}

TEST(TriangleFromEdges, JacobianMatchesFiniteDifferences)
{
  for (int p = 1; p <= 6; ++p) {
    const Point c0 = random_vec(1), c1 = random_vec(1), c2 = random_vec(1);
    const TriangleFromEdges map(
        {curved_line(c0, c1, p, 0.2), curved_line(c1, c2, p, 0.2), curved_line(c2, c0, p, 0.2)});
    for (int s = 0; s < 10; ++s) {
      const double a = uniform(0.05, 0.9), b = uniform(0.05, 0.95 - a);
      const Matrix3 J = map.jacobian(make_point(a, b));
      const double h = 1e-6;
      const Point da = (map(make_point(a + h, b)) - map(make_point(a - h, b))) / (2 * h);
      const Point db = (map(make_point(a, b + h)) - map(make_point(a, b - h))) / (2 * h);
      EXPECT_LT((J.col(0) - da).norm(), 1e-7);
      EXPECT_LT((J.col(1) - db).norm(), 1e-7);
    }
  }
}

TEST(QuadFromEdges, BilinearAndCenterBulge)
{
  const Point c0 = make_point(-1, -1), c1 = make_point(1, -1), c2 = make_point(1, 1),
              c3 = make_point(-1, 1);
  const QuadFromEdges flat({curved_line(c0, c1, 3, 0), curved_line(c1, c2, 3, 0),
                            curved_line(c2, c3, 3, 0), curved_line(c3, c0, 3, 0)});
  EXPECT_LT((flat(make_point(0.3, -0.2)) - make_point(0.3, -0.2)).norm(), 1e-15);

  // Edge 0 bulged by delta at its midpoint (quadratic): the center moves by
  // delta/2 because the ramp (1 - b)/2 equals 1/2 at b = 0.
  const double delta = 0.2;
  std::vector<Point> e0{c0, c1, make_point(0, -1 - delta)};
  const QuadFromEdges bulged({e0, {c1, c2, make_point(1, 0)}, {c2, c3, make_point(0, 1)},
                              {c3, c0, make_point(-1, 0)}});
  EXPECT_LT((bulged(make_point(0, 0)) - make_point(0, -delta / 2)).norm(), 1e-15);
  for (int k = 0; k < 4; ++k) {
    const auto corners = reference_corners(Family::Quadrilateral);
    EXPECT_LT((bulged(corners[k]) - corners[k]).norm(), 1e-15);
  }
}

TEST(QuadFromEdges, JacobianMatchesFiniteDifferences)
{
  for (int p = 1; p <= 5; ++p) {
    const Point c0 = random_vec(1), c1 = random_vec(1), c2 = random_vec(1), c3 = random_vec(1);
    const QuadFromEdges map({curved_line(c0, c1, p, 0.2), curved_line(c1, c2, p, 0.2),
                             curved_line(c2, c3, p, 0.2), curved_line(c3, c0, p, 0.2)});
    for (int s = 0; s < 10; ++s) {
      const double a = uniform(-0.9, 0.9), b = uniform(-0.9, 0.9);
      const Matrix3 J = map.jacobian(make_point(a, b));
      const double h = 1e-6;
      const Point da = (map(make_point(a + h, b)) - map(make_point(a - h, b))) / (2 * h);
      const Point db = (map(make_point(a, b + h)) - map(make_point(a, b - h))) / (2 * h);
      EXPECT_LT((J.col(0) - da).norm(), 1e-7);
      EXPECT_LT((J.col(1) - db).norm(), 1e-7);
    }
  }
}

TEST(TetraOneCurvedFace, FlatFaceIsAffineAndApex)
{
  const std::vector<Point> c{make_point(0.1, 0, 0), make_point(1, 0.1, 0), make_point(0, 1, 0.2),
                             make_point(0.1, 0.2, 1)};
  const auto face = curved_element(Family::Triangle, 4, {c[1], c[2], c[3]}, 0.0);
  const TetraOneCurvedFace map(face, c[0]);
  for (int s = 0; s < 20; ++s) {
    const double a = uniform(0, 1), b = uniform(0, 1 - a), cc = uniform(0, 1 - a - b);
    const Point expect = (1 - a - b - cc) * c[0] + a * c[1] + b * c[2] + cc * c[3];
    EXPECT_LT((map(make_point(a, b, cc)) - expect).norm(), 1e-14);
  }
  EXPECT_LT((map(make_point(0, 0, 0)) - c[0]).norm(), 1e-15);
}

TEST(TetraOneCurvedFace, FaceBarycenterOracle)
{
  for (int p = 1; p <= 6; ++p) {
    const auto face = curved_element(
        Family::Triangle, p, {make_point(1, 0, 0), make_point(0, 1, 0), make_point(0, 0, 1)}, 0.1);
    const TetraOneCurvedFace map(face, make_point(0, 0, 0));
    const auto& tri = reference_element(Family::Triangle, p);
    const Point expect = isoparametric_map(tri, face, make_point(1.0 / 3, 1.0 / 3));
    EXPECT_LT((map(make_point(1.0 / 3, 1.0 / 3, 1.0 / 3)) - expect).norm(), 1e-14) << p;
  }
}

TEST(PrismCurvedTriangle, BlendProperties)
{
  const std::array<Point, 3> top{make_point(0, 0, 1), make_point(1, 0, 1), make_point(0, 1, 1)};
  const auto bottom = curved_element(
      Family::Triangle, 3, {make_point(0, 0, -1), make_point(1, 0, -1), make_point(0, 1, -1)}, 0.1);
  const PrismCurvedTriangle map(bottom, top);
  const auto& tri = reference_element(Family::Triangle, 3);
  for (int s = 0; s < 10; ++s) {
    const double a = uniform(0, 1), b = uniform(0, 1 - a);
    const Point f = isoparametric_map(tri, bottom, make_point(a, b));
    const Point g = (1 - a - b) * top[0] + a * top[1] + b * top[2];
    EXPECT_LT((map(make_point(a, b, -1)) - f).norm(), 1e-14);
    EXPECT_LT((map(make_point(a, b, 1)) - g).norm(), 1e-14);
    EXPECT_LT((map(make_point(a, b, 0)) - 0.5 * (f + g)).norm(), 1e-14);
  }
}

TEST(PrismCurvedQuad, FlatFaceIsAffine)
{
  const auto& prism1 = reference_element(Family::Prism, 1);
  const auto corners = reference_corners(Family::Prism);
  const auto quad = curved_element(Family::Quadrilateral, 3,
                                   {corners[1], corners[2], corners[5], corners[4]}, 0.0);
  const PrismCurvedQuad map(quad, corners[0], corners[3]);
  for (int s = 0; s < 20; ++s) {
    const double a = uniform(0, 1), b = uniform(0, 1 - a), w = uniform(-1, 1);
    const Point r = make_point(a, b, w);
    EXPECT_LT((map(r) - isoparametric_map(prism1, corners, r)).norm(), 1e-14);
  }
}

TEST(PrismCurvedQuad, SliceReDerivation)
{
  // Independent construction: at each w, the slice triangle bounded by two
  // straight edges and the curved quad-face row, mapped by TriangleFromEdges.
  const int p = 3;
  const auto corners = reference_corners(Family::Prism);
  const auto quad = curved_element(Family::Quadrilateral, p,
                                   {corners[1], corners[2], corners[5], corners[4]}, 0.15);
  const PrismCurvedQuad map(quad, corners[0], corners[3]);
  const auto& qref = reference_element(Family::Quadrilateral, p);
  const auto& prism = reference_element(Family::Prism, p);
  for (const auto& r : prism.nodes()) {
    const double w = r[2];
    const Point p0 = 0.5 * (1 - w) * corners[0] + 0.5 * (1 + w) * corners[3];
    const Point p1 = isoparametric_map(qref, quad, make_point(-1, w));
    const Point p2 = isoparametric_map(qref, quad, make_point(1, w));
    std::vector<Point> e1{p1, p2};
    for (int j = 1; j < p; ++j)
      e1.push_back(isoparametric_map(qref, quad, make_point(-1 + 2.0 * j / p, w)));
    std::vector<Point> e0{p0, p1}, e2{p2, p0};
    for (int j = 1; j < p; ++j) {
      const double t = double(j) / p;
      e0.push_back((1 - t) * p0 + t * p1);
      e2.push_back((1 - t) * p2 + t * p0);
    }
    const TriangleFromEdges slice({e0, e1, e2});
    EXPECT_LT((map(r) - slice(make_point(r[0], r[1]))).norm(), 1e-13);
  }
}

// Boundary reproduction with randomized curved inputs.
TEST(TransfiniteProperty, BoundaryReproduction)
{
  const int trials = 40;
  for (int trial = 0; trial < trials; ++trial) {
    const int p = 1 + trial % 6;
    // Triangle.
    {
      const Point c0 = random_vec(1), c1 = random_vec(1), c2 = random_vec(1);
      const std::array<std::vector<Point>, 3> edges{
          curved_line(c0, c1, p, 0.3), curved_line(c1, c2, p, 0.3), curved_line(c2, c0, p, 0.3)};
      const TriangleFromEdges map(edges);
      for (int s = 0; s < 50; ++s) {
        const int k = s % 3;
        const double u = uniform(-1, 1), t = 0.5 * (u + 1);
        const Point a = k == 0 ? make_point(t, 0) : k == 1 ? make_point(1 - t, t) : make_point(0, 1 - t);
        ASSERT_LT((map(a) - eval_line(edges[k], u)).norm(), 1e-12);
      }
    }
    // Quad.
    {
      const Point c0 = random_vec(1), c1 = random_vec(1), c2 = random_vec(1), c3 = random_vec(1);
      const std::array<std::vector<Point>, 4> edges{
          curved_line(c0, c1, p, 0.3), curved_line(c1, c2, p, 0.3), curved_line(c2, c3, p, 0.3),
          curved_line(c3, c0, p, 0.3)};
      const QuadFromEdges map(edges);
      for (int s = 0; s < 50; ++s) {
        const int k = s % 4;
        const double u = uniform(-1, 1);
        const Point a = k == 0 ? make_point(u, -1)
                        : k == 1 ? make_point(1, u)
                        : k == 2 ? make_point(-u, 1)
                                 : make_point(-1, -u);
        ASSERT_LT((map(a) - eval_line(edges[k], u)).norm(), 1e-12);
      }
    }
  }
}

TEST(TransfiniteProperty, JacobianPositiveForMildCurvature)
{
  // One curved side (the sub-element situation) with a midpoint deviation of
  // at most 20% of its length.
  for (int trial = 0; trial < 60; ++trial) {
    const int p = 2 + trial % 5;
    const Point c0 = make_point(0, 0), c1 = make_point(1, 0), c2 = make_point(0.3, 0.9);
    const int curved = trial % 3;
    auto mild = [&](const Point& a, const Point& b, int k) {
      const Point n = make_point(-(b - a)[1], (b - a)[0]);
      const double amp = k == curved ? uniform(-0.2, 0.2) : 0.0;
      const auto& ref = reference_element(Family::Line, p);
      std::vector<Point> out;
      for (int i = 0; i < ref.node_count(); ++i) {
        const double u = ref.node(i)[0], t = 0.5 * (u + 1);
        out.push_back((1 - t) * a + t * b + amp * (1 - u * u) * n);
      }
      return out;
    };
    const TriangleFromEdges map({mild(c0, c1, 0), mild(c1, c2, 1), mild(c2, c0, 2)});
    const auto g = sample_grid(reference_element(Family::Triangle, p), 2 * p);
    for (const auto& r : g.points) {
      const Matrix3 J = map.jacobian(r);
      ASSERT_GT(J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0), 0.0);
    }
  }
}
