#include <cutmesh/reference_element.hpp>

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace cutmesh;

namespace {

const Family kFamilies[] = {Family::Line, Family::Triangle, Family::Quadrilateral,
                            Family::Tetrahedron, Family::Prism};

Point random_point(Family f, std::mt19937& gen)
{
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    Point r = make_point(u(gen), u(gen), u(gen));
    switch (f) {
      case Family::Line: return make_point(2 * r[0] - 1);
      case Family::Quadrilateral: return make_point(2 * r[0] - 1, 2 * r[1] - 1);
      case Family::Triangle:
        if (r[0] + r[1] <= 1)
          return make_point(r[0], r[1]);
        break;
      case Family::Tetrahedron:
        if (r[0] + r[1] + r[2] <= 1)
          return r;
        break;
      case Family::Prism:
        if (r[0] + r[1] <= 1)
          return make_point(r[0], r[1], 2 * r[2] - 1);
        break;
    }
  }
}

}  // namespace

TEST(ReferenceElement, NodeCounts)
{
  for (int p = 1; p <= 6; ++p) {
    EXPECT_EQ(ReferenceElement(Family::Line, p).node_count(), p + 1);
    EXPECT_EQ(ReferenceElement(Family::Triangle, p).node_count(), (p + 1) * (p + 2) / 2);
    EXPECT_EQ(ReferenceElement(Family::Quadrilateral, p).node_count(), (p + 1) * (p + 1));
    EXPECT_EQ(ReferenceElement(Family::Tetrahedron, p).node_count(),
              (p + 1) * (p + 2) * (p + 3) / 6);
    EXPECT_EQ(ReferenceElement(Family::Prism, p).node_count(), (p + 1) * (p + 1) * (p + 2) / 2);
  }
}

TEST(ReferenceElement, CornersFirstAndInsideDomain)
{
  for (Family f : kFamilies)
    for (int p = 1; p <= 6; ++p) {
      const auto& e = reference_element(f, p);
      const auto corners = reference_corners(f);
      for (std::size_t k = 0; k < corners.size(); ++k)
        EXPECT_LT((e.node(static_cast<int>(k)) - corners[k]).norm(), 1e-15);
      for (const auto& x : e.nodes())
        EXPECT_TRUE(contains(f, x));
    }
}

TEST(ReferenceElement, TriangleLinearAtOrigin)
{
  const auto v = reference_element(Family::Triangle, 1).shape_values(make_point(0, 0));
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  EXPECT_DOUBLE_EQ(v[1], 0.0);
  EXPECT_DOUBLE_EQ(v[2], 0.0);
}

TEST(ReferenceElement, LineQuadraticMidpoint)
{
  const auto& e = reference_element(Family::Line, 2);
  const auto v = e.shape_values(make_point(0));
  EXPECT_NEAR(v[0], 0.0, 1e-15);
  EXPECT_NEAR(v[1], 0.0, 1e-15);
  EXPECT_NEAR(v[2], 1.0, 1e-15);
}

TEST(ReferenceElement, TriangleLinearGradients)
{
  const auto g = reference_element(Family::Triangle, 1).shape_gradients(make_point(0.2, 0.3));
  EXPECT_NEAR(g[0][0], -1, 1e-15);
  EXPECT_NEAR(g[0][1], -1, 1e-15);
  EXPECT_NEAR(g[1][0], 1, 1e-15);
  EXPECT_NEAR(g[1][1], 0, 1e-15);
  EXPECT_NEAR(g[2][0], 0, 1e-15);
  EXPECT_NEAR(g[2][1], 1, 1e-15);
}

TEST(ReferenceElement, PartitionOfUnityAndGradientSums)
{
  std::mt19937 gen(7);
  for (Family f : kFamilies)
    for (int p = 1; p <= 6; ++p) {
      const auto& e = reference_element(f, p);
      for (int s = 0; s < 1000; ++s) {
        const Point r = random_point(f, gen);
        const auto v = e.shape_values(r);
        double sum = 0;
        for (double x : v)
          sum += x;
        ASSERT_NEAR(sum, 1.0, 1e-12) << to_string(f) << " p=" << p;
        if (s % 10 == 0) {
          Point gs = Point::Zero();
          for (const auto& g : e.shape_gradients(r))
            gs += g;
          ASSERT_LT(gs.norm(), 1e-11) << to_string(f) << " p=" << p;
        }
      }
    }
}

TEST(ReferenceElement, DeltaProperty)
{
  for (Family f : kFamilies)
    for (int p = 1; p <= 6; ++p) {
      const auto& e = reference_element(f, p);
      for (int j = 0; j < e.node_count(); ++j) {
        const auto v = e.shape_values(e.node(j));
        for (int i = 0; i < e.node_count(); ++i)
          ASSERT_NEAR(v[i], i == j ? 1.0 : 0.0, 1e-12) << to_string(f) << " p=" << p;
      }
    }
}

TEST(ReferenceElement, GradientsMatchFiniteDifferences)
{
  std::mt19937 gen(11);
  const double step = 1e-6;
  for (Family f : kFamilies)
    for (int p = 1; p <= 6; ++p) {
      const auto& e = reference_element(f, p);
      for (int s = 0; s < 20; ++s) {
        const Point r = random_point(f, gen);
        const auto g = e.shape_gradients(r);
        for (int d = 0; d < e.dim(); ++d) {
          Point a = r, b = r;
          a[d] += step;
          b[d] -= step;
          const auto va = e.shape_values(a), vb = e.shape_values(b);
          for (int i = 0; i < e.node_count(); ++i) {
            const double fd = (va[i] - vb[i]) / (2 * step);
            ASSERT_NEAR(g[i][d], fd, 1e-6 * std::max(1.0, std::abs(fd)));
          }
        }
      }
    }
}

TEST(ReferenceElement, EntityNodesFollowSubElementOrder)
{
  const auto& tet = reference_element(Family::Tetrahedron, 4);
  const auto& tri = reference_element(Family::Triangle, 4);
  const std::vector<int> face{1, 2, 3};
  const auto& ids = tet.entity_nodes(Family::Triangle, face);
  ASSERT_EQ(static_cast<int>(ids.size()), tri.node_count());
  const auto corners = reference_corners(Family::Tetrahedron);
  for (int i = 0; i < tri.node_count(); ++i) {
    const Point s = tri.node(i);
    const Point expect = (1 - s[0] - s[1]) * corners[1] + s[0] * corners[2] + s[1] * corners[3];
    EXPECT_LT((tet.node(ids[i]) - expect).norm(), 1e-14);
  }
  const auto path = tet.edge_path(3);
  ASSERT_EQ(path.size(), 5u);
  for (int j = 0; j <= 4; ++j)
    EXPECT_LT((tet.node(path[j]) - make_point(0, 0, j / 4.0)).norm(), 1e-14);
}

TEST(ReferenceElement, PrismLateralFace)
{
  const auto& prism = reference_element(Family::Prism, 3);
  const auto& quad = reference_element(Family::Quadrilateral, 3);
  const std::vector<int> face{1, 2, 5, 4};
  const auto& ids = prism.entity_nodes(Family::Quadrilateral, face);
  for (int i = 0; i < quad.node_count(); ++i) {
    const Point s = quad.node(i);
    const double t = 0.5 * (s[0] + 1);
    const Point expect = make_point(1 - t, t, s[1]);
    EXPECT_LT((prism.node(ids[i]) - expect).norm(), 1e-14);
  }
}

TEST(SampleGrid, Counts)
{
  EXPECT_EQ(sample_grid(reference_element(Family::Triangle, 2), 4).points.size(), 15u);
  const auto line = sample_grid(reference_element(Family::Line, 1), 2);
  ASSERT_EQ(line.points.size(), 3u);
  EXPECT_NEAR(line.points[line.edge_points[0][0]][0], -1, 1e-15);
  EXPECT_NEAR(line.points[line.edge_points[0][1]][0], 0, 1e-15);
  EXPECT_NEAR(line.points[line.edge_points[0][2]][0], 1, 1e-15);

  const auto tet = sample_grid(reference_element(Family::Tetrahedron, 1), 3);
  EXPECT_EQ(tet.points.size(), 20u);
  ASSERT_EQ(tet.face_points.size(), 4u);
  for (const auto& f : tet.face_points)
    EXPECT_EQ(f.size(), 10u);
  for (const auto& e : tet.edge_points)
    EXPECT_EQ(e.size(), 4u);
}

TEST(SampleGrid, LatticeEnumerationOracle)
{
  // Independent count: lattice points (i,j,k) with i+j+k <= d, plus on-face
  // counts by direct predicate.
  for (int d = 2; d <= 6; ++d) {
    const auto g = sample_grid(reference_element(Family::Tetrahedron, 1), d);
    int total = 0, on_face0 = 0;
    for (int i = 0; i <= d; ++i)
      for (int j = 0; i + j <= d; ++j)
        for (int k = 0; i + j + k <= d; ++k) {
          ++total;
          on_face0 += (i + j + k == d);
        }
    EXPECT_EQ(static_cast<int>(g.points.size()), total);
    EXPECT_EQ(static_cast<int>(g.face_points[0].size()), on_face0);
  }
}

TEST(SampleGrid, IncludesElementNodes)
{
  const auto& e = reference_element(Family::Triangle, 3);
  const auto g = sample_grid(e, 4);
  for (const auto& x : e.nodes()) {
    bool found = false;
    for (const auto& y : g.points)
      found = found || (x - y).norm() < 1e-14;
    EXPECT_TRUE(found);
  }
  EXPECT_THROW(sample_grid(e, 3), std::invalid_argument);
}

TEST(Isoparametric, IdentityAndAffine)
{
  std::mt19937 gen(3);
  for (Family f : kFamilies)
    for (int p = 1; p <= 6; ++p) {
      const auto& e = reference_element(f, p);
      for (int s = 0; s < 20; ++s) {
        const Point r = random_point(f, gen);
        EXPECT_LT((isoparametric_map(e, e.nodes(), r) - r).norm(), 1e-14);
        EXPECT_NEAR(jacobian_determinant(e, e.nodes(), r), 1.0, 1e-12);
      }
    }
  const auto& tri = reference_element(Family::Triangle, 1);
  std::vector<Point> scaled;
  for (const auto& x : tri.nodes())
    scaled.push_back(3.0 * x + make_point(1, 2));
  EXPECT_NEAR(jacobian_determinant(tri, scaled, make_point(0.1, 0.2)), 9.0, 1e-13);
  EXPECT_LT((isoparametric_map(tri, scaled, make_point(0.5, 0.25)) - make_point(2.5, 2.75)).norm(),
            1e-14);
  EXPECT_THROW(isoparametric_map(tri, std::vector<Point>(2), make_point(0, 0)),
               std::invalid_argument);
}

TEST(Isoparametric, CurvedLineMidpointAndArcLength)
{
  const auto& line = reference_element(Family::Line, 2);
  const std::vector<Point> nodes{make_point(0, 0), make_point(2, 0), make_point(1, 0.3)};
  EXPECT_LT((isoparametric_map(line, nodes, make_point(0)) - make_point(1, 0.3)).norm(), 1e-15);

  // 30 degree arc of radius 1, quadratic element through the arc midpoint.
  const double half = std::numbers::pi / 12;
  const std::vector<Point> arc{make_point(std::cos(-half), std::sin(-half)),
                               make_point(std::cos(half), std::sin(half)), make_point(1, 0)};
  double length = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const double u = -1 + (2.0 * i + 1) / n;
    length += jacobian_determinant(line, arc, make_point(u), 2) * 2.0 / n;
  }
  EXPECT_NEAR(length, 2 * half, 1e-3);
}

TEST(Domain, Membership)
{
  EXPECT_TRUE(contains(Family::Triangle, make_point(0.5, 0.5)));
  EXPECT_TRUE(contains(Family::Triangle, make_point(0.5, 0.5 + 5e-13)));
  EXPECT_FALSE(contains(Family::Triangle, make_point(0.5, 0.5 + 1e-11)));
  EXPECT_FALSE(contains(Family::Prism, make_point(0.2, 0.2, 1.1)));
}
