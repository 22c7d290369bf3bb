#pragma once

#include "core.hpp"
#include "reference_element.hpp"

#include <array>
#include <vector>

namespace cutmesh {

/// Simplicial Lagrange mesh. Element connectivity follows the node order of
/// the matching ReferenceElement.
struct BackgroundMesh {
  int dim = 2;
  int order = 1;
  std::vector<Point> nodes;
  std::vector<std::vector<int>> elements;
  std::vector<bool> is_corner;  // per node
  double h = 0.0;
  Point box_lo = Point::Zero();
  Point box_hi = Point::Zero();
  long id = 0;  // tag matched by LevelSetField

  Family family() const { return dim == 2 ? Family::Triangle : Family::Tetrahedron; }
  const ReferenceElement& reference() const { return reference_element(family(), order); }
  std::size_t element_count() const { return elements.size(); }

  std::vector<Point> element_nodes(std::size_t e) const
  {
    std::vector<Point> out;
    out.reserve(elements[e].size());
    for (int i : elements[e])
      out.push_back(nodes[i]);
    return out;
  }
};

/// Box [lo, hi]^dim (lo/hi per axis) split into n cells per axis; squares into
/// two triangles along the (0,0)-(1,1) diagonal, cubes into the six Kuhn
/// tetrahedra along the main diagonal. All elements are positively oriented
/// and straight-sided.
inline BackgroundMesh build_structured_mesh(int dim, int n, int order, const Point& lo,
                                            const Point& hi)
{
  if (dim != 2 && dim != 3)
    throw std::invalid_argument("build_structured_mesh: dimension must be 2 or 3");
  if (n < 1)
    throw std::invalid_argument("build_structured_mesh: n must be >= 1");
  BackgroundMesh mesh;
  mesh.dim = dim;
  mesh.order = order;
  mesh.box_lo = lo;
  mesh.box_hi = hi;
  mesh.h = (hi[0] - lo[0]) / n;
  static long next_id = 1;
  mesh.id = next_id++;

  const auto& ref = reference_element(mesh.family(), order);
  const long m = static_cast<long>(n) * order + 1;  // fine lattice points per axis
  const long total = dim == 2 ? m * m : m * m * m;
  std::vector<int> compact(total, -1);

  // Multi-indices of the reference nodes (alpha_1.. alpha_d; alpha_0 implied).
  std::vector<std::array<int, 3>> alpha;
  for (const auto& r : ref.nodes())
    alpha.push_back({static_cast<int>(std::lround(r[0] * order)),
                     static_cast<int>(std::lround(r[1] * order)),
                     static_cast<int>(std::lround(r[2] * order))});

  // Corners are given in cell units; node keys are in fine-lattice units.
  auto add_simplex = [&](const std::vector<std::array<long, 3>>& corners) {
    std::vector<int> conn;
    conn.reserve(ref.node_count());
    for (const auto& a : alpha) {
      std::array<long, 3> key{};
      const int a0 = order - a[0] - a[1] - (dim == 3 ? a[2] : 0);
      for (int d = 0; d < 3; ++d) {
        key[d] = a0 * corners[0][d] + a[0] * corners[1][d] + a[1] * corners[2][d];
        if (dim == 3)
          key[d] += a[2] * corners[3][d];
      }
      const long flat = key[0] + m * (key[1] + (dim == 3 ? m * key[2] : 0));
      if (compact[flat] < 0) {
        compact[flat] = static_cast<int>(mesh.nodes.size());
        Point x = Point::Zero();
        for (int d = 0; d < dim; ++d)
          x[d] = lo[d] + (hi[d] - lo[d]) * static_cast<double>(key[d]) / (m - 1);
        mesh.nodes.push_back(x);
        const bool corner = key[0] % order == 0 && key[1] % order == 0 &&
                            (dim == 2 || key[2] % order == 0);
        mesh.is_corner.push_back(corner);
      }
      conn.push_back(compact[flat]);
    }
    mesh.elements.push_back(std::move(conn));
  };

  if (dim == 2) {
    for (long j = 0; j < n; ++j)
      for (long i = 0; i < n; ++i) {
        const std::array<long, 3> v00{i, j, 0}, v10{i + 1, j, 0}, v11{i + 1, j + 1, 0},
            v01{i, j + 1, 0};
        add_simplex({v00, v10, v11});
        add_simplex({v00, v11, v01});
      }
  }
  else {
    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                    {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    static const bool odd[6] = {false, true, true, false, false, true};
    for (long k = 0; k < n; ++k)
      for (long j = 0; j < n; ++j)
        for (long i = 0; i < n; ++i)
          for (int t = 0; t < 6; ++t) {
            std::vector<std::array<long, 3>> c(4);
            c[0] = {i, j, k};
            for (int s = 0; s < 3; ++s) {
              c[s + 1] = c[s];
              c[s + 1][perms[t][s]] += 1;
            }
            if (odd[t])
              std::swap(c[2], c[3]);
            add_simplex(c);
          }
  }
  return mesh;
}

inline BackgroundMesh build_structured_mesh(int dim, int n, int order)
{
  return build_structured_mesh(dim, n, order, make_point(-1, -1, -1), make_point(1, 1, 1));
}

}  // namespace cutmesh
