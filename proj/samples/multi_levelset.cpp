// Two overlapping circles: the four sign regions of a decomposition with two
// level-set functions, compared with the lens formula.
//
//   sample_multi_levelset [order] [n]

#include <cutmesh/cutmesh.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>

using namespace cutmesh;

namespace {

// Intersection area of two disks of radius r whose centers are d apart.
double lens_area(double r, double d)
{
  return 2 * r * r * std::acos(d / (2 * r)) - 0.5 * d * std::sqrt(4 * r * r - d * d);
}

}  // namespace

int main(int argc, char** argv)
{
  const int p = argc > 1 ? std::atoi(argv[1]) : 3;
  const int n = argc > 2 ? std::atoi(argv[2]) : 30;
  const double r = 0.5, d = 0.4;
  const std::vector<AnalyticField> fields{AnalyticField::circle(r, make_point(-d / 2, 0.013)),
                                          AnalyticField::circle(r, make_point(d / 2, 0.013))};
  const auto mesh = build_structured_mesh(2, n, p, make_point(-1, -1), make_point(1, 1));
  const auto result = decompose_multi(mesh, sample_to_mesh(fields, mesh));
  const auto measures = region_measures(mesh, result);

  const double disk = std::numbers::pi * r * r, lens = lens_area(r, d);
  // sign code bit k is set when function k is positive
  const double exact[4] = {lens, disk - lens, disk - lens, 4.0 - 2 * disk + lens};
  const char* names[4] = {"inside both", "inside 2 only", "inside 1 only", "outside both"};
  std::printf("p = %d, n = %d, refined elements %ld\n", p, n, result.refined_elements);
  for (int code = 0; code < 4; ++code) {
    const auto it = measures.find(code);
    const double m = it == measures.end() ? 0.0 : it->second;
    std::printf("  %-14s %.14f  exact %.14f  error %.2e\n", names[code], m, exact[code],
                std::abs(m - exact[code]));
  }
}
