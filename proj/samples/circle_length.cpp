// Length of a reconstructed circle for increasing order and resolution.
//
//   sample_circle_length [max_order]

#include <cutmesh/cutmesh.hpp>

#include <cstdio>
#include <cstdlib>
#include <numbers>

using namespace cutmesh;

int main(int argc, char** argv)
{
  const int max_order = argc > 1 ? std::atoi(argv[1]) : 4;
  const double r = 0.7123, exact = 2 * std::numbers::pi * r;
  std::printf("%3s %5s %22s %12s %8s\n", "p", "n", "length", "rel. error", "refined");
  for (int p = 1; p <= max_order; ++p) {
    StudyConfig cfg;
    cfg.order = p;
    cfg.resolutions = {10, 20, 40, 80};
    cfg.level_set = AnalyticField::circle(r);
    const auto records = run_interface_study(cfg);
    for (const auto& rec : records)
      std::printf("%3d %5d %22.16f %12.3e %8ld\n", p, rec.n, rec.measure,
                  std::abs(rec.measure - exact) / exact, rec.refined_elements);
    try {
      std::printf("    fitted slope %.2f (optimal %d)\n\n", estimate_rate(records, "eps_1").slope,
                  p + 1);
    }
    catch (const InsufficientData&) {
      std::printf("    too few unrefined records for a fit\n\n");
    }
  }
  std::printf("exact length %.16f\n", exact);
}
