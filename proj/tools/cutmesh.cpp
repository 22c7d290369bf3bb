// cutmesh: command-line front end.
//
//   cutmesh <reconstruct|decompose|convergence|export-mesh> [--config FILE] [overrides]
//
// Exit codes: 0 ok, 2 configuration error, 3 refinement exhausted, 4 I/O error.

#include <cutmesh/io.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace cutmesh;

namespace {

constexpr int exit_config = 2;
constexpr int exit_refinement = 3;
constexpr int exit_io = 4;

BackgroundMesh single_mesh(const RunConfig& cfg) { return study_mesh(cfg.study, cfg.n); }

LevelSetField sample(const RunConfig& cfg, const BackgroundMesh& mesh)
{
  return sample_to_mesh(cfg.level_sets, mesh, cfg.study.perturbation);
}

DecompositionResult decompose(const RunConfig& cfg, const BackgroundMesh& mesh)
{
  DecompositionOptions opts;
  opts.reconstruction.variant = cfg.study.variant;
  opts.reconstruction.depth_limit = cfg.study.depth_limit;
  return decompose_multi(mesh, sample(cfg, mesh), opts);
}

int run_convergence(const RunConfig& cfg)
{
  const auto records = run_study(cfg.study);
  const auto csv = convergence_csv(records);
  if (cfg.out.empty())
    std::cout << csv;
  else
    write_text(cfg.out, csv);
  for (const auto& [name, v] : records.front().errors) {
    try {
      const auto rate = estimate_rate(records, name);
      std::fprintf(stderr, "%-8s slope %.3f over %zu records\n", name.c_str(), rate.slope,
                   rate.window.size());
    }
    catch (const InsufficientData&) {
      std::fprintf(stderr, "%-8s slope n/a (fewer than 3 usable records)\n", name.c_str());
    }
  }
  return 0;
}

int run_reconstruct(const RunConfig& cfg)
{
  const auto mesh = single_mesh(cfg);
  ReconstructionOptions opts;
  opts.variant = cfg.study.variant;
  opts.depth_limit = cfg.study.depth_limit;
  const auto rec = reconstruct_mesh(mesh, sample(cfg, mesh), opts);
  double residual = 0.0;
  std::size_t count = 0;
  for (const auto& e : rec.elements) {
    residual = std::max(residual, e.max_residual);
    count += e.interfaces.size();
  }
  std::printf("cut elements %zu, interface elements %zu, refined %ld, max |phi^h| %.3g\n",
              rec.elements.size(), count, rec.refined_elements, residual);
  if (!cfg.out.empty())
    write_text(cfg.out, vtk_text(build_export_mesh(rec, mesh, cfg.export_density)));
  return 0;
}

int run_decompose(const RunConfig& cfg)
{
  const auto mesh = single_mesh(cfg);
  const auto res = decompose(cfg, mesh);
  nlohmann::json j;
  j["elements"] = mesh.element_count();
  j["refined_elements"] = res.refined_elements;
  long cut = 0;
  for (const auto& e : res.elements)
    cut += e.cut;
  j["cut_elements"] = cut;
  nlohmann::json regions = nlohmann::json::object();
  for (const auto& [code, m] : region_measures(mesh, res, cfg.study.quadrature_order))
    regions[std::to_string(code)] = m;
  j["region_measures"] = regions;
  const auto text = j.dump(2) + "\n";
  if (cfg.out.empty())
    std::cout << text;
  else
    write_text(cfg.out, text);
  return 0;
}

int run_export(const RunConfig& cfg)
{
  const auto mesh = single_mesh(cfg);
  const auto res = decompose(cfg, mesh);
  export_visualization(res, mesh, cfg.out.empty() ? "cutmesh.vtk" : cfg.out, cfg.export_density);
  return 0;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"High-order meshing of level-set cut elements"};
  std::string subcommand, config;
  ConfigOverrides ov;
  app.add_option("subcommand", subcommand, "reconstruct | decompose | convergence | export-mesh")
      ->required();
  app.add_option("--config", config, "JSON configuration file");
  app.add_option("--order", ov.order, "element order p");
  app.add_option("--n", ov.n, "elements per dimension");
  app.add_option("--variant", ov.variant, "search variant code, e.g. 13, 24b, A13");
  app.add_option("--levelset", ov.levelset, "circle | flower | sphere | bumpy");
  app.add_option("--out", ov.out, "output path");
  app.add_option("--export-density", ov.export_density, "lattice subdivisions per element");
  app.add_option("--depth-limit", ov.depth_limit, "recursive refinement depth limit");
  app.add_option("--quad-order", ov.quad_order, "quadrature order");

  try {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_config;
  }

  try {
    ov.subcommand = subcommand;
    const auto cfg = parse_config(config, ov);
    switch (cfg.subcommand) {
      case Subcommand::Convergence: return run_convergence(cfg);
      case Subcommand::Reconstruct: return run_reconstruct(cfg);
      case Subcommand::Decompose: return run_decompose(cfg);
      case Subcommand::ExportMesh: return run_export(cfg);
    }
  }
  catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return exit_config;
  }
  catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return exit_config;
  }
  catch (const RefinementExhausted& e) {
    std::fprintf(stderr, "refinement exhausted: %s\n", e.what());
    return exit_refinement;
  }
  catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return exit_io;
  }
  catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
