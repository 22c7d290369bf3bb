#include <cutmesh/io.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace cutmesh;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
  const auto dir = fs::temp_directory_path() / "cutmesh_test_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text)
{
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);)
    out.push_back(l);
  return out;
}

ErrorRecord record(int n, bool flagged)
{
  ErrorRecord r;
  r.n = n;
  r.h = 2.0 / n;
  r.n_elements = 2L * n * n;
  r.errors = {{"eps_1", 1.0 / (3.0 * n)}, {"eps_phi", -0.1 / n}};
  r.refined_elements = flagged ? 2 : 0;
  return r;
}

std::string expect_config_error(const nlohmann::json& j, const ConfigOverrides& ov = {})
{
  try {
    parse_config_json(j, ov);
  }
  catch (const ConfigError& e) {
    return e.key();
  }
  ADD_FAILURE() << "no ConfigError for " << j.dump();
  return {};
}

}  // namespace

TEST(Config, EmptyGivesDefaults)
{
  const auto cfg = parse_config("");
  EXPECT_EQ(cfg.subcommand, Subcommand::Convergence);
  EXPECT_EQ(cfg.study.variant, SearchVariant::parse("13"));
  EXPECT_EQ(cfg.study.quadrature_order, 11);
  EXPECT_EQ(cfg.study.depth_limit, 5);
  EXPECT_EQ(cfg.study.dimension, 2);
  EXPECT_EQ(cfg.level_sets.front().kind, FieldKind::Circle2D);
}

TEST(Config, VariantCodes)
{
  const auto cfg = parse_config_json({{"variant", "24b"}});
  EXPECT_EQ(cfg.study.variant.reconstruction, Reconstruction2D::Hermite);
  EXPECT_EQ(cfg.study.variant.direction, Direction2D::Gradient);
  EXPECT_EQ(cfg.study.variant.gradient_mode, GradientMode::Live);
  EXPECT_EQ(expect_config_error({{"variant", "99"}}), "variant");
  EXPECT_EQ(expect_config_error({{"variant", "A13"}}), "variant");  // inner letter needs 3D
  const auto sphere = parse_config_json({{"level_sets", {"sphere"}}, {"variant", "C13"}});
  EXPECT_EQ(sphere.study.dimension, 3);
  EXPECT_EQ(sphere.study.variant.inner, Inner3D::C_GradLive);
}

TEST(Config, ErrorsCarryKeyPath)
{
  EXPECT_EQ(expect_config_error({{"orderr", 2}}), "orderr");
  EXPECT_EQ(expect_config_error({{"level_sets", {{{"type", "circle"}, {"radius", 1}}}}}),
            "level_sets[0].radius");
  EXPECT_EQ(expect_config_error({{"level_sets", {"circle", "blob"}}}), "level_sets[1]");
  EXPECT_EQ(expect_config_error({{"order", "two"}}), "order");
  EXPECT_EQ(expect_config_error({{"order", 0}}), "order");
  EXPECT_EQ(expect_config_error({{"resolutions", {10, 6}}}), "resolutions");
  EXPECT_EQ(expect_config_error({{"box", {{"lo", {0, 0}}, {"top", {1, 1}}}}}), "box.top");
  EXPECT_EQ(expect_config_error({{"level_sets", {"circle", "sphere"}}}), "level_sets[1]");
  EXPECT_EQ(expect_config_error({{"norms", {"eps_f3h"}}}), "norms");
  EXPECT_EQ(expect_config_error({{"subcommand", "mesh"}}), "subcommand");
  EXPECT_THROW(parse_config("/nonexistent/cutmesh.json"), ConfigError);
}

TEST(Config, FlagsOverrideFile)
{
  const auto path = scratch("override.json");
  write_text(path.string(), R"({"order": 2, "n": 12, "variant": "14a", "out": "a.csv"})");
  ConfigOverrides ov;
  ov.order = 4;
  ov.levelset = "flower";
  ov.out = "b.csv";
  const auto cfg = parse_config(path.string(), ov);
  EXPECT_EQ(cfg.study.order, 4);
  EXPECT_EQ(cfg.n, 12);
  EXPECT_EQ(cfg.study.variant, SearchVariant::parse("14a"));
  EXPECT_EQ(cfg.out, "b.csv");
  EXPECT_EQ(cfg.study.level_set.kind, FieldKind::Flower2D);
  ov.variant = "12";
  EXPECT_EQ(parse_config(path.string(), ov).study.variant, SearchVariant::parse("12"));
}

TEST(Config, RoundTrip)
{
  const auto defaults = parse_config("");
  const auto again = parse_config_json(config_to_json(defaults));
  EXPECT_EQ(config_to_json(again), config_to_json(defaults));

  const nlohmann::json custom{{"subcommand", "export-mesh"},
                              {"study", "volume"},
                              {"order", 3},
                              {"resolutions", {6, 10}},
                              {"level_sets", {{{"type", "sphere"}, {"r", 0.5}, {"cz", 0.1}}, "bumpy"}},
                              {"variant", "B24a"},
                              {"box", {{"lo", {-1, -1, -1}}, {"hi", {1, 1, 1.5}}}},
                              {"export_density", 3},
                              {"seed", 7}};
  const auto a = parse_config_json(custom);
  const auto b = parse_config_json(config_to_json(a));
  EXPECT_EQ(config_to_json(a), config_to_json(b));
  EXPECT_EQ(b.study.variant, SearchVariant::parse("B24a"));
  EXPECT_EQ(b.level_sets.size(), 2u);
  EXPECT_DOUBLE_EQ(b.level_sets[0].param("cz", 0), 0.1);
  EXPECT_DOUBLE_EQ((*b.study.box_hi)[2], 1.5);
}

TEST(Csv, LayoutAndFlags)
{
  const auto text = convergence_csv({record(20, false), record(6, true), record(10, false)});
  const auto ls = lines(text);
  ASSERT_EQ(ls.size(), 4u);
  EXPECT_EQ(ls[0], "h,n_elements,eps_1,eps_phi,refined,flagged");
  EXPECT_EQ(ls[1].substr(0, ls[1].find(',')), format_double(2.0 / 6));
  EXPECT_EQ(ls[1].substr(ls[1].size() - 4), ",2,1");
  EXPECT_EQ(ls[2].substr(ls[2].size() - 4), ",0,0");
  // 17 significant digits round-trip exactly
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_NE(ls[2].find(format_double(1.0 / 30.0)), std::string::npos);
}

TEST(Csv, StudyOutputIsDeterministic)
{
  StudyConfig cfg;
  cfg.order = 2;
  cfg.resolutions = {6, 10, 20};
  const auto a = scratch("a.csv"), b = scratch("b.csv");
  write_convergence_csv(run_study(cfg), a.string());
  write_convergence_csv(run_study(cfg), b.string());
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(lines(slurp(a))[0], "h,n_elements,eps_1,eps_phi,eps_f,eps_f1h,eps_f2h,refined,flagged");
  EXPECT_THROW(write_convergence_csv({}, "/nonexistent/dir/x.csv"), IoError);
}

TEST(Export, LatticesTileReferenceElements)
{
  for (Family fam : {Family::Line, Family::Triangle, Family::Quadrilateral, Family::Tetrahedron,
                     Family::Prism}) {
    for (int d : {1, 2, 3}) {
      const auto L = detail::make_lattice(fam, d);
      double total = 0.0;
      for (const auto& piece : L.pieces) {
        const Point& a = L.points[piece[0]];
        if (piece.size() == 2)
          total += (L.points[piece[1]] - a).norm();
        else if (piece.size() == 3)
          total += 0.5 * std::abs(orient2d(a, L.points[piece[1]], L.points[piece[2]]));
        else
          total += std::abs(orient3d(a, L.points[piece[1]], L.points[piece[2]], L.points[piece[3]])) / 6;
      }
      EXPECT_NEAR(total, reference_measure(fam), 1e-14) << to_string(fam) << " d=" << d;
      const std::size_t expected = fam == Family::Quadrilateral ? 2 * d * d
                                   : fam == Family::Prism       ? 3 * d * d * d
                                   : fam == Family::Line        ? d
                                                                : static_cast<std::size_t>(std::pow(d, dimension(fam)));
      EXPECT_EQ(L.pieces.size(), expected) << to_string(fam);
    }
  }
}

TEST(Export, UncutAndCutElementCellCounts)
{
  const auto mesh = build_structured_mesh(2, 1, 2, make_point(0, 0), make_point(1, 1));
  const auto far = AnalyticField::circle(0.1, make_point(5, 5));
  DecompositionResult uncut = decompose_multi(mesh, sample_to_mesh(far, mesh));
  const auto m1 = build_export_mesh(uncut, mesh, 1);
  EXPECT_EQ(m1.cells.size(), 2u);

  // a straight cut through one triangle: one triangle piece, one quad piece
  const auto cut_line = AnalyticField::plane(make_point(1, 0), 0.3);
  const auto one = build_structured_mesh(2, 1, 1, make_point(0, 0), make_point(1, 1));
  const auto res = decompose_multi(one, sample_to_mesh(cut_line, one));
  std::size_t tri_subs = 0, quad_subs = 0, ifaces = 0;
  for (const auto& ed : res.elements) {
    ifaces += ed.interfaces.size();
    for (const auto& s : ed.subs)
      (s.family == Family::Triangle ? tri_subs : quad_subs) += 1;
  }
  const auto m2 = build_export_mesh(res, one, 2);
  EXPECT_EQ(m2.cells.size(), 4 * tri_subs + 8 * quad_subs + 2 * ifaces);
}

TEST(Export, CirclePolylineLength)
{
  const auto mesh = build_structured_mesh(2, 30, 3, make_point(-1, -1), make_point(1, 1));
  const auto res = decompose_multi(mesh, sample_to_mesh(AnalyticField::circle(), mesh));
  const auto path = scratch("circle.vtk");
  export_visualization(res, mesh, path.string(), 4);
  const auto m = build_export_mesh(res, mesh, 4);
  double length = 0.0;
  for (std::size_t c = 0; c < m.cells.size(); ++c)
    if (m.cell_types[c] == 3)
      length += (m.points[m.cells[c][1]] - m.points[m.cells[c][0]]).norm();
  EXPECT_NEAR(length, 2 * std::numbers::pi * 0.7123, 1e-3);
  const auto text = slurp(path);
  EXPECT_EQ(text.rfind("# vtk DataFile Version 3.0", 0), 0u);
  EXPECT_NE(text.find("CELL_TYPES " + std::to_string(m.cells.size())), std::string::npos);
  export_visualization(res, mesh, scratch("circle2.vtk").string(), 4);
  EXPECT_EQ(text, slurp(scratch("circle2.vtk")));
}

#ifdef CUTMESH_CLI_PATH
namespace {

int run_cli(const std::string& args)
{
  const std::string cmd = std::string(CUTMESH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes)
{
  const auto csv = scratch("cli.csv");
  fs::remove(csv);
  EXPECT_EQ(run_cli("convergence --order 2 --out " + csv.string()), 0);
  EXPECT_TRUE(fs::exists(csv));
  EXPECT_EQ(run_cli("convergence --variant 99"), 2);
  EXPECT_EQ(run_cli("transmogrify"), 2);
  EXPECT_EQ(run_cli("decompose --config /nonexistent.json"), 2);
  EXPECT_EQ(run_cli("export-mesh --n 6 --out /nonexistent/dir/x.vtk"), 4);
  EXPECT_EQ(run_cli("reconstruct --levelset flower --order 3 --n 6 --depth-limit 1"), 3);
  EXPECT_EQ(run_cli("reconstruct --levelset flower --order 3 --n 6"), 0);
}

TEST(Cli, ConfigFileAndDecomposeSummary)
{
  const auto cfg = scratch("run.json");
  const auto out = scratch("summary.json");
  write_text(cfg.string(), R"({"subcommand": "decompose", "order": 2, "n": 8,
    "level_sets": [{"type": "plane", "nx": 1, "ny": 0, "d": 0.3}]})");
  EXPECT_EQ(run_cli("decompose --config " + cfg.string() + " --out " + out.string()), 0);
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_NEAR(j["region_measures"]["0"].get<double>(), 2.0 * 1.3, 1e-12);
  EXPECT_NEAR(j["region_measures"]["1"].get<double>(), 2.0 * 0.7, 1e-12);
}
#endif
