#pragma once

// Run configuration (JSON), convergence CSV output and legacy-VTK export of
// decompositions.

#include "convergence.hpp"
#include "decomposition.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace cutmesh {

enum class Subcommand { Reconstruct, Decompose, Convergence, ExportMesh };

inline std::string to_string(Subcommand s)
{
  switch (s) {
    case Subcommand::Reconstruct: return "reconstruct";
    case Subcommand::Decompose: return "decompose";
    case Subcommand::Convergence: return "convergence";
    case Subcommand::ExportMesh: return "export-mesh";
  }
  return "?";
}

inline Subcommand parse_subcommand(const std::string& s)
{
  if (s == "reconstruct")
    return Subcommand::Reconstruct;
  if (s == "decompose")
    return Subcommand::Decompose;
  if (s == "convergence")
    return Subcommand::Convergence;
  if (s == "export-mesh")
    return Subcommand::ExportMesh;
  throw ConfigError("subcommand", "unknown subcommand '" + s + "'");
}

/// Everything a CLI run needs. `study` carries the discretization settings;
/// `level_sets` holds one or more fields (the study uses the first).
struct RunConfig {
  Subcommand subcommand = Subcommand::Convergence;
  StudyConfig study{};
  std::vector<AnalyticField> level_sets{AnalyticField::circle()};
  int n = 10;  // single resolution for reconstruct / decompose / export-mesh
  std::string out;
  int export_density = 4;
  unsigned seed = 0;  // oracles are deterministic; kept for reproducible configs
};

/// Command-line values that take precedence over the file.
struct ConfigOverrides {
  std::optional<std::string> subcommand;
  std::optional<int> order, n, export_density, depth_limit, quad_order;
  std::optional<std::string> variant, levelset, out;
};

namespace detail {

inline AnalyticField named_field(const std::string& name, const std::string& key)
{
  if (name == "circle")
    return AnalyticField::circle();
  if (name == "flower")
    return AnalyticField::flower();
  if (name == "sphere")
    return AnalyticField::sphere();
  if (name == "bumpy")
    return AnalyticField::bumpy();
  throw ConfigError(key, "unknown level set '" + name + "'");
}

inline int field_dimension(const AnalyticField& f)
{
  return f.kind == FieldKind::Sphere3D || f.kind == FieldKind::Bumpy3D ? 3 : 2;
}

inline const std::set<std::string>& field_params(FieldKind k)
{
  static const std::set<std::string> circle{"r", "cx", "cy"}, sphere{"r", "cx", "cy", "cz"},
      flower{"r0", "amp", "lobes"}, bumpy{"r"}, plane{"nx", "ny", "nz", "d"};
  switch (k) {
    case FieldKind::Circle2D: return circle;
    case FieldKind::Sphere3D: return sphere;
    case FieldKind::Flower2D: return flower;
    case FieldKind::Bumpy3D: return bumpy;
    default: return plane;
  }
}

inline std::string kind_name(FieldKind k)
{
  switch (k) {
    case FieldKind::Circle2D: return "circle";
    case FieldKind::Flower2D: return "flower";
    case FieldKind::Sphere3D: return "sphere";
    case FieldKind::Bumpy3D: return "bumpy";
    case FieldKind::Plane: return "plane";
    case FieldKind::Custom: return "custom";
  }
  return "?";
}

template <class T>
T get(const nlohmann::json& j, const std::string& key)
{
  try {
    return j.get<T>();
  }
  catch (const nlohmann::json::exception&) {
    throw ConfigError(key, "wrong type");
  }
}

inline AnalyticField parse_field(const nlohmann::json& j, const std::string& key)
{
  if (j.is_string())
    return named_field(j.get<std::string>(), key);
  if (!j.is_object() || !j.contains("type"))
    throw ConfigError(key, "expected a name or an object with 'type'");
  const auto type = get<std::string>(j["type"], key + ".type");
  AnalyticField f = type == "plane" ? AnalyticField::plane(make_point(1, 0), 0.0)
                                    : named_field(type, key + ".type");
  const auto& allowed = field_params(f.kind);
  for (const auto& [k, v] : j.items()) {
    if (k == "type")
      continue;
    if (!allowed.count(k))
      throw ConfigError(key + "." + k, "unknown key");
    f.params[k] = get<double>(v, key + "." + k);
  }
  return f;
}

inline nlohmann::json field_json(const AnalyticField& f)
{
  if (f.kind == FieldKind::Custom)
    throw ConfigError("level_sets", "custom level sets cannot be serialized");
  nlohmann::json j{{"type", kind_name(f.kind)}};
  for (const auto& [k, v] : f.params)
    j[k] = v;
  return j;
}

inline Point parse_point(const nlohmann::json& j, const std::string& key)
{
  if (!j.is_array() || j.size() < 2 || j.size() > 3)
    throw ConfigError(key, "expected 2 or 3 coordinates");
  Point p = Point::Zero();
  for (std::size_t i = 0; i < j.size(); ++i)
    p[i] = get<double>(j[i], key);
  return p;
}

inline SearchVariant parse_variant(const std::string& code, const std::string& key)
{
  try {
    return SearchVariant::parse(code);
  }
  catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

inline void require_positive(int v, const std::string& key)
{
  if (v < 1)
    throw ConfigError(key, "must be >= 1");
}

}  // namespace detail

/// Parses a config document. Keys:
///   subcommand, study ("interface" | "volume"), dimension, order, n,
///   resolutions, level_sets (names or {type, params}), variant,
///   quadrature_order, depth_limit, norms, box {lo, hi}, out,
///   export_density, seed.
inline RunConfig parse_config_json(const nlohmann::json& j, const ConfigOverrides& ov = {})
{
  if (!j.is_object())
    throw ConfigError("", "config must be a JSON object");
  static const std::set<std::string> keys{
      "subcommand", "study",       "dimension", "order", "n",   "resolutions",    "level_sets",
      "variant",    "quadrature_order", "depth_limit", "norms", "box", "out", "export_density",
      "seed"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k))
      throw ConfigError(k, "unknown key");

  RunConfig cfg;
  auto& st = cfg.study;
  if (j.contains("subcommand"))
    cfg.subcommand = parse_subcommand(detail::get<std::string>(j["subcommand"], "subcommand"));
  if (j.contains("study")) {
    const auto s = detail::get<std::string>(j["study"], "study");
    if (s != "interface" && s != "volume")
      throw ConfigError("study", "expected 'interface' or 'volume'");
    st.kind = s == "interface" ? StudyKind::Interface : StudyKind::Volume;
  }
  if (j.contains("level_sets")) {
    const auto& ls = j["level_sets"];
    if (!ls.is_array() || ls.empty())
      throw ConfigError("level_sets", "expected a non-empty list");
    cfg.level_sets.clear();
    for (std::size_t i = 0; i < ls.size(); ++i)
      cfg.level_sets.push_back(detail::parse_field(ls[i], "level_sets[" + std::to_string(i) + "]"));
  }
  if (j.contains("order"))
    st.order = detail::get<int>(j["order"], "order");
  if (j.contains("n"))
    cfg.n = detail::get<int>(j["n"], "n");
  if (j.contains("resolutions"))
    st.resolutions = detail::get<std::vector<int>>(j["resolutions"], "resolutions");
  std::string variant = "13";
  if (j.contains("variant"))
    variant = detail::get<std::string>(j["variant"], "variant");
  if (j.contains("quadrature_order"))
    st.quadrature_order = detail::get<int>(j["quadrature_order"], "quadrature_order");
  if (j.contains("depth_limit"))
    st.depth_limit = detail::get<int>(j["depth_limit"], "depth_limit");
  if (j.contains("norms"))
    st.norms = detail::get<std::vector<std::string>>(j["norms"], "norms");
  if (j.contains("box")) {
    const auto& b = j["box"];
    if (!b.is_object())
      throw ConfigError("box", "expected {lo, hi}");
    for (const auto& [k, v] : b.items())
      if (k != "lo" && k != "hi")
        throw ConfigError("box." + k, "unknown key");
    if (!b.contains("lo") || !b.contains("hi"))
      throw ConfigError("box", "needs both lo and hi");
    st.box_lo = detail::parse_point(b["lo"], "box.lo");
    st.box_hi = detail::parse_point(b["hi"], "box.hi");
  }
  if (j.contains("out"))
    cfg.out = detail::get<std::string>(j["out"], "out");
  if (j.contains("export_density"))
    cfg.export_density = detail::get<int>(j["export_density"], "export_density");
  if (j.contains("seed"))
    cfg.seed = detail::get<unsigned>(j["seed"], "seed");

  if (ov.subcommand)
    cfg.subcommand = parse_subcommand(*ov.subcommand);
  if (ov.order)
    st.order = *ov.order;
  if (ov.n)
    cfg.n = *ov.n;
  if (ov.export_density)
    cfg.export_density = *ov.export_density;
  if (ov.depth_limit)
    st.depth_limit = *ov.depth_limit;
  if (ov.quad_order)
    st.quadrature_order = *ov.quad_order;
  if (ov.variant)
    variant = *ov.variant;
  if (ov.levelset)
    cfg.level_sets = {detail::named_field(*ov.levelset, "levelset")};
  if (ov.out)
    cfg.out = *ov.out;

  st.level_set = cfg.level_sets.front();
  const int inferred = detail::field_dimension(st.level_set);
  st.dimension = inferred;
  if (j.contains("dimension")) {
    st.dimension = detail::get<int>(j["dimension"], "dimension");
    if (st.dimension != 2 && st.dimension != 3)
      throw ConfigError("dimension", "must be 2 or 3");
  }
  for (std::size_t i = 0; i < cfg.level_sets.size(); ++i) {
    const auto& f = cfg.level_sets[i];
    if (f.kind != FieldKind::Plane && detail::field_dimension(f) != st.dimension)
      throw ConfigError("level_sets[" + std::to_string(i) + "]",
                        "level set does not match dimension " + std::to_string(st.dimension));
  }
  st.variant = detail::parse_variant(variant, "variant");
  if (st.dimension == 2 && !variant.empty() && std::isalpha(static_cast<unsigned char>(variant[0])))
    throw ConfigError("variant", "inner-node letter only applies in 3D");

  detail::require_positive(st.order, "order");
  detail::require_positive(cfg.n, "n");
  detail::require_positive(cfg.export_density, "export_density");
  detail::require_positive(st.depth_limit, "depth_limit");
  if (st.quadrature_order < 0)
    throw ConfigError("quadrature_order", "must be >= 0");
  for (std::size_t i = 0; i < st.resolutions.size(); ++i) {
    detail::require_positive(st.resolutions[i], "resolutions");
    if (i > 0 && st.resolutions[i] <= st.resolutions[i - 1])
      throw ConfigError("resolutions", "must be strictly increasing");
  }
  const auto allowed = norm_names(st.kind, st.dimension);
  for (const auto& name : st.norms)
    if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
      throw ConfigError("norms", "unknown norm '" + name + "' for this study");
  return cfg;
}

inline RunConfig parse_config(const std::string& path, const ConfigOverrides& ov = {})
{
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in)
      throw ConfigError("config", "cannot read '" + path + "'");
    try {
      j = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config", std::string("malformed JSON: ") + e.what());
    }
  }
  return parse_config_json(j, ov);
}

/// Inverse of parse_config_json: parsing the result gives back `cfg`.
inline nlohmann::json config_to_json(const RunConfig& cfg)
{
  const auto& st = cfg.study;
  nlohmann::json j{{"subcommand", to_string(cfg.subcommand)},
                   {"study", st.kind == StudyKind::Interface ? "interface" : "volume"},
                   {"dimension", st.dimension},
                   {"order", st.order},
                   {"n", cfg.n},
                   {"resolutions", st.resolutions},
                   {"variant", st.variant.code(st.dimension)},
                   {"quadrature_order", st.quadrature_order},
                   {"depth_limit", st.depth_limit},
                   {"norms", st.norms},
                   {"out", cfg.out},
                   {"export_density", cfg.export_density},
                   {"seed", cfg.seed}};
  j["level_sets"] = nlohmann::json::array();
  for (const auto& f : cfg.level_sets)
    j["level_sets"].push_back(detail::field_json(f));
  if (st.box_lo && st.box_hi) {
    auto arr = [&](const Point& p) {
      return st.dimension == 2 ? nlohmann::json{p[0], p[1]} : nlohmann::json{p[0], p[1], p[2]};
    };
    j["box"] = {{"lo", arr(*st.box_lo)}, {"hi", arr(*st.box_hi)}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// h,n_elements,<norms...>,refined,flagged; rows sorted by n.
inline std::string convergence_csv(std::vector<ErrorRecord> records)
{
  std::stable_sort(records.begin(), records.end(),
                   [](const ErrorRecord& a, const ErrorRecord& b) { return a.n < b.n; });
  std::ostringstream os;
  os << "h,n_elements";
  if (!records.empty())
    for (const auto& [name, v] : records.front().errors)
      os << ',' << name;
  os << ",refined,flagged\n";
  for (const auto& r : records) {
    os << format_double(r.h) << ',' << r.n_elements;
    for (const auto& [name, v] : r.errors)
      os << ',' << format_double(v);
    os << ',' << r.refined_elements << ',' << (r.flagged() ? 1 : 0) << '\n';
  }
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out)
    throw IoError("write to '" + path + "' failed");
}

inline void write_convergence_csv(const std::vector<ErrorRecord>& records, const std::string& path)
{
  write_text(path, convergence_csv(records));
}

// ---------------------------------------------------------------------------
// Visualization export

/// Linear cells with per-cell tags. Cell types use the VTK ids
/// (3 line, 5 triangle, 10 tetrahedron).
struct ExportMesh {
  std::vector<Point> points;
  std::vector<std::vector<int>> cells;
  std::vector<int> cell_types;
  std::vector<int> sign_codes;
  std::vector<int> functions;  // -1 for volume cells
  std::vector<long> parents;

  void add_cell(int type, std::vector<int> ids, int sign, int function, long parent)
  {
    cells.push_back(std::move(ids));
    cell_types.push_back(type);
    sign_codes.push_back(sign);
    functions.push_back(function);
    parents.push_back(parent);
  }
};

namespace detail {

/// Lattice subdivision of a reference family into linear pieces. Simplices
/// use the Kuhn split of the lattice in sorted coordinates (a <= b <= c),
/// which tiles the simplex exactly.
struct Lattice {
  std::vector<Point> points;             // reference coordinates
  std::vector<std::vector<int>> pieces;  // simplices on `points`
  int type = 5;
};

inline Lattice make_lattice(Family fam, int d)
{
  Lattice L;
  const double s = 1.0 / d;
  switch (fam) {
    case Family::Line:
      L.type = 3;
      for (int i = 0; i <= d; ++i)
        L.points.push_back(make_point(-1 + 2 * i * s));
      for (int i = 0; i < d; ++i)
        L.pieces.push_back({i, i + 1});
      return L;
    case Family::Triangle: {
      // a = y, b = x + y
      auto id = [&](int a, int b) { return b * (b + 1) / 2 + a; };
      for (int b = 0; b <= d; ++b)
        for (int a = 0; a <= b; ++a)
          L.points.push_back(make_point((b - a) * s, a * s));
      for (int b = 0; b < d; ++b)
        for (int a = 0; a <= b; ++a) {
          L.pieces.push_back({id(a, b), id(a, b + 1), id(a + 1, b + 1)});
          if (a < b)
            L.pieces.push_back({id(a, b), id(a + 1, b + 1), id(a + 1, b)});
        }
      return L;
    }
    case Family::Quadrilateral: {
      auto id = [&](int i, int j) { return j * (d + 1) + i; };
      for (int j = 0; j <= d; ++j)
        for (int i = 0; i <= d; ++i)
          L.points.push_back(make_point(-1 + 2 * i * s, -1 + 2 * j * s));
      for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) {
          L.pieces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
          L.pieces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
      return L;
    }
    case Family::Tetrahedron: {
      // a = z, b = y + z, c = x + y + z
      L.type = 10;
      std::map<std::array<int, 3>, int> index;
      auto id = [&](int a, int b, int c) {
        auto [it, fresh] = index.try_emplace({a, b, c}, static_cast<int>(L.points.size()));
        if (fresh)
          L.points.push_back(make_point((c - b) * s, (b - a) * s, a * s));
        return it->second;
      };
      static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
      for (int k = 0; k < d; ++k)
        for (int j = 0; j < d; ++j)
          for (int i = 0; i < d; ++i)
            for (const auto& p : perms) {
              std::array<std::array<int, 3>, 4> v;
              v[0] = {i, j, k};
              for (int m = 0; m < 3; ++m) {
                v[m + 1] = v[m];
                ++v[m + 1][p[m]];
              }
              bool inside = true;
              for (const auto& q : v)
                inside = inside && q[0] <= q[1] && q[1] <= q[2] && q[2] <= d;
              if (inside)
                L.pieces.push_back({id(v[0][0], v[0][1], v[0][2]), id(v[1][0], v[1][1], v[1][2]),
                                    id(v[2][0], v[2][1], v[2][2]), id(v[3][0], v[3][1], v[3][2])});
            }
      return L;
    }
    case Family::Prism: {
      L.type = 10;
      const auto tri = make_lattice(Family::Triangle, d);
      const int m = static_cast<int>(tri.points.size());
      for (int k = 0; k <= d; ++k)
        for (const auto& p : tri.points)
          L.points.push_back(make_point(p[0], p[1], -1 + 2 * k * s));
      for (int k = 0; k < d; ++k)
        for (const auto& t : tri.pieces) {
          std::vector<int> v{t[0], t[1], t[2]};
          // sorted indices make the split consistent across shared faces
          std::sort(v.begin(), v.end());
          const int lo = k * m, hi = (k + 1) * m;
          L.pieces.push_back({lo + v[0], lo + v[1], lo + v[2], hi + v[2]});
          L.pieces.push_back({lo + v[0], lo + v[1], hi + v[1], hi + v[2]});
          L.pieces.push_back({lo + v[0], hi + v[0], hi + v[1], hi + v[2]});
        }
      return L;
    }
  }
  return L;
}

inline void append_element(ExportMesh& out, Family fam, int order, std::span<const Point> nodes,
                           const ReferenceElement& bg, std::span<const Point> bg_nodes, int density,
                           int sign, int function, long parent)
{
  const auto L = make_lattice(fam, density);
  const auto& ref = reference_element(fam, order);
  const int base = static_cast<int>(out.points.size());
  for (const auto& a : L.points)
    out.points.push_back(isoparametric_map(bg, bg_nodes, isoparametric_map(ref, nodes, a)));
  for (const auto& piece : L.pieces) {
    std::vector<int> ids;
    for (int v : piece)
      ids.push_back(base + v);
    out.add_cell(L.type, std::move(ids), sign, function, parent);
  }
}

}  // namespace detail

/// Subdivided linear cells for every element of `result`: uncut elements
/// whole, cut elements as their sub-elements, plus interface elements.
inline ExportMesh build_export_mesh(const DecompositionResult& result, const BackgroundMesh& mesh,
                                    int density)
{
  if (density < 1)
    throw std::invalid_argument("export: density must be >= 1");
  ExportMesh out;
  const auto& bg = mesh.reference();
  for (const auto& ed : result.elements) {
    const auto bg_nodes = mesh.element_nodes(ed.element);
    if (!ed.cut)
      detail::append_element(out, bg.family(), bg.order(), bg.nodes(), bg, bg_nodes, density,
                             sign_code(ed.signs), -1, ed.element);
    for (const auto& s : ed.subs)
      detail::append_element(out, s.family, s.order, s.nodes, bg, bg_nodes, density,
                             sign_code(s.signs), -1, ed.element);
    for (const auto& i : ed.interfaces)
      detail::append_element(out, i.family, bg.order(), i.nodes, bg, bg_nodes, density,
                             sign_code(i.signs), i.function, ed.element);
  }
  return out;
}

/// Interface elements only, from a reconstruction.
inline ExportMesh build_export_mesh(const ReconstructionResult& result, const BackgroundMesh& mesh,
                                    int density)
{
  if (density < 1)
    throw std::invalid_argument("export: density must be >= 1");
  ExportMesh out;
  const auto& bg = mesh.reference();
  for (const auto& er : result.elements) {
    const auto bg_nodes = mesh.element_nodes(er.element);
    for (const auto& i : er.interfaces)
      detail::append_element(out, i.family, bg.order(), i.nodes, bg, bg_nodes, density, 0,
                             i.function, er.element);
  }
  return out;
}

inline std::string vtk_text(const ExportMesh& m)
{
  std::ostringstream os;
  os << "# vtk DataFile Version 3.0\ncutmesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << m.points.size() << " double\n";
  for (const auto& p : m.points)
    os << format_double(p[0]) << ' ' << format_double(p[1]) << ' ' << format_double(p[2]) << '\n';
  std::size_t total = 0;
  for (const auto& c : m.cells)
    total += c.size() + 1;
  os << "CELLS " << m.cells.size() << ' ' << total << '\n';
  for (const auto& c : m.cells) {
    os << c.size();
    for (int v : c)
      os << ' ' << v;
    os << '\n';
  }
  os << "CELL_TYPES " << m.cells.size() << '\n';
  for (int t : m.cell_types)
    os << t << '\n';
  os << "CELL_DATA " << m.cells.size() << '\n';
  auto scalars = [&](const char* name, const auto& values) {
    os << "SCALARS " << name << " int 1\nLOOKUP_TABLE default\n";
    for (auto v : values)
      os << v << '\n';
  };
  scalars("sign_code", m.sign_codes);
  scalars("function", m.functions);
  scalars("parent", m.parents);
  return os.str();
}

inline void export_visualization(const DecompositionResult& result, const BackgroundMesh& mesh,
                                 const std::string& path, int density)
{
  write_text(path, vtk_text(build_export_mesh(result, mesh, density)));
}

}  // namespace cutmesh
