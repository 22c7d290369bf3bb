#pragma once

// Convergence studies on structured background meshes: interface and volume
// error norms, reference values for the test level sets, rate fits.

#include "core.hpp"
#include "decomposition.hpp"
#include "levelset.hpp"
#include "mesh.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "reconstruction.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace cutmesh {

// ---------------------------------------------------------------------------
// Reference values

/// Exact (or dense-quadrature) integrals over the zero-level set and over
/// the negative region, for the integrand matching the dimension
/// (Integrand::f2d in 2D, Integrand::f3d in 3D).
struct ReferenceValues {
  double surface = 0.0;    // length (2D) or area (3D) of the zero-level set
  double surface_f = 0.0;  // integral of f over it
  double volume = 0.0;     // area (2D) or volume (3D) of the negative region
  double volume_f = 0.0;   // integral of f over it
};

struct OracleOptions {
  int angular = 8192;     // 2D: trapezoid points in theta
  int polar = 192;        // 3D: Gauss points in cos(polar angle)
  int azimuth = 384;      // 3D: trapezoid points in azimuth
  int radial_gauss = 24;  // Gauss points along each ray for region integrals
  int scan = 64;          // sign samples per ray for the star-shape check
  double reach = 2.0;     // rays are followed up to this distance
};

namespace detail {

inline double f_for_dim(int dim, const Point& x)
{
  return dim == 2 ? Integrand::f2d(x) : Integrand::f3d(x);
}

/// Distance from c along unit direction w to the zero-level set, which must
/// be crossed exactly once (negative to positive) within opt.reach.
inline double ray_root(const AnalyticField& field, const Point& c, const Point& w,
                       const OracleOptions& opt)
{
  auto g = [&](double rho) { return evaluate_analytic(field, c + rho * w); };
  int crossings = 0;
  double lo = 0.0, hi = 0.0;
  double prev = g(opt.reach * 1e-6);
  if (!(prev < 0))
    throw InternalConsistencyError("radial oracle: level set is not negative at the center");
  for (int k = 1; k <= opt.scan; ++k) {
    const double rho = opt.reach * k / opt.scan;
    const double cur = g(rho);
    if ((cur < 0) != (prev < 0)) {
      ++crossings;
      lo = opt.reach * (k - 1) / opt.scan;
      hi = rho;
    }
    prev = cur;
  }
  if (crossings != 1)
    throw InternalConsistencyError("radial oracle: zero-level set is not star-shaped about the center");
  for (int it = 0; it < 100 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline ReferenceValues radial_oracle_2d(const AnalyticField& field, const Point& c,
                                        const OracleOptions& opt)
{
  std::vector<double> gx, gw;
  gauss_legendre(opt.radial_gauss, gx, gw);
  ReferenceValues ref;
  const double dt = 2 * std::numbers::pi / opt.angular;
  for (int k = 0; k < opt.angular; ++k) {
    const double t = k * dt;
    const Point w = make_point(std::cos(t), std::sin(t));
    const Point wp = make_point(-std::sin(t), std::cos(t));
    const double R = ray_root(field, c, w, opt);
    const Point x = c + R * w;
    const Point grad = analytic_gradient(field, x);
    const double dR = -R * grad.dot(wp) / grad.dot(w);
    const double ds = std::hypot(R, dR);
    ref.surface += ds * dt;
    ref.surface_f += f_for_dim(2, x) * ds * dt;
    ref.volume += 0.5 * R * R * dt;
    double inner = 0.0;
    for (std::size_t q = 0; q < gx.size(); ++q) {
      const double rho = 0.5 * R * (gx[q] + 1);
      inner += 0.5 * R * gw[q] * f_for_dim(2, c + rho * w) * rho;
    }
    ref.volume_f += inner * dt;
  }
  return ref;
}

inline ReferenceValues radial_oracle_3d(const AnalyticField& field, const Point& c,
                                        const OracleOptions& opt)
{
  std::vector<double> ux, uw, gx, gw;
  gauss_legendre(opt.polar, ux, uw);
  gauss_legendre(opt.radial_gauss, gx, gw);
  const double dpsi = 2 * std::numbers::pi / opt.azimuth;
  std::vector<ReferenceValues> rows(ux.size());
  parallel_for(ux.size(), [&](std::size_t i) {
    const double u = ux[i], s = std::sqrt(1 - u * u);
    ReferenceValues& row = rows[i];
    for (int j = 0; j < opt.azimuth; ++j) {
      const double psi = j * dpsi;
      const Point w = make_point(s * std::cos(psi), s * std::sin(psi), u);
      const double R = ray_root(field, c, w, opt);
      const Point x = c + R * w;
      const Point grad = analytic_gradient(field, x);
      const double dA = R * R * grad.norm() / std::abs(grad.dot(w));
      const double wt = uw[i] * dpsi;
      row.surface += dA * wt;
      row.surface_f += f_for_dim(3, x) * dA * wt;
      row.volume += R * R * R / 3 * wt;
      double inner = 0.0;
      for (std::size_t q = 0; q < gx.size(); ++q) {
        const double rho = 0.5 * R * (gx[q] + 1);
        inner += 0.5 * R * gw[q] * f_for_dim(3, c + rho * w) * rho * rho;
      }
      row.volume_f += inner * wt;
    }
  });
  ReferenceValues ref;
  for (const auto& r : rows) {
    ref.surface += r.surface;
    ref.surface_f += r.surface_f;
    ref.volume += r.volume;
    ref.volume_f += r.volume_f;
  }
  return ref;
}

inline std::string field_key(const AnalyticField& f, int dim, const OracleOptions& opt)
{
  std::ostringstream os;
  os.precision(17);
  os << static_cast<int>(f.kind) << ':' << f.name << ':' << dim;
  for (const auto& [k, v] : f.params)
    os << ':' << k << '=' << v;
  os << ':' << opt.angular << ':' << opt.polar << ':' << opt.azimuth << ':' << opt.radial_gauss
     << ':' << opt.scan << ':' << opt.reach;
  return os.str();
}

}  // namespace detail

/// Closed forms for centered circles and spheres; everything else goes
/// through the radial oracle (star-shaped about the field's center).
inline ReferenceValues reference_values(const AnalyticField& field, int dim,
                                        const OracleOptions& opt = {})
{
  using std::numbers::pi;
  const double r = field.param("r", 0.7123);
  const bool centered = field.center().norm() == 0.0;
  if (field.kind == FieldKind::Plane)
    throw std::invalid_argument("reference_values: a plane does not bound a finite region");
  if (field.kind == FieldKind::Circle2D && dim == 2 && centered)
    return {2 * pi * r, pi * r * r * r, pi * r * r, pi * std::pow(r, 4) / 4};
  if (field.kind == FieldKind::Sphere3D && dim == 3 && centered)
    return {4 * pi * r * r, 8 * pi * std::pow(r, 4) / 3 + 2 * pi * r * std::sin(r),
            4 * pi * r * r * r / 3,
            8 * pi * std::pow(r, 5) / 15 + 2 * pi * (std::sin(r) - r * std::cos(r))};

  static std::mutex mutex;
  static std::map<std::string, ReferenceValues> cache;
  const auto key = detail::field_key(field, dim, opt);
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end())
      return it->second;
  }
  const bool has_center = field.kind == FieldKind::Circle2D || field.kind == FieldKind::Sphere3D;
  const Point c = has_center ? field.center() : Point::Zero();
  auto ref = dim == 2 ? detail::radial_oracle_2d(field, c, opt) : detail::radial_oracle_3d(field, c, opt);
  if (field.kind == FieldKind::Flower2D) {
    const double r0 = field.param("r0", 0.5), amp = field.param("amp", 0.1);
    ref.volume = pi * (r0 * r0 + 0.5 * amp * amp);
  }
  std::lock_guard lock(mutex);
  cache[key] = ref;
  return ref;
}

// ---------------------------------------------------------------------------
// Region measures

/// Physical measure of each sign region (keyed by sign_code) of a
/// decomposition, by quadrature of order `q` on every sub-element.
inline std::map<int, double> region_measures(const BackgroundMesh& mesh,
                                             const DecompositionResult& result, int q = 11)
{
  const auto& bg = mesh.reference();
  std::vector<std::vector<std::pair<int, double>>> parts(result.elements.size());
  parallel_for(result.elements.size(), [&](std::size_t k) {
    const auto& ed = result.elements[k];
    const auto bg_nodes = mesh.element_nodes(ed.element);
    auto measure = [&](Family fam, std::span<const Point> nodes) {
      return map_rule_volume(build_rule(fam, q), reference_element(fam, bg.order()), nodes, &bg,
                             bg_nodes)
          .total_weight();
    };
    if (!ed.cut)
      parts[k].emplace_back(sign_code(ed.signs), measure(bg.family(), bg.nodes()));
    for (const auto& s : ed.subs)
      parts[k].emplace_back(sign_code(s.signs), measure(s.family, s.nodes));
  });
  std::map<int, double> out;
  for (const auto& p : parts)
    for (const auto& [code, m] : p)
      out[code] += m;
  return out;
}

// ---------------------------------------------------------------------------
// Studies

enum class StudyKind { Interface, Volume };

inline std::vector<int> default_resolutions(int dim)
{
  if (dim == 2)
    return {6, 10, 20, 30, 50, 70, 100, 150, 200, 300};
  return {6, 10, 14, 20, 30, 50, 70, 100};
}

struct StudyConfig {
  StudyKind kind = StudyKind::Interface;
  int dimension = 2;
  int order = 1;
  std::vector<int> resolutions;  // empty: default_resolutions(dimension)
  AnalyticField level_set = AnalyticField::circle();
  SearchVariant variant{};
  int quadrature_order = 11;
  std::vector<std::string> norms;  // empty: all norms of the study kind
  std::optional<Point> box_lo, box_hi;  // empty: default_box
  int depth_limit = 5;
  double perturbation = 1e-13;
  OracleOptions oracle{};
};

/// [-1, 1]^d. The flower is singular at the origin, where an even
/// resolution would place a node, so its box is shifted slightly.
inline std::pair<Point, Point> default_box(const AnalyticField& field, int dim)
{
  Point lo = -Point::Ones(), hi = Point::Ones();
  if (field.kind == FieldKind::Flower2D) {
    const Point shift = make_point(std::sqrt(2.0) * 1e-3, std::sqrt(3.0) * 1e-3);
    lo += shift;
    hi += shift;
  }
  if (dim == 2)
    lo[2] = hi[2] = 0.0;
  return {lo, hi};
}

inline std::vector<std::string> norm_names(StudyKind kind, int dim)
{
  if (kind == StudyKind::Volume)
    return {"eps_1", "eps_f", "eps_fh"};
  if (dim == 2)
    return {"eps_1", "eps_phi", "eps_f", "eps_f1h", "eps_f2h"};
  return {"eps_1", "eps_phi", "eps_f", "eps_f2h", "eps_f3h"};
}

struct ErrorRecord {
  double h = 0.0;
  int n = 0;             // elements per dimension
  long n_elements = 0;   // background elements in the mesh
  std::vector<std::pair<std::string, double>> errors;  // column order of the study
  long refined_elements = 0;
  long cut_elements = 0;
  double wall_time = 0.0;
  double max_residual = 0.0;
  double max_face_coordinate = 0.0;
  double measure = 0.0;  // summed weights: length/area of the interface or region

  bool flagged() const { return refined_elements > 0; }

  double error(const std::string& name) const
  {
    for (const auto& [k, v] : errors)
      if (k == name)
        return v;
    throw std::out_of_range("ErrorRecord: no norm " + name);
  }
};

struct RateEstimate {
  std::string norm;
  double slope = 0.0;
  std::vector<int> window;  // resolutions used in the fit
};

namespace detail {

inline void validate(const StudyConfig& cfg)
{
  if (cfg.dimension != 2 && cfg.dimension != 3)
    throw std::invalid_argument("study: dimension must be 2 or 3");
  if (cfg.order < 1)
    throw std::invalid_argument("study: order must be >= 1");
  for (std::size_t i = 1; i < cfg.resolutions.size(); ++i)
    if (cfg.resolutions[i] <= cfg.resolutions[i - 1])
      throw std::invalid_argument("study: resolutions must be strictly increasing");
  for (const auto& n : cfg.norms) {
    const auto all = norm_names(cfg.kind, cfg.dimension);
    if (std::find(all.begin(), all.end(), n) == all.end())
      throw std::invalid_argument("study: unknown norm " + n);
  }
}

inline double relative(double value, double exact) { return std::abs(value - exact) / std::abs(exact); }

// Per-element partial sums, reduced in element order for reproducibility.
struct Sums {
  double one = 0, phi = 0, f = 0, f_iface = 0, f_bg = 0;
};

inline std::vector<std::pair<std::string, double>> select(
    const StudyConfig& cfg, std::vector<std::pair<std::string, double>> all)
{
  if (cfg.norms.empty())
    return all;
  std::vector<std::pair<std::string, double>> out;
  for (const auto& kv : all)
    if (std::find(cfg.norms.begin(), cfg.norms.end(), kv.first) != cfg.norms.end())
      out.push_back(kv);
  return out;
}

}  // namespace detail

inline BackgroundMesh study_mesh(const StudyConfig& cfg, int n)
{
  auto [lo, hi] = default_box(cfg.level_set, cfg.dimension);
  if (cfg.box_lo)
    lo = *cfg.box_lo;
  if (cfg.box_hi)
    hi = *cfg.box_hi;
  return build_structured_mesh(cfg.dimension, n, cfg.order, lo, hi);
}

/// One record per resolution: reconstruct the zero-level set, integrate on
/// the interface elements, compare with the reference values.
inline std::vector<ErrorRecord> run_interface_study(const StudyConfig& config)
{
  StudyConfig cfg = config;
  if (cfg.resolutions.empty())
    cfg.resolutions = default_resolutions(cfg.dimension);
  detail::validate(cfg);
  const int dim = cfg.dimension;
  const auto ref_values = reference_values(cfg.level_set, dim, cfg.oracle);
  ReconstructionOptions ropt;
  ropt.variant = cfg.variant;
  ropt.depth_limit = cfg.depth_limit;

  std::vector<ErrorRecord> records;
  for (int n : cfg.resolutions) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto mesh = study_mesh(cfg, n);
    const auto ls = sample_to_mesh(cfg.level_set, mesh, cfg.perturbation);
    const auto rec = reconstruct_mesh(mesh, ls, ropt);
    const auto& bg = mesh.reference();
    std::vector<detail::Sums> sums(rec.elements.size());
    parallel_for(rec.elements.size(), [&](std::size_t k) {
      const auto& er = rec.elements[k];
      const auto bg_nodes = mesh.element_nodes(er.element);
      std::vector<double> f_bg;
      for (const auto& x : bg_nodes)
        f_bg.push_back(detail::f_for_dim(dim, x));
      auto& s = sums[k];
      for (const auto& iface : er.interfaces) {
        const auto& ie = reference_element(iface.family, cfg.order);
        const auto& rule = build_rule(iface.family, cfg.quadrature_order);
        const auto mq = map_rule_surface(rule, ie, iface.nodes, dim, &bg, bg_nodes);
        std::vector<double> f_nodes;
        for (const auto& r : iface.nodes)
          f_nodes.push_back(detail::f_for_dim(dim, isoparametric_map(bg, bg_nodes, r)));
        for (std::size_t q = 0; q < mq.w.size(); ++q) {
          const double w = mq.w[q];
          s.one += w;
          s.phi += w * evaluate_analytic(cfg.level_set, mq.x[q]);
          s.f += w * detail::f_for_dim(dim, mq.x[q]);
          s.f_iface += w * interpolate(ie, f_nodes, mq.local[q]);
          s.f_bg += w * interpolate(bg, f_bg, mq.reference[q]);
        }
      }
    });
    detail::Sums total;
    ErrorRecord r;
    for (std::size_t k = 0; k < sums.size(); ++k) {
      total.one += sums[k].one;
      total.phi += sums[k].phi;
      total.f += sums[k].f;
      total.f_iface += sums[k].f_iface;
      total.f_bg += sums[k].f_bg;
      r.max_residual = std::max(r.max_residual, rec.elements[k].max_residual);
      r.max_face_coordinate = std::max(r.max_face_coordinate, rec.elements[k].max_face_coordinate);
    }
    r.h = mesh.h;
    r.n = n;
    r.n_elements = static_cast<long>(mesh.element_count());
    r.refined_elements = rec.refined_elements;
    r.cut_elements = static_cast<long>(rec.elements.size());
    r.measure = total.one;
    const double I1 = ref_values.surface, If = ref_values.surface_f;
    std::vector<std::pair<std::string, double>> all{
        {"eps_1", detail::relative(total.one, I1)},
        {"eps_phi", total.phi},
        {"eps_f", detail::relative(total.f, If)}};
    if (dim == 2) {
      all.emplace_back("eps_f1h", detail::relative(total.f_iface, If));
      all.emplace_back("eps_f2h", detail::relative(total.f_bg, If));
    }
    else {
      all.emplace_back("eps_f2h", detail::relative(total.f_iface, If));
      all.emplace_back("eps_f3h", detail::relative(total.f_bg, If));
    }
    r.errors = detail::select(cfg, std::move(all));
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    records.push_back(std::move(r));
  }
  return records;
}

/// One record per resolution: decompose cut elements and integrate over the
/// negative region.
inline std::vector<ErrorRecord> run_volume_study(const StudyConfig& config)
{
  StudyConfig cfg = config;
  if (cfg.resolutions.empty())
    cfg.resolutions = default_resolutions(cfg.dimension);
  detail::validate(cfg);
  const int dim = cfg.dimension;
  const auto ref_values = reference_values(cfg.level_set, dim, cfg.oracle);
  DecompositionOptions dopt;
  dopt.reconstruction.variant = cfg.variant;
  dopt.reconstruction.depth_limit = cfg.depth_limit;

  std::vector<ErrorRecord> records;
  for (int n : cfg.resolutions) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto mesh = study_mesh(cfg, n);
    const auto ls = sample_to_mesh(cfg.level_set, mesh, cfg.perturbation);
    const auto res = decompose_multi(mesh, ls, dopt);
    const auto& bg = mesh.reference();
    std::vector<detail::Sums> sums(res.elements.size());
    std::vector<double> residual(res.elements.size(), 0.0);
    parallel_for(res.elements.size(), [&](std::size_t k) {
      const auto& ed = res.elements[k];
      const auto bg_nodes = mesh.element_nodes(ed.element);
      std::vector<double> f_bg;
      for (const auto& x : bg_nodes)
        f_bg.push_back(detail::f_for_dim(dim, x));
      auto& s = sums[k];
      auto add = [&](Family fam, std::span<const Point> nodes) {
        const auto& rule = build_rule(fam, cfg.quadrature_order);
        const auto mq = map_rule_volume(rule, reference_element(fam, cfg.order), nodes, &bg, bg_nodes);
        for (std::size_t q = 0; q < mq.w.size(); ++q) {
          s.one += mq.w[q];
          s.f += mq.w[q] * detail::f_for_dim(dim, mq.x[q]);
          s.f_bg += mq.w[q] * interpolate(bg, f_bg, mq.reference[q]);
        }
      };
      if (!ed.cut) {
        if (ed.signs[0] < 0)
          add(bg.family(), bg.nodes());
        return;
      }
      for (const auto& sub : ed.subs)
        if (sub.signs[0] < 0)
          add(sub.family, sub.nodes);
      const auto values = ls.element_values(mesh, 0, ed.element);
      for (const auto& iface : ed.interfaces)
        for (const auto& r : iface.nodes)
          residual[k] = std::max(residual[k], std::abs(interpolate(bg, values, r)));
    });
    detail::Sums total;
    ErrorRecord r;
    for (std::size_t k = 0; k < sums.size(); ++k) {
      total.one += sums[k].one;
      total.f += sums[k].f;
      total.f_bg += sums[k].f_bg;
      r.max_residual = std::max(r.max_residual, residual[k]);
      r.cut_elements += res.elements[k].cut;
    }
    r.h = mesh.h;
    r.n = n;
    r.n_elements = static_cast<long>(mesh.element_count());
    r.refined_elements = res.refined_elements;
    r.measure = total.one;
    r.errors = detail::select(
        cfg, {{"eps_1", detail::relative(total.one, ref_values.volume)},
              {"eps_f", detail::relative(total.f, ref_values.volume_f)},
              {"eps_fh", detail::relative(total.f_bg, ref_values.volume_f)}});
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<ErrorRecord> run_study(const StudyConfig& cfg)
{
  return cfg.kind == StudyKind::Interface ? run_interface_study(cfg) : run_volume_study(cfg);
}

/// Errors are relative, so the floor is 1e2 machine epsilons.
inline constexpr double default_error_floor = 1e2 * std::numeric_limits<double>::epsilon();

/// Least-squares slope of log|eps| against log h over unflagged records
/// above the error floor.
inline RateEstimate estimate_rate(const std::vector<ErrorRecord>& records, const std::string& norm,
                                  double floor = default_error_floor)
{
  std::vector<double> xs, ys;
  RateEstimate est;
  est.norm = norm;
  for (const auto& r : records) {
    const double e = std::abs(r.error(norm));
    if (r.flagged() || !(e > floor) || !(r.h > 0))
      continue;
    xs.push_back(std::log(r.h));
    ys.push_back(std::log(e));
    est.window.push_back(r.n);
  }
  if (xs.size() < 3)
    throw InsufficientData("estimate_rate: fewer than 3 usable records for " + norm);
  const double m = static_cast<double>(xs.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - sx / m) * (xs[i] - sx / m);
    sxy += (xs[i] - sx / m) * (ys[i] - sy / m);
  }
  est.slope = sxy / sxx;
  return est;
}

struct VariantResult {
  SearchVariant variant;
  std::vector<ErrorRecord> records;
  std::optional<RateEstimate> rate;
  std::string error;  // empty on success
};

/// Runs the study once per variant. Failures are recorded per variant.
inline std::vector<VariantResult> sweep_variants(const StudyConfig& base,
                                                 const std::vector<SearchVariant>& variants,
                                                 const std::string& norm = "eps_1")
{
  std::vector<VariantResult> out;
  for (const auto& v : variants) {
    VariantResult vr;
    vr.variant = v;
    StudyConfig cfg = base;
    cfg.variant = v;
    try {
      vr.records = run_study(cfg);
      vr.rate = estimate_rate(vr.records, norm);
    }
    catch (const std::exception& e) {
      vr.error = e.what();
    }
    out.push_back(std::move(vr));
  }
  return out;
}

}  // namespace cutmesh
