#pragma once

#include "core.hpp"
#include "mesh.hpp"
#include "reference_element.hpp"

#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace cutmesh {

enum class FieldKind { Circle2D, Flower2D, Sphere3D, Bumpy3D, Plane, Custom };

/// Analytic level-set function. Negative inside (or on the side opposite to
/// the plane normal).
///
/// Parameters (defaults in brackets):
///   Circle2D, Sphere3D: r [0.7123], cx, cy, cz [0]
///   Flower2D: r0 [0.5], amp [0.1], lobes [8]; phi = |x| - R(theta)
///   Bumpy3D: r [0.7123], amp [0.1], freq [2 pi]
///   Plane: nx, ny, nz (normalized on use), d; phi = n.x - d
struct AnalyticField {
  FieldKind kind = FieldKind::Circle2D;
  std::map<std::string, double> params;
  std::string name;
  std::function<double(const Point&)> custom_value;
  std::function<Point(const Point&)> custom_gradient;  // optional

  double param(const std::string& key, double fallback) const
  {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }

  Point center() const { return make_point(param("cx", 0), param("cy", 0), param("cz", 0)); }

  static AnalyticField circle(double r = 0.7123, const Point& c = Point::Zero())
  {
    return {FieldKind::Circle2D, {{"r", r}, {"cx", c[0]}, {"cy", c[1]}}, "circle", {}, {}};
  }
  static AnalyticField flower() { return {FieldKind::Flower2D, {}, "flower", {}, {}}; }
  static AnalyticField sphere(double r = 0.7123, const Point& c = Point::Zero())
  {
    return {FieldKind::Sphere3D, {{"r", r}, {"cx", c[0]}, {"cy", c[1]}, {"cz", c[2]}}, "sphere",
            {}, {}};
  }
  static AnalyticField bumpy(double r = 0.7123)
  {
    return {FieldKind::Bumpy3D, {{"r", r}}, "bumpy", {}, {}};
  }
  static AnalyticField plane(const Point& normal, double offset)
  {
    return {FieldKind::Plane,
            {{"nx", normal[0]}, {"ny", normal[1]}, {"nz", normal[2]}, {"d", offset}},
            "plane",
            {},
            {}};
  }
  static AnalyticField custom(std::string name, std::function<double(const Point&)> f,
                              std::function<Point(const Point&)> grad = {})
  {
    return {FieldKind::Custom, {}, std::move(name), std::move(f), std::move(grad)};
  }
};

inline double flower_radius(const AnalyticField& f, double theta)
{
  return f.param("r0", 0.5) + f.param("amp", 0.1) * std::sin(f.param("lobes", 8) * theta);
}

inline double evaluate_analytic(const AnalyticField& f, const Point& x)
{
  switch (f.kind) {
    case FieldKind::Circle2D: {
      const Point c = f.center();
      return std::hypot(x[0] - c[0], x[1] - c[1]) - f.param("r", 0.7123);
    }
    case FieldKind::Flower2D: {
      const double rho = std::hypot(x[0], x[1]);
      if (rho < 1e-14)
        throw SingularPointError("flower level set is undefined at the origin");
      return rho - flower_radius(f, std::atan2(x[1], x[0]));
    }
    case FieldKind::Sphere3D:
      return (x - f.center()).norm() - f.param("r", 0.7123);
    case FieldKind::Bumpy3D: {
      const double k = f.param("freq", 2 * std::numbers::pi);
      return x.norm() - f.param("r", 0.7123) +
             f.param("amp", 0.1) * (std::cos(k * x[0]) + std::cos(k * x[1]) + std::cos(k * x[2]));
    }
    case FieldKind::Plane: {
      Point n = make_point(f.param("nx", 1), f.param("ny", 0), f.param("nz", 0));
      return n.dot(x) / n.norm() - f.param("d", 0);
    }
    case FieldKind::Custom:
      if (!f.custom_value)
        throw std::invalid_argument("custom field without callback");
      return f.custom_value(x);
  }
  return 0.0;
}

/// Analytic gradient; Custom fields without a gradient callback fall back to
/// central differences.
inline Point analytic_gradient(const AnalyticField& f, const Point& x)
{
  switch (f.kind) {
    case FieldKind::Circle2D: {
      Point d = x - f.center();
      d[2] = 0;
      return d / d.norm();
    }
    case FieldKind::Flower2D: {
      const double rho2 = x[0] * x[0] + x[1] * x[1];
      const double rho = std::sqrt(rho2);
      if (rho < 1e-14)
        throw SingularPointError("flower level set is undefined at the origin");
      const double theta = std::atan2(x[1], x[0]);
      const double lobes = f.param("lobes", 8);
      const double dR = f.param("amp", 0.1) * lobes * std::cos(lobes * theta);
      return make_point(x[0] / rho + dR * x[1] / rho2, x[1] / rho - dR * x[0] / rho2);
    }
    case FieldKind::Sphere3D: {
      const Point d = x - f.center();
      return d / d.norm();
    }
    case FieldKind::Bumpy3D: {
      const double k = f.param("freq", 2 * std::numbers::pi);
      const double amp = f.param("amp", 0.1);
      Point g = x / x.norm();
      for (int d = 0; d < 3; ++d)
        g[d] -= amp * k * std::sin(k * x[d]);
      return g;
    }
    case FieldKind::Plane: {
      const Point n = make_point(f.param("nx", 1), f.param("ny", 0), f.param("nz", 0));
      return n / n.norm();
    }
    case FieldKind::Custom: {
      if (f.custom_gradient)
        return f.custom_gradient(x);
      const double step = 1e-6;
      Point g = Point::Zero();
      for (int d = 0; d < 3; ++d) {
        Point a = x, b = x;
        a[d] += step;
        b[d] -= step;
        g[d] = (evaluate_analytic(f, a) - evaluate_analytic(f, b)) / (2 * step);
      }
      return g;
    }
  }
  return Point::Zero();
}

/// Nodal level-set data on a mesh: values[f][node].
struct LevelSetField {
  long mesh_id = 0;
  std::vector<std::vector<double>> values;

  int function_count() const { return static_cast<int>(values.size()); }
  std::size_t node_count() const { return values.empty() ? 0 : values[0].size(); }

  /// Nodal values of function f on element e of `mesh`.
  std::vector<double> element_values(const BackgroundMesh& mesh, int f, std::size_t e) const
  {
    std::vector<double> out;
    out.reserve(mesh.elements[e].size());
    for (int i : mesh.elements[e])
      out.push_back(values[f][i]);
    return out;
  }
};

/// Samples the fields at the mesh nodes. Corner-node values with magnitude
/// below `perturbation` are replaced by +perturbation so no element corner
/// sits exactly on a zero-level set.
inline LevelSetField sample_to_mesh(std::span<const AnalyticField> fields,
                                    const BackgroundMesh& mesh, double perturbation = 1e-13)
{
  if (perturbation < 0)
    throw std::invalid_argument("sample_to_mesh: perturbation must be >= 0");
  LevelSetField out;
  out.mesh_id = mesh.id;
  for (const auto& f : fields) {
    std::vector<double> v(mesh.nodes.size());
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
      v[i] = evaluate_analytic(f, mesh.nodes[i]);
      if (mesh.is_corner[i] && std::abs(v[i]) < perturbation)
        v[i] = perturbation;
      if (mesh.is_corner[i] && v[i] == 0.0)
        v[i] = perturbation > 0 ? perturbation : 1e-300;
    }
    out.values.push_back(std::move(v));
  }
  return out;
}

inline LevelSetField sample_to_mesh(const AnalyticField& field, const BackgroundMesh& mesh,
                                    double perturbation = 1e-13)
{
  return sample_to_mesh(std::span<const AnalyticField>(&field, 1), mesh, perturbation);
}

/// phi^h(r) = sum N_i(r) phi_i.
inline double interpolate(const ReferenceElement& elem, std::span<const double> nodal,
                          const Point& r)
{
  if (static_cast<int>(nodal.size()) != elem.node_count())
    throw std::invalid_argument("interpolate: nodal value count mismatch");
  thread_local std::vector<double> N;
  N.resize(elem.node_count());
  elem.shape_values(r, N);
  double v = 0.0;
  for (int i = 0; i < elem.node_count(); ++i)
    v += N[i] * nodal[i];
  return v;
}

/// Reference-space gradient of phi^h.
inline Point interpolate_gradient(const ReferenceElement& elem, std::span<const double> nodal,
                                  const Point& r)
{
  if (static_cast<int>(nodal.size()) != elem.node_count())
    throw std::invalid_argument("interpolate_gradient: nodal value count mismatch");
  thread_local std::vector<Point> G;
  G.resize(elem.node_count());
  elem.shape_gradients(r, G);
  Point g = Point::Zero();
  for (int i = 0; i < elem.node_count(); ++i)
    g += nodal[i] * G[i];
  return g;
}

/// Value and reference gradient in one pass.
inline double interpolate_with_gradient(const ReferenceElement& elem,
                                        std::span<const double> nodal, const Point& r, Point& grad)
{
  thread_local std::vector<double> N;
  thread_local std::vector<Point> G;
  N.resize(elem.node_count());
  G.resize(elem.node_count());
  elem.shape_values_and_gradients(r, N, G);
  double v = 0.0;
  grad.setZero();
  for (int i = 0; i < elem.node_count(); ++i) {
    v += N[i] * nodal[i];
    grad += nodal[i] * G[i];
  }
  return v;
}

// ---------------------------------------------------------------------------

enum class IntegrandKind { One, F2D, F3D, LevelSetItself, InterpolatedF };

/// Test integrands. LevelSetItself and InterpolatedF depend on discrete data
/// and are evaluated by the quadrature layer; `evaluate` covers the analytic
/// ones.
struct Integrand {
  IntegrandKind kind = IntegrandKind::One;

  static double f2d(const Point& x)
  {
    return 0.5 * x[0] + 0.25 * x[1] + x[0] * x[0] + 2 * x[1] * x[1] * x[1];
  }
  static double f3d(const Point& x) { return x[0] * x[0] + x[1] * x[1] + 0.5 * std::cos(x[2]); }

  double evaluate(const Point& x) const
  {
    switch (kind) {
      case IntegrandKind::One: return 1.0;
      case IntegrandKind::F2D: return f2d(x);
      case IntegrandKind::F3D: return f3d(x);
      default: throw std::invalid_argument("integrand requires discrete data");
    }
  }
};

}  // namespace cutmesh
