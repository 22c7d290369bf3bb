#pragma once

#include "core.hpp"
#include "reference_element.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

namespace cutmesh {

struct QuadratureRule {
  Family family{};
  int order = 0;  // total-degree exactness
  std::vector<Point> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
};

/// n-point Gauss-Legendre rule on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w)
{
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2 * k - 1) * z * p1 - (k - 1) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16)
        break;
    }
    {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2 * k - 1) * z * p1 - (k - 1) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1);
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1 - z * z) * dp * dp);
  }
  if (n % 2 == 1)
    x[n / 2] = 0.0;
}

namespace detail {

inline QuadratureRule make_rule(Family family, int q)
{
  QuadratureRule rule;
  rule.family = family;
  rule.order = q;
  std::vector<double> x1, w1, x2, w2, x3, w3;
  const int n = (q + 2) / 2;  // ceil((q + 1) / 2)
  switch (family) {
    case Family::Line:
      gauss_legendre(n, x1, w1);
      for (int i = 0; i < n; ++i) {
        rule.points.push_back(make_point(x1[i]));
        rule.weights.push_back(w1[i]);
      }
      break;
    case Family::Quadrilateral:
      gauss_legendre(n, x1, w1);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          rule.points.push_back(make_point(x1[i], x1[j]));
          rule.weights.push_back(w1[i] * w1[j]);
        }
      break;
    case Family::Triangle:
    case Family::Prism: {
      // Collapsed square: a = s (1 - t), b = t, Jacobian (1 - t).
      const int nt = (q + 3) / 2;
      gauss_legendre(n, x1, w1);
      gauss_legendre(nt, x2, w2);
      std::vector<Point> tp;
      std::vector<double> tw;
      for (int j = 0; j < nt; ++j)
        for (int i = 0; i < n; ++i) {
          const double s = 0.5 * (x1[i] + 1), t = 0.5 * (x2[j] + 1);
          tp.push_back(make_point(s * (1 - t), t));
          tw.push_back(0.25 * w1[i] * w2[j] * (1 - t));
        }
      if (family == Family::Triangle) {
        rule.points = std::move(tp);
        rule.weights = std::move(tw);
      }
      else {
        gauss_legendre(n, x3, w3);
        for (int k = 0; k < n; ++k)
          for (std::size_t i = 0; i < tp.size(); ++i) {
            rule.points.push_back(make_point(tp[i][0], tp[i][1], x3[k]));
            rule.weights.push_back(tw[i] * w3[k]);
          }
      }
      break;
    }
    case Family::Tetrahedron: {
      // a = s (1 - t)(1 - u), b = t (1 - u), c = u; Jacobian (1 - t)(1 - u)^2.
      const int nt = (q + 3) / 2, nu = (q + 4) / 2;
      gauss_legendre(n, x1, w1);
      gauss_legendre(nt, x2, w2);
      gauss_legendre(nu, x3, w3);
      for (int k = 0; k < nu; ++k)
        for (int j = 0; j < nt; ++j)
          for (int i = 0; i < n; ++i) {
            const double s = 0.5 * (x1[i] + 1), t = 0.5 * (x2[j] + 1), u = 0.5 * (x3[k] + 1);
            rule.points.push_back(make_point(s * (1 - t) * (1 - u), t * (1 - u), u));
            rule.weights.push_back(0.125 * w1[i] * w2[j] * w3[k] * (1 - t) * (1 - u) * (1 - u));
          }
      break;
    }
  }
  return rule;
}

}  // namespace detail

/// Rule exact for polynomials of total degree <= order (tensor degree on
/// quads, triangle degree x line degree on prisms).
inline const QuadratureRule& build_rule(Family family, int order)
{
  if (order < 1 || order > 30)
    throw std::invalid_argument("build_rule: order must be in [1, 30]");
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{static_cast<int>(family), order}];
  if (!slot)
    slot = std::make_unique<QuadratureRule>(detail::make_rule(family, order));
  return *slot;
}

/// Quadrature points pushed through sub-element -> background reference ->
/// physical maps. `local` are the points in the (sub/interface) element's own
/// reference domain, `reference` the same points in the background element's
/// reference domain.
struct MappedQuadrature {
  std::vector<Point> x;
  std::vector<double> w;
  std::vector<Point> local;
  std::vector<Point> reference;

  void append(const MappedQuadrature& other)
  {
    x.insert(x.end(), other.x.begin(), other.x.end());
    w.insert(w.end(), other.w.begin(), other.w.end());
    local.insert(local.end(), other.local.begin(), other.local.end());
    reference.insert(reference.end(), other.reference.begin(), other.reference.end());
  }

  double total_weight() const
  {
    double s = 0.0;
    for (double v : w)
      s += v;
    return s;
  }
};

/// Volume rule on a sub-element whose nodes are given in the background
/// reference domain. Without background nodes the physical space is the
/// reference space itself.
inline MappedQuadrature map_rule_volume(const QuadratureRule& rule, const ReferenceElement& sub,
                                        std::span<const Point> sub_nodes,
                                        const ReferenceElement* background = nullptr,
                                        std::span<const Point> background_nodes = {})
{
  if (rule.family != sub.family())
    throw std::invalid_argument("map_rule_volume: rule family does not match element");
  MappedQuadrature out;
  const int dim = sub.dim();
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const Point& a = rule.points[q];
    const Point r = isoparametric_map(sub, sub_nodes, a);
    double det = jacobian_measure(jacobian(sub, sub_nodes, a), dim, dim);
    Point x = r;
    if (background) {
      det *= jacobian_measure(jacobian(*background, background_nodes, r), dim, dim);
      x = isoparametric_map(*background, background_nodes, r);
    }
    if (!(det > 0) || !std::isfinite(det))
      throw IntegrationInvalid("non-positive Jacobian at a volume quadrature point");
    out.x.push_back(x);
    out.w.push_back(rule.weights[q] * det);
    out.local.push_back(a);
    out.reference.push_back(r);
  }
  return out;
}

/// Surface (or line) rule on an interface element embedded in the background
/// reference domain of dimension space_dim.
inline MappedQuadrature map_rule_surface(const QuadratureRule& rule,
                                         const ReferenceElement& iface,
                                         std::span<const Point> iface_nodes, int space_dim,
                                         const ReferenceElement* background = nullptr,
                                         std::span<const Point> background_nodes = {})
{
  if (rule.family != iface.family())
    throw std::invalid_argument("map_rule_surface: rule family does not match element");
  MappedQuadrature out;
  const int dim = iface.dim();
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const Point& a = rule.points[q];
    const Point r = isoparametric_map(iface, iface_nodes, a);
    Matrix3 J = jacobian(iface, iface_nodes, a);
    Point x = r;
    if (background) {
      J = jacobian(*background, background_nodes, r) * J;
      x = isoparametric_map(*background, background_nodes, r);
    }
    const double g = jacobian_measure(J, dim, space_dim);
    if (!(g > 0) || !std::isfinite(g))
      throw IntegrationInvalid("degenerate tangent at a surface quadrature point");
    out.x.push_back(x);
    out.w.push_back(rule.weights[q] * g);
    out.local.push_back(a);
    out.reference.push_back(r);
  }
  return out;
}

/// sum w_i f(x_i).
template <class F>
double integrate(const MappedQuadrature& mapped, F&& f)
{
  double s = 0.0;
  for (std::size_t i = 0; i < mapped.x.size(); ++i)
    s += mapped.w[i] * f(mapped.x[i]);
  return s;
}

}  // namespace cutmesh
