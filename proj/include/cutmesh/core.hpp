#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cutmesh {

/// Coordinates in reference or physical space. Components beyond the
/// dimension of the owning entity are kept at zero.
using Point = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

/// Sign of a level-set value. Values within `tie` of zero count as positive.
inline int sign_of(double value, double tie = 1e-13)
{
  return value >= -tie ? 1 : -1;
}

/// Per-level-set sign tags of a region (+1 / -1, never 0).
using SignVector = std::vector<std::int8_t>;

/// Encodes a sign vector as a bit pattern: bit k set iff entry k is positive.
inline int sign_code(const SignVector& signs)
{
  int code = 0;
  for (std::size_t k = 0; k < signs.size(); ++k)
    if (signs[k] > 0)
      code |= 1 << k;
  return code;
}

// ---------------------------------------------------------------------------
// Error taxonomy. Root-search and decomposition failures are recoverable and
// drive recursive refinement; the rest surface to the caller.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularPointError : public Error {
 public:
  using Error::Error;
};

class RootSearchFailed : public Error {
 public:
  using Error::Error;
};

class DegenerateGradient : public RootSearchFailed {
 public:
  using RootSearchFailed::RootSearchFailed;
};

class DecompositionFailed : public Error {
 public:
  using Error::Error;
};

class InternalConsistencyError : public Error {
 public:
  using Error::Error;
};

class IntegrationInvalid : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class RefinementExhausted : public Error {
 public:
  RefinementExhausted(const std::string& what, long element, int depth)
      : Error(what), element_(element), depth_(depth)
  {
  }
  long element() const { return element_; }
  int depth() const { return depth_; }

 private:
  long element_;
  int depth_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(key)
  {
  }
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------

inline Point make_point(double x, double y = 0.0, double z = 0.0)
{
  return Point(x, y, z);
}

/// Signed volume factor of the tetrahedron (a, b, c, d), i.e. six times its
/// volume.
inline double orient3d(const Point& a, const Point& b, const Point& c, const Point& d)
{
  return (b - a).dot((c - a).cross(d - a));
}

/// Twice the signed area of the triangle (a, b, c) in the xy-plane.
inline double orient2d(const Point& a, const Point& b, const Point& c)
{
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace cutmesh
