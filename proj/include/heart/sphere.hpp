#pragma once

#include <heart/error.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace heart
{

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kUnitTolerance = 1e-6;
inline constexpr double kDefaultNormEps = 1e-8;
/// slerp / log_map refuse pairs closer than this to antipodal.
inline constexpr double kAntipodalMargin = 1e-6;
/// Below this angle two directions are treated as coincident.
inline constexpr double kCoincidentAngle = 1e-7;

/**
 * A point on the unit hypersphere S^{D-1}, D >= 2.
 *
 * Construction is checked: the coordinates must already have unit norm
 * within 1e-6. Use normalize() to obtain a Direction from an arbitrary
 * non-zero vector.
 */
class Direction
{
public:
  explicit Direction(Vector coords) : coords_{std::move(coords)}
  {
    if (coords_.size() < 2) {
      throw Error(ErrorCode::DimMismatch, "Direction", "D=" + std::to_string(coords_.size()) + " < 2");
    }
    const double n = coords_.norm();
    if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitTolerance) {
      throw Error(ErrorCode::PreconditionViolated, "Direction", "norm=" + std::to_string(n) + " is not 1");
    }
  }

  /// Basis vector e_axis in D dimensions.
  static Direction axis(Eigen::Index dim, Eigen::Index axis)
  {
    Vector v = Vector::Zero(dim);
    v(axis) = 1.0;
    return Direction{std::move(v)};
  }

  const Vector& coords() const noexcept { return coords_; }
  Eigen::Index dim() const noexcept { return coords_.size(); }
  double operator[](Eigen::Index i) const { return coords_(i); }

  Direction operator-() const
  {
    Direction out = *this;
    out.coords_ = -out.coords_;
    return out;
  }

private:
  Vector coords_;
};

/// A vector in the tangent space T_base S^{D-1}.
struct TangentVector {
  Direction base;
  Vector coords;

  double norm() const { return coords.norm(); }
};

struct Normalized {
  Direction direction;
  double norm;
};

namespace detail
{

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* op)
{
  if (a != b) {
    throw Error(ErrorCode::DimMismatch, op, std::to_string(a) + " vs " + std::to_string(b));
  }
}

/// Rescale to exact unit length; the input is already unit up to rounding.
inline Direction renormalized(Vector v)
{
  v /= v.norm();
  return Direction{std::move(v)};
}

}  // namespace detail

/// Splits v into its unit direction and Euclidean norm.
inline Normalized normalize(const Vector& v, double eps = kDefaultNormEps)
{
  const double n = v.norm();
  if (!(n > eps)) {
    throw Error(ErrorCode::NearZeroVector, "normalize", "norm=" + std::to_string(n));
  }
  return {Direction{v / n}, n};
}

/**
 * Great-circle angle between two unit vectors, in [0, pi].
 *
 * Evaluated as 2 atan2(|u - v|, |u + v|), which agrees with arccos of the
 * clamped dot product, keeps full precision near 0 and pi, and is exactly
 * zero for identical inputs.
 */
inline double geodesic_distance(const Direction& u, const Direction& v)
{
  detail::require_same_dim(u.dim(), v.dim(), "geodesic_distance");
  return 2.0 * std::atan2((u.coords() - v.coords()).norm(), (u.coords() + v.coords()).norm());
}

/**
 * Point at fraction lambda along the great circle from u to v.
 *
 * lambda outside [0, 1] extrapolates along the same circle. Pairs closer
 * than 1e-7 rad return u; antipodal pairs have no unique geodesic.
 */
inline Direction slerp(const Direction& u, const Direction& v, double lambda)
{
  detail::require_same_dim(u.dim(), v.dim(), "slerp");
  const double theta = geodesic_distance(u, v);
  if (theta >= std::numbers::pi - kAntipodalMargin) {
    throw Error(ErrorCode::AntipodalPoints, "slerp", "theta=" + std::to_string(theta));
  }
  if (theta < kCoincidentAngle) {
    return u;
  }
  const double s = std::sin(theta);
  Vector out = (std::sin((1.0 - lambda) * theta) / s) * u.coords() + (std::sin(lambda * theta) / s) * v.coords();
  return detail::renormalized(std::move(out));
}

/// Tangent vector at u pointing toward v with length theta(u, v).
inline TangentVector log_map(const Direction& u, const Direction& v)
{
  detail::require_same_dim(u.dim(), v.dim(), "log_map");
  const double theta = geodesic_distance(u, v);
  if (theta >= std::numbers::pi - kAntipodalMargin) {
    throw Error(ErrorCode::AntipodalPoints, "log_map", "theta=" + std::to_string(theta));
  }
  Vector w = v.coords() - u.coords().dot(v.coords()) * u.coords();
  // remove the rounding residue along u
  w -= w.dot(u.coords()) * u.coords();
  const double wn = w.norm();
  if (wn == 0.0) {
    return {u, Vector::Zero(u.dim())};
  }
  return {u, w * (theta / wn)};
}

/// Lifts a tangent vector at u back onto the sphere along its geodesic.
inline Direction exp_map(const Direction& u, const Vector& xi)
{
  detail::require_same_dim(u.dim(), xi.size(), "exp_map");
  const double radial = xi.dot(u.coords());
  if (std::abs(radial) > 1e-5) {
    throw Error(ErrorCode::TangentNotAtBase, "exp_map", "<xi,u>=" + std::to_string(radial));
  }
  const double n = xi.norm();
  if (n < 1e-9) {
    return u;
  }
  Vector out = std::cos(n) * u.coords() + (std::sin(n) / n) * xi;
  return detail::renormalized(std::move(out));
}

inline Direction exp_map(const Direction& u, const TangentVector& xi)
{
  detail::require_same_dim(u.dim(), xi.base.dim(), "exp_map");
  if ((u.coords() - xi.base.coords()).norm() > kUnitTolerance) {
    throw Error(ErrorCode::TangentNotAtBase, "exp_map", "tangent base differs from u");
  }
  return exp_map(u, xi.coords);
}

/// Removes the radial component of delta at u.
inline Vector tangent_project(const Direction& u, const Vector& delta)
{
  detail::require_same_dim(u.dim(), delta.size(), "tangent_project");
  return delta - delta.dot(u.coords()) * u.coords();
}

}  // namespace heart
