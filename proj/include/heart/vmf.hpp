#pragma once

#include <heart/bessel.hpp>
#include <heart/error.hpp>
#include <heart/sphere.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace heart
{

/// Upper bound for fitted concentrations; duplicate-heavy pools push R -> 1.
inline constexpr double kKappaMax = 1e6;
/// Below this mean resultant length the data has no preferred direction.
inline constexpr double kDegenerateResultant = 1e-8;

/// von Mises-Fisher distribution f(x) = C_D(kappa) exp(kappa mu.x).
struct VmfModel {
  Direction mu;
  double kappa = 0.0;
  /// Mean resultant length of the data the model was fit on (1 for hand-built models).
  double mean_resultant = 1.0;

  Eigen::Index dim() const noexcept { return mu.dim(); }
};

namespace detail
{

/// N x D matrix whose rows are the samples.
inline Matrix stack_rows(std::span<const Direction> samples, const char* op)
{
  if (samples.empty()) {
    throw Error(ErrorCode::PreconditionViolated, op, "no samples");
  }
  const Eigen::Index d = samples.front().dim();
  Matrix x(static_cast<Eigen::Index>(samples.size()), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require_same_dim(d, samples[i].dim(), op);
    x.row(static_cast<Eigen::Index>(i)) = samples[i].coords().transpose();
  }
  return x;
}

/// Lexicographic row order, so fits do not depend on input order.
inline Matrix canonical_rows(const Matrix& x)
{
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (x(a, j) != x(b, j)) {
        return x(a, j) < x(b, j);
      }
    }
    return false;
  });
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(order[i]);
  }
  return out;
}

/// Moment approximation kappa = R(D - R^2) / (1 - R^2), clipped to [0, kKappaMax].
inline double approximate_kappa(double resultant, Eigen::Index dim)
{
  const double r = std::clamp(resultant, 0.0, 1.0);
  const double denom = 1.0 - r * r;
  if (denom <= 0.0) {
    return kKappaMax;
  }
  const double k = r * (static_cast<double>(dim) - r * r) / denom;
  return std::clamp(k, 0.0, kKappaMax);
}

/// Weighted vMF fit on rows of x; weights need not be normalized.
inline VmfModel fit_vmf_weighted(const Matrix& x, const Vector& weights, const char* op)
{
  const double total = weights.sum();
  const Vector mean = (x.transpose() * weights) / total;
  const double r = std::min(mean.norm(), 1.0);
  if (!(r >= kDegenerateResultant)) {
    throw Error(ErrorCode::DegenerateMean, op, "mean resultant length " + std::to_string(r));
  }
  return VmfModel{Direction{mean / mean.norm()}, approximate_kappa(r, x.cols()), r};
}

inline double vmf_log_likelihood(const VmfModel& m, const Matrix& x)
{
  const double log_c = special::vmf_log_normalizer(static_cast<int>(m.dim()), m.kappa);
  return static_cast<double>(x.rows()) * log_c + m.kappa * (x * m.mu.coords()).sum();
}

/// Unit vector uniformly distributed on the sphere orthogonal to mu.
template <class Rng>
Vector uniform_tangent(const Direction& mu, Rng& rng)
{
  std::normal_distribution<double> normal;
  for (;;) {
    Vector g(mu.dim());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      g(i) = normal(rng);
    }
    g -= g.dot(mu.coords()) * mu.coords();
    const double n = g.norm();
    if (n > 1e-12) {
      return g / n;
    }
  }
}

/**
 * Wood (1994) rejection sampler for the cosine w = mu.x of a vMF draw.
 * Returns w in [-1, 1].
 */
template <class Rng>
double sample_vmf_cosine(double kappa, Eigen::Index dim, Rng& rng)
{
  const double m1 = static_cast<double>(dim) - 1.0;
  const double b = m1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + m1 * m1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + m1 * std::log(1.0 - x0 * x0);
  std::gamma_distribution<double> gamma(0.5 * m1, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (;;) {
    const double g1 = gamma(rng);
    const double g2 = gamma(rng);
    const double z = g1 / (g1 + g2);
    const double w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = uniform(rng);
    if (kappa * w + m1 * std::log(1.0 - x0 * w) - c >= std::log(u)) {
      return std::clamp(w, -1.0, 1.0);
    }
  }
}

}  // namespace detail

/// Moment fit: mean direction, mean resultant length, approximate kappa.
inline VmfModel fit_vmf(std::span<const Direction> samples)
{
  if (samples.size() < 2) {
    throw Error(ErrorCode::PreconditionViolated, "fit_vmf", "need N >= 2, got " + std::to_string(samples.size()));
  }
  const Matrix x = detail::stack_rows(samples, "fit_vmf");
  return detail::fit_vmf_weighted(x, Vector::Ones(x.rows()), "fit_vmf");
}

/// log density of one direction under the model.
inline double log_density(const VmfModel& m, const Direction& x)
{
  detail::require_same_dim(m.dim(), x.dim(), "log_density");
  return special::vmf_log_normalizer(static_cast<int>(m.dim()), m.kappa) + m.kappa * m.mu.coords().dot(x.coords());
}

inline double log_likelihood(const VmfModel& m, std::span<const Direction> samples)
{
  const Matrix x = detail::stack_rows(samples, "log_likelihood");
  detail::require_same_dim(m.dim(), x.cols(), "log_likelihood");
  return detail::vmf_log_likelihood(m, x);
}

/// i.i.d. draws; identical output for identical (model, n, seed).
inline std::vector<Direction> sample_vmf(const VmfModel& m, std::size_t n, std::uint64_t seed)
{
  if (n < 1) {
    throw Error(ErrorCode::PreconditionViolated, "sample_vmf", "n must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::vector<Direction> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = detail::sample_vmf_cosine(m.kappa, m.dim(), rng);
    const Vector v = detail::uniform_tangent(m.mu, rng);
    Vector x = w * m.mu.coords() + std::sqrt(std::max(0.0, 1.0 - w * w)) * v;
    out.push_back(detail::renormalized(std::move(x)));
  }
  return out;
}

}  // namespace heart
