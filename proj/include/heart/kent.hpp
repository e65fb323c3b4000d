#pragma once

#include <heart/bessel.hpp>
#include <heart/error.hpp>
#include <heart/sphere.hpp>
#include <heart/vmf.hpp>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace heart
{

/// beta is clipped to this fraction of kappa at fit time (validity needs beta < kappa/2).
inline constexpr double kMaxBetaRatio = 0.499;

/**
 * Kent (FB5-type) distribution on S^{D-1}:
 *   f(x) ∝ exp(kappa mu.x + beta [(gamma1.x)^2 - (gamma2.x)^2])
 * with {mu, gamma1, gamma2} orthonormal and 0 <= beta < kappa/2.
 */
struct KentModel {
  Direction mu;
  double kappa = 0.0;
  double beta = 0.0;
  Direction gamma1;
  Direction gamma2;

  Eigen::Index dim() const noexcept { return mu.dim(); }
  double anisotropy() const noexcept { return kappa > 0.0 ? beta / kappa : 0.0; }
};

/// Throws unless the frame is orthonormal and 0 <= beta < kappa/2 (beta = 0 always allowed).
inline void validate(const KentModel& m, const char* op = "validate")
{
  detail::require_same_dim(m.mu.dim(), m.gamma1.dim(), op);
  detail::require_same_dim(m.mu.dim(), m.gamma2.dim(), op);
  if (m.dim() < 3) {
    throw Error(ErrorCode::DimMismatch, op, "Kent needs D >= 3");
  }
  const double d01 = std::abs(m.mu.coords().dot(m.gamma1.coords()));
  const double d02 = std::abs(m.mu.coords().dot(m.gamma2.coords()));
  const double d12 = std::abs(m.gamma1.coords().dot(m.gamma2.coords()));
  if (std::max({d01, d02, d12}) > kUnitTolerance) {
    throw Error(ErrorCode::PreconditionViolated, op, "mu, gamma1, gamma2 are not orthonormal");
  }
  if (!(m.kappa >= 0.0) || !(m.beta >= 0.0) || (m.beta > 0.0 && !(2.0 * m.beta < m.kappa))) {
    throw Error(ErrorCode::PreconditionViolated, op,
                "need 0 <= beta < kappa/2 (kappa=" + std::to_string(m.kappa) + ", beta=" + std::to_string(m.beta) +
                  ")");
  }
}

namespace special
{

/**
 * Classical series for the S^2 Kent normalizer (surface measure):
 *   c(kappa, beta) = 2 pi sum_j Gamma(j+1/2)/Gamma(j+1) beta^{2j} (kappa/2)^{-2j-1/2} I_{2j+1/2}(kappa)
 */
inline double kent_log_normalizer_series3(double kappa, double beta)
{
  if (kappa <= 0.0) {
    return std::log(4.0 * std::numbers::pi);
  }
  const double log_half_k = std::log(0.5 * kappa);
  const double log_beta = beta > 0.0 ? std::log(beta) : -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  double peak = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < 100000; ++j) {
    const double jj = j;
    const double lt = std::lgamma(jj + 0.5) - std::lgamma(jj + 1.0) + (j == 0 ? 0.0 : 2.0 * jj * log_beta) -
                      (2.0 * jj + 0.5) * log_half_k + log_bessel_i(2.0 * jj + 0.5, kappa);
    terms.push_back(lt);
    peak = std::max(peak, lt);
    if (beta == 0.0 || (j > 2 && lt < peak - 40.0 && lt < terms[terms.size() - 2])) {
      break;
    }
  }
  double sum = 0.0;
  for (double t : terms) {
    sum += std::exp(t - peak);
  }
  return std::log(2.0 * std::numbers::pi) + peak + std::log(sum);
}

/**
 * Saddle-point approximation (third order, Kume & Wood 2005) to the
 * Fisher-Bingham normalizer
 *   C = ∫ exp(-sum_i lambda_i x_i^2 + sum_i g_i x_i) dS(x)
 * with axis groups of multiplicity m_i. Exact in the limit of many
 * dimensions; the Kent case is lambda = (0, -beta, +beta, 0...) and
 * g = (kappa, 0, 0, 0...).
 */
struct FbAxisGroup {
  double lambda;
  double linear;
  double multiplicity;
};

inline double fisher_bingham_log_normalizer_saddlepoint(std::span<const FbAxisGroup> groups)
{
  double dim = 0.0;
  double lambda_min = std::numeric_limits<double>::infinity();
  double g2_total = 0.0;
  for (const auto& a : groups) {
    if (a.multiplicity <= 0.0) {
      continue;
    }
    dim += a.multiplicity;
    lambda_min = std::min(lambda_min, a.lambda);
    g2_total += a.multiplicity * a.linear * a.linear;
  }
  // K'(t) - 1 as a function of u = lambda_min - t > 0; strictly decreasing in u.
  auto k1_minus_one = [&](double u) {
    double s = 0.0;
    for (const auto& a : groups) {
      if (a.multiplicity <= 0.0) {
        continue;
      }
      const double r = a.lambda - lambda_min + u;
      s += a.multiplicity * (0.5 / r + 0.25 * a.linear * a.linear / (r * r));
    }
    return s - 1.0;
  };
  double lo = 1e-300;
  double hi = dim + std::sqrt(g2_total) + 1.0;
  while (k1_minus_one(hi) > 0.0) {
    hi *= 2.0;
  }
  for (int it = 0; it < 300 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = it < 200 ? std::sqrt(lo) * std::sqrt(hi) : 0.5 * (lo + hi);
    (k1_minus_one(mid) > 0.0 ? lo : hi) = mid;
  }
  const double u = 0.5 * (lo + hi);
  const double t = lambda_min - u;

  double k2 = 0.0;
  double k3 = 0.0;
  double k4 = 0.0;
  double log_det = 0.0;
  double quad = 0.0;
  for (const auto& a : groups) {
    if (a.multiplicity <= 0.0) {
      continue;
    }
    const double r = a.lambda - t;
    const double g2 = a.linear * a.linear;
    const double m = a.multiplicity;
    k2 += m * (0.5 / (r * r) + 0.5 * g2 / (r * r * r));
    k3 += m * (1.0 / (r * r * r) + 1.5 * g2 / (r * r * r * r));
    k4 += m * (3.0 / (r * r * r * r) + 6.0 * g2 / (r * r * r * r * r));
    log_det += m * std::log(r);
    quad += m * 0.25 * g2 / r;
  }
  const double rho3 = k3 / std::pow(k2, 1.5);
  const double rho4 = k4 / (k2 * k2);
  const double correction = rho4 / 8.0 - 5.0 * rho3 * rho3 / 24.0;
  return std::log(2.0) + 0.5 * dim * std::log(std::numbers::pi) - 0.5 * log_det -
         0.5 * std::log(2.0 * std::numbers::pi * k2) + quad - t + correction;
}

inline double kent_log_normalizer_saddlepoint(int dim, double kappa, double beta)
{
  const std::array<FbAxisGroup, 4> groups{{
    {0.0, kappa, 1.0},
    {-beta, 0.0, 1.0},
    {beta, 0.0, 1.0},
    {0.0, 0.0, static_cast<double>(dim - 3)},
  }};
  return fisher_bingham_log_normalizer_saddlepoint(groups);
}

/// log normalizer used for Kent likelihoods: series on S^2, saddle point above.
inline double kent_log_normalizer(int dim, double kappa, double beta)
{
  return dim == 3 ? kent_log_normalizer_series3(kappa, beta) : kent_log_normalizer_saddlepoint(dim, kappa, beta);
}

}  // namespace special

namespace detail
{

struct KentSufficient {
  double n = 0.0;
  double sum_mu = 0.0;       ///< sum mu.x
  double sum_aniso = 0.0;    ///< sum (g1.x)^2 - (g2.x)^2
};

inline KentSufficient kent_statistics(const Direction& mu, const Direction& g1, const Direction& g2, const Matrix& x)
{
  const Vector c = x * mu.coords();
  const Vector t1 = x * g1.coords();
  const Vector t2 = x * g2.coords();
  return {static_cast<double>(x.rows()), c.sum(), t1.squaredNorm() - t2.squaredNorm()};
}

inline double kent_log_likelihood(int dim, double kappa, double beta, const KentSufficient& s)
{
  return kappa * s.sum_mu + beta * s.sum_aniso - s.n * special::kent_log_normalizer(dim, kappa, beta);
}

/// Some unit vector orthogonal to every column of basis (columns orthonormal).
inline Vector orthogonal_complement_vector(const Matrix& basis)
{
  const Eigen::Index d = basis.rows();
  for (Eigen::Index axis = 0; axis < d; ++axis) {
    Vector v = Vector::Zero(d);
    v(axis) = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      v -= basis * (basis.transpose() * v);
    }
    const double n = v.norm();
    if (n > 0.5) {
      return v / n;
    }
  }
  throw Error(ErrorCode::DimMismatch, "orthogonal_complement_vector", "no room for another axis");
}

}  // namespace detail

struct KentFitOptions {
  /// Refine (kappa, beta) by maximizing the approximate likelihood, starting from the moment fit.
  bool refine_mle = true;
  int max_refine_iterations = 200;
};

struct KentFit {
  KentModel model;
  double mean_resultant = 0.0;
  /// Tangent-scatter eigenvalues along gamma1 and gamma2.
  std::array<double, 2> scatter_eigenvalues{};
  /// Set when the gamma1/gamma2 eigenvalues are not distinct: axes arbitrary, beta = 0.
  bool rank_deficient = false;
  bool refined = false;
  /// Moment estimates before refinement.
  double moment_kappa = 0.0;
  double moment_beta = 0.0;
};

/// Eigenpairs of the tangent scatter picked as Kent axes.
struct TangentAxes {
  std::array<double, 2> values{};  ///< variance along the major and minor axis
  Matrix vectors;                  ///< D x 2, columns for the major and minor axis
  bool full_rank = false;          ///< every tangent direction carries sample variance
};

/**
 * Major and minor axes of the tangent scatter S = (1/N) sum P x x^T P with
 * P = I - mu mu^T.
 *
 * Under a Kent density the gamma1 direction has the largest tangent variance
 * and gamma2 the smallest (the remaining D-3 directions sit in between). The
 * minor axis is therefore the smallest tangent eigenvector when the scatter
 * has full tangent rank (N > D). With fewer samples the smallest eigenvalues
 * only reflect missing data, so the second largest is used instead. When
 * N < D the N x N Gram matrix is decomposed and its eigenvectors are lifted
 * back, so S is never formed.
 */
inline TangentAxes tangent_scatter_axes(const Matrix& x, const Direction& mu)
{
  const double n = static_cast<double>(x.rows());
  const Eigen::Index dim = x.cols();
  const Matrix y = x - (x * mu.coords()) * mu.coords().transpose();
  TangentAxes out;
  out.vectors = Matrix::Zero(dim, 2);
  out.full_rank = x.rows() > dim;
  if (!out.full_rank) {
    const Matrix gram = (y * y.transpose()) / n;
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    const Eigen::Index m = gram.rows();
    for (int k = 0; k < 2 && k < m; ++k) {
      const double lam = std::max(es.eigenvalues()(m - 1 - k), 0.0);
      out.values[static_cast<std::size_t>(k)] = lam;
      if (lam > 0.0) {
        Vector v = y.transpose() * es.eigenvectors().col(m - 1 - k);
        out.vectors.col(k) = v / v.norm();
      }
    }
    return out;
  }
  const Matrix scatter = (y.transpose() * y) / n;
  Eigen::SelfAdjointEigenSolver<Matrix> es(scatter);
  // ascending order; the mu direction holds the (near) zero eigenvalue
  Eigen::Index mu_slot = 0;
  (es.eigenvectors().transpose() * mu.coords()).cwiseAbs().maxCoeff(&mu_slot);
  const Eigen::Index top = dim - 1 == mu_slot ? dim - 2 : dim - 1;
  Eigen::Index minor = mu_slot == 0 ? 1 : 0;
  if (dim == 3) {
    minor = 3 - top - mu_slot;
  }
  out.values = {std::max(es.eigenvalues()(top), 0.0), std::max(es.eigenvalues()(minor), 0.0)};
  out.vectors.col(0) = es.eigenvectors().col(top);
  out.vectors.col(1) = es.eigenvectors().col(minor);
  return out;
}

namespace detail
{

/// Maximizes the approximate log-likelihood over (kappa, beta) with the axes held fixed.
inline std::pair<double, double> refine_kent_mle(int dim, double kappa0, double beta0, const KentSufficient& s,
                                                 int max_iter)
{
  // kappa = exp(a), beta = kappa * kMaxBetaRatio * logistic(b)
  auto unpack = [](double a, double b) {
    const double kappa = std::exp(a);
    return std::pair{kappa, kappa * kMaxBetaRatio / (1.0 + std::exp(-b))};
  };
  auto objective = [&](double a, double b) {
    const auto [k, be] = unpack(a, b);
    return kent_log_likelihood(dim, k, be, s);
  };
  double a = std::log(std::max(kappa0, 1e-6));
  const double ratio0 = std::clamp(beta0 / (kappa0 * kMaxBetaRatio), 1e-6, 1.0 - 1e-6);
  double b = std::log(ratio0 / (1.0 - ratio0));
  double f = objective(a, b);
  double step = 0.1;
  for (int it = 0; it < max_iter; ++it) {
    const double h = 1e-5;
    const double ga = (objective(a + h, b) - objective(a - h, b)) / (2.0 * h);
    const double gb = (objective(a, b + h) - objective(a, b - h)) / (2.0 * h);
    const double gn = std::hypot(ga, gb);
    if (gn < 1e-8 * std::max(1.0, std::abs(f))) {
      break;
    }
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls) {
      const double na = a + step * ga / gn;
      const double nb = b + step * gb / gn;
      const double nf = objective(na, nb);
      if (nf > f) {
        a = na;
        b = nb;
        f = nf;
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved || step < 1e-12) {
      break;
    }
  }
  auto [kappa, beta] = unpack(a, b);
  return {std::min(kappa, kKappaMax), beta};
}

}  // namespace detail

/**
 * Kent fit: moment estimates, optionally refined by maximum likelihood.
 *
 * mu is the normalized sample mean; gamma1/gamma2 come from
 * tangent_scatter_axes. With g the eigenvalue gap between them:
 *  - D = 3: Kent's estimator
 *      kappa = 1/(2-2R-g) + 1/(2-2R+g),  beta = (1/(2-2R-g) - 1/(2-2R+g)) / 2
 *  - D > 3: kappa from R as in fit_vmf, and beta solving the tangent-Gaussian
 *    gap relation g = 4 beta / (kappa^2 - 4 beta^2).
 * beta is clipped to [0, 0.499 kappa]. Refinement then maximizes the
 * approximate likelihood over (kappa, beta) with the axes fixed.
 */
inline KentFit fit_kent(std::span<const Direction> samples, const KentFitOptions& options = {})
{
  constexpr const char* op = "fit_kent";
  if (samples.size() < 4) {
    throw Error(ErrorCode::PreconditionViolated, op, "need N >= 4, got " + std::to_string(samples.size()));
  }
  // canonical order makes the fit independent of input order
  const Matrix x = detail::canonical_rows(detail::stack_rows(samples, op));
  const Eigen::Index dim = x.cols();
  if (dim < 3) {
    throw Error(ErrorCode::DimMismatch, op, "Kent needs D >= 3");
  }
  const Vector mean = x.colwise().mean().transpose();
  const double r = std::min(mean.norm(), 1.0);
  if (!(r >= kDegenerateResultant)) {
    throw Error(ErrorCode::DegenerateMean, op, "mean resultant length " + std::to_string(r));
  }
  Direction mu{mean / mean.norm()};

  const TangentAxes axes = tangent_scatter_axes(x, mu);
  const auto& eig = axes.values;
  KentFit fit{KentModel{mu, 0.0, 0.0, mu, mu}, r, eig, false, false};

  const bool distinct = eig[0] - eig[1] > 1e-12 && (axes.full_rank || eig[1] > 1e-12);
  Matrix frame(dim, 2);
  frame.col(0) = mu.coords();
  if (eig[0] > 1e-12) {
    Vector g1 = axes.vectors.col(0);
    g1 -= g1.dot(mu.coords()) * mu.coords();
    frame.col(1) = g1 / g1.norm();
  } else {
    frame.col(1) = detail::orthogonal_complement_vector(frame.leftCols(1));
  }
  Vector g2;
  if (distinct) {
    g2 = axes.vectors.col(1);
    g2 -= frame * (frame.transpose() * g2);
    g2 /= g2.norm();
  } else {
    g2 = detail::orthogonal_complement_vector(frame);
  }
  fit.model.gamma1 = Direction{Vector(frame.col(1))};
  fit.model.gamma2 = Direction{g2};
  fit.rank_deficient = !distinct;

  const double gap = eig[0] - eig[1];
  double kappa = 0.0;
  double beta = 0.0;
  if (dim == 3) {
    const double base = 2.0 - 2.0 * r;
    const double lo = base - gap;
    const double hi = base + gap;
    if (lo <= 0.0 || hi <= 0.0) {
      kappa = kKappaMax;
    } else {
      kappa = std::min(1.0 / lo + 1.0 / hi, kKappaMax);
      beta = 0.5 * (1.0 / lo - 1.0 / hi);
    }
  } else {
    kappa = detail::approximate_kappa(r, dim);
    if (gap > 0.0) {
      beta = (std::sqrt(1.0 + gap * gap * kappa * kappa) - 1.0) / (2.0 * gap);
    }
  }
  if (fit.rank_deficient) {
    beta = 0.0;
  }
  beta = std::clamp(beta, 0.0, kMaxBetaRatio * kappa);
  fit.moment_kappa = kappa;
  fit.moment_beta = beta;

  if (options.refine_mle && !fit.rank_deficient && kappa > 0.0 && kappa < kKappaMax) {
    const auto stats = detail::kent_statistics(fit.model.mu, fit.model.gamma1, fit.model.gamma2, x);
    std::tie(kappa, beta) =
      detail::refine_kent_mle(static_cast<int>(dim), kappa, beta, stats, options.max_refine_iterations);
    fit.refined = true;
  }
  fit.model.kappa = kappa;
  fit.model.beta = beta;
  return fit;
}

/// Unnormalized log density kappa mu.x + beta[(g1.x)^2 - (g2.x)^2].
inline double unnormalized_log_density(const KentModel& m, const Direction& x)
{
  detail::require_same_dim(m.dim(), x.dim(), "unnormalized_log_density");
  const double t1 = m.gamma1.coords().dot(x.coords());
  const double t2 = m.gamma2.coords().dot(x.coords());
  return m.kappa * m.mu.coords().dot(x.coords()) + m.beta * (t1 * t1 - t2 * t2);
}

inline double log_density(const KentModel& m, const Direction& x)
{
  return unnormalized_log_density(m, x) - special::kent_log_normalizer(static_cast<int>(m.dim()), m.kappa, m.beta);
}

inline double log_likelihood(const KentModel& m, std::span<const Direction> samples)
{
  validate(m, "log_likelihood");
  const Matrix x = detail::stack_rows(samples, "log_likelihood");
  detail::require_same_dim(m.dim(), x.cols(), "log_likelihood");
  const auto s = detail::kent_statistics(m.mu, m.gamma1, m.gamma2, x);
  return detail::kent_log_likelihood(static_cast<int>(m.dim()), m.kappa, m.beta, s);
}

struct KentSamples {
  std::vector<Direction> directions;
  double acceptance_rate = 1.0;
  /// Acceptance fell below 1% of proposals.
  bool low_acceptance = false;
};

/**
 * Exact rejection sampler.
 *
 * With c = mu.x and any c0 in (0, 1], kappa c <= kappa (c^2 + c0^2) / (2 c0),
 * so the target is dominated by a Bingham density, which in turn is
 * dominated by an angular central Gaussian envelope (Kent, Ganeiber &
 * Mardia 2018). c0 is set to the vMF mean cosine, where the first bound is
 * tight. Efficiency stays bounded as beta grows, unlike a plain vMF
 * proposal whose acceptance decays like exp(-beta).
 */
inline KentSamples sample_kent(const KentModel& m, std::size_t n, std::uint64_t seed)
{
  constexpr const char* op = "sample_kent";
  validate(m, op);
  if (n < 1) {
    throw Error(ErrorCode::PreconditionViolated, op, "n must be >= 1");
  }
  const double d = static_cast<double>(m.dim());
  double c0 = 1.0;
  if (m.kappa > 0.0) {
    const double half_d = 0.5 * d;
    c0 = std::exp(special::log_bessel_i(half_d, m.kappa) - special::log_bessel_i(half_d - 1.0, m.kappa));
    c0 = std::clamp(c0, 1e-3, 1.0);
  }
  const double half_k = 0.5 * m.kappa / c0;
  // Bingham matrix A (x^T A x penalty) eigenvalues in the frame (mu, g1, g2, rest).
  const std::array<double, 4> a{0.0, half_k - m.beta, half_k + m.beta, half_k};
  const std::array<double, 4> mult{1.0, 1.0, 1.0, d - 3.0};
  auto envelope_eq = [&](double b) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      s += mult[i] / (b + 2.0 * a[i]);
    }
    return s - 1.0;
  };
  double lo = 1e-12;
  double hi = d;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (envelope_eq(mid) > 0.0 ? lo : hi) = mid;
  }
  const double b = hi;
  std::array<double, 4> sd{};
  for (std::size_t i = 0; i < 4; ++i) {
    sd[i] = 1.0 / std::sqrt(1.0 + 2.0 * a[i] / b);
  }
  // log of the envelope constant exp(-(D-b)/2) (D/b)^{D/2}
  const double log_envelope = -0.5 * (d - b) + 0.5 * d * std::log(d / b);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Vector& mu = m.mu.coords();
  const Vector& g1 = m.gamma1.coords();
  const Vector& g2 = m.gamma2.coords();

  KentSamples out;
  out.directions.reserve(n);
  std::uint64_t proposals = 0;
  while (out.directions.size() < n) {
    ++proposals;
    Vector rest(m.dim());
    for (Eigen::Index i = 0; i < rest.size(); ++i) {
      rest(i) = normal(rng);
    }
    rest -= rest.dot(mu) * mu + rest.dot(g1) * g1 + rest.dot(g2) * g2;
    rest *= sd[3];
    const double y0 = sd[0] * normal(rng);
    const double y1 = sd[1] * normal(rng);
    const double y2 = sd[2] * normal(rng);
    Vector z = y0 * mu + y1 * g1 + y2 * g2 + rest;
    const double zn = z.norm();
    if (!(zn > 0.0)) {
      continue;
    }
    z /= zn;
    const double c = z.dot(mu);
    const double t1 = z.dot(g1);
    const double t2 = z.dot(g2);
    const double rest2 = std::max(0.0, 1.0 - c * c - t1 * t1 - t2 * t2);
    const double quad = a[1] * t1 * t1 + a[2] * t2 * t2 + a[3] * rest2;
    const double log_ratio = -quad + 0.5 * d * std::log1p(2.0 * quad / b) - log_envelope -
                             half_k * (c - c0) * (c - c0);
    if (std::log(uniform(rng)) < log_ratio) {
      out.directions.push_back(Direction{std::move(z)});
    }
  }
  out.acceptance_rate = static_cast<double>(n) / static_cast<double>(proposals);
  out.low_acceptance = out.acceptance_rate < 0.01;
  return out;
}

}  // namespace heart
