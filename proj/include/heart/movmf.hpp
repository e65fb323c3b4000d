#pragma once

#include <heart/bessel.hpp>
#include <heart/error.hpp>
#include <heart/sphere.hpp>
#include <heart/vmf.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace heart
{

struct MovmfComponent {
  double weight;
  VmfModel model;
};

/// Mixture of von Mises-Fisher components; weights are positive and sum to 1.
struct MovmfModel {
  std::vector<MovmfComponent> components;

  int size() const noexcept { return static_cast<int>(components.size()); }
  Eigen::Index dim() const { return components.front().model.dim(); }
};

inline void validate(const MovmfModel& m, const char* op = "validate")
{
  if (m.components.empty()) {
    throw Error(ErrorCode::PreconditionViolated, op, "mixture has no components");
  }
  double total = 0.0;
  for (const auto& c : m.components) {
    detail::require_same_dim(m.dim(), c.model.dim(), op);
    if (!(c.weight > 0.0)) {
      throw Error(ErrorCode::PreconditionViolated, op, "non-positive component weight");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::PreconditionViolated, op, "weights sum to " + std::to_string(total));
  }
}

struct MovmfOptions {
  int components = 2;
  std::uint64_t seed = 0;
  int max_iter = 200;
  /// Stop once the log-likelihood gain is below tol * max(1, |logL|).
  double tol = 1e-6;
};

struct MovmfFit {
  MovmfModel model;
  /// Log-likelihood after each E-step, starting with the initial model.
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  bool converged = false;
  int reseeds = 0;
};

namespace detail
{

/// N x K matrix of log(w_k) + log f_k(x_i).
inline Matrix component_log_densities(const MovmfModel& m, const Matrix& x)
{
  Matrix out(x.rows(), m.size());
  for (int k = 0; k < m.size(); ++k) {
    const auto& c = m.components[static_cast<std::size_t>(k)];
    const double log_c = special::vmf_log_normalizer(static_cast<int>(x.cols()), c.model.kappa);
    out.col(k) = (c.model.kappa * (x * c.model.mu.coords())).array() + (std::log(c.weight) + log_c);
  }
  return out;
}

/// Row-wise log-sum-exp; writes normalized responsibilities into resp.
inline double e_step(const MovmfModel& m, const Matrix& x, Matrix& resp)
{
  resp = component_log_densities(m, x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    const double peak = resp.row(i).maxCoeff();
    const double lse = peak + std::log((resp.row(i).array() - peak).exp().sum());
    resp.row(i) = (resp.row(i).array() - lse).exp();
    total += lse;
  }
  return total;
}

inline double movmf_log_likelihood(const MovmfModel& m, const Matrix& x)
{
  Matrix resp;
  return e_step(m, x, resp);
}

/// Spherical k-means++ seeding (distance 1 - cos) followed by one hard assignment.
inline MovmfModel kmeanspp_init(const Matrix& x, int k, std::mt19937_64& rng)
{
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Index> centers;
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.push_back(pick(rng));
  Vector best_cos = x * x.row(centers[0]).transpose();
  while (static_cast<int>(centers.size()) < k) {
    Vector dist = (1.0 - best_cos.array()).max(0.0).matrix();
    const double total = dist.sum();
    Eigen::Index next = 0;
    if (total <= 0.0) {
      next = pick(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (next = 0; next < n - 1; ++next) {
        target -= dist(next);
        if (target <= 0.0) {
          break;
        }
      }
    }
    centers.push_back(next);
    best_cos = best_cos.cwiseMax(x * x.row(next).transpose());
  }

  Matrix cos = Matrix(x.rows(), k);
  for (int c = 0; c < k; ++c) {
    cos.col(c) = x * x.row(centers[static_cast<std::size_t>(c)]).transpose();
  }
  Matrix assign = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    cos.row(i).maxCoeff(&arg);
    assign(i, arg) = 1.0;
  }

  const VmfModel global = fit_vmf_weighted(x, Vector::Ones(n), "fit_movmf");
  MovmfModel m;
  for (int c = 0; c < k; ++c) {
    const Vector w = assign.col(c);
    const double count = w.sum();
    VmfModel comp = global;
    if (count >= 2.0) {
      try {
        comp = fit_vmf_weighted(x, w, "fit_movmf");
      } catch (const Error&) {
        comp = global;
      }
    }
    if (count < 2.0 || comp.mean_resultant < kDegenerateResultant) {
      comp.mu = Direction{Vector(x.row(centers[static_cast<std::size_t>(c)]).transpose())};
    }
    m.components.push_back({std::max(count, 1.0) / static_cast<double>(n), comp});
  }
  double total = 0.0;
  for (const auto& c : m.components) {
    total += c.weight;
  }
  for (auto& c : m.components) {
    c.weight /= total;
  }
  return m;
}

/// Expected complete-data log-likelihood of one component, up to constants.
inline double component_objective(double mass, double resultant, double kappa, Eigen::Index dim)
{
  return mass * (special::vmf_log_normalizer(static_cast<int>(dim), kappa) + kappa * resultant);
}

}  // namespace detail

/**
 * EM for a K-component vMF mixture.
 *
 * Each M-step sets weights and mean directions to their exact maximizers
 * and takes the moment kappa of the weighted fit_vmf unless it would lower
 * the expected complete-data log-likelihood, in which case kappa is kept.
 * The observed log-likelihood is therefore non-decreasing; this is checked
 * on every iteration.
 */
inline MovmfFit fit_movmf(std::span<const Direction> samples, const MovmfOptions& options = {})
{
  constexpr const char* op = "fit_movmf";
  const int k = options.components;
  if (k < 1) {
    throw Error(ErrorCode::PreconditionViolated, op, "K must be >= 1");
  }
  if (samples.size() < static_cast<std::size_t>(2 * k)) {
    throw Error(ErrorCode::PreconditionViolated, op,
                "need N >= 2K (N=" + std::to_string(samples.size()) + ", K=" + std::to_string(k) + ")");
  }
  if (options.max_iter < 1 || !(options.tol > 0.0)) {
    throw Error(ErrorCode::PreconditionViolated, op, "max_iter must be >= 1 and tol > 0");
  }
  const Matrix x = detail::canonical_rows(detail::stack_rows(samples, op));
  const Eigen::Index n = x.rows();
  std::mt19937_64 rng(options.seed);

  MovmfFit fit;
  fit.model = detail::kmeanspp_init(x, k, rng);
  std::vector<int> reseeded(static_cast<std::size_t>(k), 0);

  Matrix resp;
  double current = detail::e_step(fit.model, x, resp);
  fit.log_likelihood_trace.push_back(current);

  for (int it = 0; it < options.max_iter; ++it) {
    bool reseed_happened = false;
    MovmfModel next = fit.model;
    for (int c = 0; c < k; ++c) {
      auto& comp = next.components[static_cast<std::size_t>(c)];
      const Vector r = resp.col(c);
      const double mass = r.sum();
      if (mass < 1e-12) {
        if (reseeded[static_cast<std::size_t>(c)]++ > 0) {
          throw Error(ErrorCode::EmptyComponent, op, "component " + std::to_string(c) + " lost all responsibility");
        }
        // restart the component at the worst-explained sample
        const Matrix dens = detail::component_log_densities(fit.model, x);
        Eigen::Index worst = 0;
        dens.rowwise().maxCoeff().minCoeff(&worst);
        comp.model.mu = Direction{Vector(x.row(worst).transpose())};
        comp.weight = 1.0 / static_cast<double>(n);
        reseed_happened = true;
        ++fit.reseeds;
        continue;
      }
      comp.weight = mass / static_cast<double>(n);
      const Vector mean = (x.transpose() * r) / mass;
      const double rbar = std::min(mean.norm(), 1.0);
      if (rbar < kDegenerateResultant) {
        comp.model.kappa = 0.0;
        comp.model.mean_resultant = rbar;
        continue;
      }
      comp.model.mu = Direction{mean / mean.norm()};
      comp.model.mean_resultant = rbar;
      const double proposed = detail::approximate_kappa(rbar, x.cols());
      const double old_kappa = comp.model.kappa;
      comp.model.kappa =
        detail::component_objective(mass, rbar, proposed, x.cols()) >=
            detail::component_objective(mass, rbar, old_kappa, x.cols())
          ? proposed
          : old_kappa;
    }
    double total = 0.0;
    for (const auto& c : next.components) {
      total += c.weight;
    }
    for (auto& c : next.components) {
      c.weight /= total;
    }

    fit.model = std::move(next);
    const double updated = detail::e_step(fit.model, x, resp);
    fit.log_likelihood_trace.push_back(updated);
    fit.iterations = it + 1;
    const double scale = std::max(1.0, std::abs(current));
    if (!reseed_happened && updated < current - 1e-9 * scale) {
      throw std::logic_error("fit_movmf: log-likelihood decreased from " + std::to_string(current) + " to " +
                             std::to_string(updated));
    }
    const double gain = updated - current;
    current = updated;
    if (!reseed_happened && gain < options.tol * scale) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

inline double log_likelihood(const MovmfModel& m, std::span<const Direction> samples)
{
  validate(m, "log_likelihood");
  const Matrix x = detail::stack_rows(samples, "log_likelihood");
  detail::require_same_dim(m.dim(), x.cols(), "log_likelihood");
  return detail::movmf_log_likelihood(m, x);
}

}  // namespace heart
