#pragma once

#include <heart/error.hpp>
#include <heart/kent.hpp>
#include <heart/movmf.hpp>
#include <heart/vmf.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace heart
{

/// Bayesian information criterion -2 logL + k ln N (natural log).
inline double bic(double log_likelihood, long long param_count, long long sample_count)
{
  if (sample_count < 1 || param_count < 0) {
    throw Error(ErrorCode::PreconditionViolated, "bic", "need N >= 1 and k >= 0");
  }
  return -2.0 * log_likelihood + static_cast<double>(param_count) * std::log(static_cast<double>(sample_count));
}

/// Free parameters: mean direction (D-1) + kappa.
inline long long vmf_param_count(long long dim) { return dim; }
/// K components of D parameters plus K-1 free weights.
inline long long movmf_param_count(long long dim, long long k) { return k * dim + (k - 1); }
/// Orthonormal frame (D-1) + (D-2) + (D-3) plus kappa and beta.
inline long long kent_param_count(long long dim) { return 3 * dim - 4; }

struct CandidateFit {
  std::string tag;  ///< "vmf", "movmf" or "kent"
  bool ok = false;
  std::string error;
  double log_likelihood = std::numeric_limits<double>::quiet_NaN();
  long long param_count = 0;
  double bic = std::numeric_limits<double>::quiet_NaN();
};

struct FitReport {
  long long sample_count = 0;
  long long dim = 0;
  int movmf_components = 0;
  std::uint64_t seed = 0;
  std::vector<CandidateFit> candidates;  ///< always vmf, movmf, kent in that order
  std::string winner;
  /// beta/kappa of the Kent candidate; NaN when the Kent fit failed.
  double anisotropy_ratio = std::numeric_limits<double>::quiet_NaN();

  std::optional<VmfModel> vmf;
  std::optional<MovmfModel> movmf;
  std::optional<KentModel> kent;

  const CandidateFit& candidate(const std::string& tag) const
  {
    for (const auto& c : candidates) {
      if (c.tag == tag) {
        return c;
      }
    }
    throw Error(ErrorCode::PreconditionViolated, "FitReport", "no candidate " + tag);
  }
};

struct SelectOptions {
  int movmf_components = 2;
  std::uint64_t seed = 0;
  KentFitOptions kent{};
};

/**
 * Fits vMF, moVMF(K) and Kent to the same samples and picks the lowest BIC,
 * breaking ties toward fewer parameters. A candidate whose fit throws is
 * recorded with its error and excluded; at least one must succeed.
 */
inline FitReport select_model(std::span<const Direction> samples, const SelectOptions& options = {})
{
  constexpr const char* op = "select_model";
  const Matrix stacked = detail::stack_rows(samples, op);
  // canonical order makes every candidate independent of input order
  const Matrix x = detail::canonical_rows(stacked);
  std::vector<Direction> ordered;
  ordered.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    ordered.emplace_back(Vector(x.row(i).transpose()));
  }

  FitReport report;
  report.sample_count = static_cast<long long>(x.rows());
  report.dim = static_cast<long long>(x.cols());
  report.movmf_components = options.movmf_components;
  report.seed = options.seed;

  auto attempt = [&](const std::string& tag, long long k, auto&& fit_and_score) {
    CandidateFit c;
    c.tag = tag;
    c.param_count = k;
    try {
      c.log_likelihood = fit_and_score();
      c.bic = bic(c.log_likelihood, k, report.sample_count);
      c.ok = std::isfinite(c.bic);
      if (!c.ok) {
        c.error = "non-finite likelihood";
      }
    } catch (const Error& e) {
      c.error = e.what();
    }
    report.candidates.push_back(c);
  };

  attempt("vmf", vmf_param_count(report.dim), [&] {
    report.vmf = fit_vmf(ordered);
    return detail::vmf_log_likelihood(*report.vmf, x);
  });
  attempt("movmf", movmf_param_count(report.dim, options.movmf_components), [&] {
    MovmfOptions mo;
    mo.components = options.movmf_components;
    mo.seed = options.seed;
    report.movmf = fit_movmf(ordered, mo).model;
    return detail::movmf_log_likelihood(*report.movmf, x);
  });
  attempt("kent", kent_param_count(report.dim), [&] {
    report.kent = fit_kent(ordered, options.kent).model;
    report.anisotropy_ratio = report.kent->anisotropy();
    const auto s = detail::kent_statistics(report.kent->mu, report.kent->gamma1, report.kent->gamma2, x);
    return detail::kent_log_likelihood(static_cast<int>(report.dim), report.kent->kappa, report.kent->beta, s);
  });

  const CandidateFit* best = nullptr;
  for (const auto& c : report.candidates) {
    if (!c.ok) {
      continue;
    }
    if (best == nullptr || c.bic < best->bic || (c.bic == best->bic && c.param_count < best->param_count)) {
      best = &c;
    }
  }
  if (best == nullptr) {
    throw Error(ErrorCode::PreconditionViolated, op, "every candidate fit failed");
  }
  report.winner = best->tag;
  return report;
}

}  // namespace heart
