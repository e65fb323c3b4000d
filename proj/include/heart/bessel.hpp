#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace heart::special
{

namespace detail
{

// Power series in log space. Terms are unimodal in k; summation stops well
// past the peak once terms fall 40 nats below it.
inline double log_bessel_i_series(double v, double x)
{
  const double log_half_x = std::log(0.5 * x);
  const double two_log_half_x = 2.0 * log_half_x;
  double log_term = v * log_half_x - std::lgamma(v + 1.0);
  double peak = log_term;
  std::vector<double> terms;
  terms.reserve(64);
  terms.push_back(log_term);
  for (int k = 0; k < 1'000'000; ++k) {
    log_term += two_log_half_x - std::log(k + 1.0) - std::log(v + k + 1.0);
    terms.push_back(log_term);
    peak = std::max(peak, log_term);
    const bool past_peak = (k + 1.0) * (v + k + 1.0) > 0.25 * x * x;
    if (past_peak && log_term < peak - 40.0) {
      break;
    }
  }
  double sum = 0.0;
  for (double t : terms) {
    sum += std::exp(t - peak);
  }
  return peak + std::log(sum);
}

// Large-argument (Hankel) expansion, valid when 4v^2 << 8x.
inline double log_bessel_i_hankel(double v, double x)
{
  const double mu = 4.0 * v * v;
  double term = 1.0;
  double sum = 1.0;
  double prev_abs = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (k * 8.0 * x);
    const double a = std::abs(term);
    if (a > prev_abs) {
      break;  // asymptotic series started diverging
    }
    sum += term;
    prev_abs = a;
    if (a < 1e-17 * std::abs(sum)) {
      break;
    }
  }
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

// Debye uniform asymptotic expansion in 1/v, terms u_0..u_4.
inline double log_bessel_i_debye(double v, double x)
{
  const double z = x / v;
  const double root = std::sqrt(1.0 + z * z);
  const double p = 1.0 / root;
  const double eta = root + std::log(z / (1.0 + root));
  const double p2 = p * p;
  const double u1 = p * (3.0 - 5.0 * p2) / 24.0;
  const double u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0;
  const double u3 = p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2 * p2 - 425425.0 * p2 * p2 * p2) / 414720.0;
  const double p4 = p2 * p2;
  const double u4 =
    p4 * (4465125.0 - 94121676.0 * p2 + 349922430.0 * p4 - 446185740.0 * p4 * p2 + 185910725.0 * p4 * p4) /
    39813120.0;
  const double inv = 1.0 / v;
  const double series = 1.0 + inv * (u1 + inv * (u2 + inv * (u3 + inv * u4)));
  return v * eta - 0.5 * std::log(2.0 * std::numbers::pi * v) - 0.25 * std::log1p(z * z) + std::log(series);
}

}  // namespace detail

/**
 * Natural log of the modified Bessel function of the first kind I_v(x),
 * for v >= 0 and x >= 0. Stays finite where I_v itself over- or underflows
 * (x up to 1e6+, v up to several thousand).
 */
inline double log_bessel_i(double v, double x)
{
  if (x == 0.0) {
    return v == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  if (v >= 15.0) {
    return detail::log_bessel_i_debye(v, x);
  }
  if (x <= 1000.0) {
    return detail::log_bessel_i_series(v, x);
  }
  return detail::log_bessel_i_hankel(v, x);
}

/// log of the surface area of S^{D-1}: log(2 pi^{D/2} / Gamma(D/2)).
inline double log_sphere_area(int dim)
{
  const double h = 0.5 * dim;
  return std::log(2.0) + h * std::log(std::numbers::pi) - std::lgamma(h);
}

/**
 * log C_D(kappa), the vMF normalizer w.r.t. surface measure:
 * f(x) = C_D(kappa) exp(kappa mu.x).
 */
inline double vmf_log_normalizer(int dim, double kappa)
{
  if (kappa <= 0.0) {
    return -log_sphere_area(dim);
  }
  const double order = 0.5 * dim - 1.0;
  return order * std::log(kappa) - 0.5 * dim * std::log(2.0 * std::numbers::pi) - log_bessel_i(order, kappa);
}

}  // namespace heart::special
