// Small density/statistics helpers shared by the sampler, posterior
// summaries and tests.
#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace dcehier::stats {

inline constexpr double log_2pi = 1.83787706640934548356;

inline double log_normal_pdf(double x, double mean, double var) {
  double d = x - mean;
  return -0.5 * (log_2pi + std::log(var)) - 0.5 * d * d / var;
}

// density proportional to x^-(shape+1) exp(-scale/x) on x > 0
inline double log_inv_gamma_pdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(scale) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - scale / x;
}

inline double log_beta_pdf(double x, double a, double b) {
  if (!(x > 0.0) || !(x < 1.0)) {
    // endpoints handled explicitly so a == 1 or b == 1 cannot produce 0*inf
    if (x == 0.0 && a == 1.0) return std::lgamma(a + b) - std::lgamma(b);
    if (x == 1.0 && b == 1.0) return std::lgamma(a + b) - std::lgamma(a);
    return -std::numeric_limits<double>::infinity();
  }
  double v = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  if (a != 1.0) v += (a - 1.0) * std::log(x);
  if (b != 1.0) v += (b - 1.0) * std::log1p(-x);
  return v;
}

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z * 0.70710678118654752440);
}

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

// unbiased sample variance
inline double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double inv_logit(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace dcehier::stats
