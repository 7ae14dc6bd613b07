// Shared constants and the scalar exp used by every kernel variant.
// The AVX2 path mirrors this arithmetic operation for operation; any edit
// here must be reflected in kernels_avx2.cpp to keep the paths bit-equal.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

#include "dcehier/kernels.hpp"

namespace dcehier::kernels::detail {

// exp via 2^n * e^r with r = x - n ln2, e^r from a rational approximation
// (P/Q in r^2). Valid on [-708, 709]; inputs are clamped to that range.
inline constexpr double exp_hi = 709.0;
inline constexpr double exp_lo = -708.0;
inline constexpr double log2e = 1.4426950408889634074;
inline constexpr double ln2_hi = 6.93145751953125e-1;
inline constexpr double ln2_lo = 1.42860682030941723212e-6;

inline constexpr double exp_p0 = 1.26177193074810590878e-4;
inline constexpr double exp_p1 = 3.02994407707441961300e-2;
inline constexpr double exp_p2 = 9.99999999999999999910e-1;
inline constexpr double exp_q0 = 3.00198505138664455042e-6;
inline constexpr double exp_q1 = 2.52448340349684104192e-3;
inline constexpr double exp_q2 = 2.27265548208155028766e-1;
inline constexpr double exp_q3 = 2.00000000000000000005e0;

inline double exp_eval(double x) {
  x = (x < exp_hi) ? x : exp_hi;
  if (x < exp_lo) return 0.0;
  double n = std::nearbyint(x * log2e);
  x = x - n * ln2_hi;
  x = x - n * ln2_lo;
  double xx = x * x;
  double p = x * ((exp_p0 * xx + exp_p1) * xx + exp_p2);
  double q = ((exp_q0 * xx + exp_q1) * xx + exp_q2) * xx + exp_q3;
  double r = 1.0 + 2.0 * p / (q - p);
  auto bits = static_cast<std::uint64_t>(static_cast<std::int64_t>(n) + 1023)
              << 52;
  return r * std::bit_cast<double>(bits);
}

inline constexpr double series_c2 = 1.0 / 2.0;
inline constexpr double series_c3 = 1.0 / 6.0;
inline constexpr double series_c4 = 1.0 / 24.0;
inline constexpr double series_c5 = 1.0 / 120.0;

// (e^{u} - 1)/u truncated: 1 + u/2 + u^2/6 + u^3/24 + u^4/120
inline double series_poly(double u) {
  return 1.0 + u * (series_c2 + u * (series_c3 + u * (series_c4 + u * series_c5)));
}

template <int Mode>
inline double term_value(const TermSpec& s, double t, double e, double ek) {
  if constexpr (Mode == term_regular) {
    return s.coef * (e - ek);
  } else if constexpr (Mode == term_series) {
    return s.coef * t * ek * series_poly(s.h * t);
  } else {
    return s.coef * t * ek;
  }
}

template <int M1, int M2>
inline double curve_point(const TermSpec& s1, const TermSpec& s2, double t,
                          double cp, double e1, double e2, double kep,
                          double vp) {
  double ek = exp_eval(-kep * t);
  double acc = vp * cp;
  acc += term_value<M1>(s1, t, e1, ek);
  acc += term_value<M2>(s2, t, e2, ek);
  return acc;
}

}  // namespace dcehier::kernels::detail
