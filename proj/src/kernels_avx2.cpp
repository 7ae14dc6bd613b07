// AVX2 variants. Each step mirrors the scalar arithmetic in
// kernels_common.hpp one operation at a time; vector lanes and the scalar
// tail must produce bit-identical values.
#include "kernels_common.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace dcehier::kernels::detail {
namespace {

inline __m256d exp4(__m256d x) {
  const __m256d hi = _mm256_set1_pd(exp_hi);
  const __m256d lo = _mm256_set1_pd(exp_lo);
  x = _mm256_min_pd(x, hi);
  __m256d zmask = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  __m128i n32 = _mm256_cvtpd_epi32(_mm256_mul_pd(x, _mm256_set1_pd(log2e)));
  __m256d n = _mm256_cvtepi32_pd(n32);
  x = _mm256_sub_pd(x, _mm256_mul_pd(n, _mm256_set1_pd(ln2_hi)));
  x = _mm256_sub_pd(x, _mm256_mul_pd(n, _mm256_set1_pd(ln2_lo)));
  __m256d xx = _mm256_mul_pd(x, x);
  __m256d p = _mm256_mul_pd(_mm256_set1_pd(exp_p0), xx);
  p = _mm256_add_pd(p, _mm256_set1_pd(exp_p1));
  p = _mm256_mul_pd(p, xx);
  p = _mm256_add_pd(p, _mm256_set1_pd(exp_p2));
  p = _mm256_mul_pd(p, x);
  __m256d q = _mm256_mul_pd(_mm256_set1_pd(exp_q0), xx);
  q = _mm256_add_pd(q, _mm256_set1_pd(exp_q1));
  q = _mm256_mul_pd(q, xx);
  q = _mm256_add_pd(q, _mm256_set1_pd(exp_q2));
  q = _mm256_mul_pd(q, xx);
  q = _mm256_add_pd(q, _mm256_set1_pd(exp_q3));
  __m256d r = _mm256_div_pd(_mm256_mul_pd(_mm256_set1_pd(2.0), p),
                            _mm256_sub_pd(q, p));
  r = _mm256_add_pd(_mm256_set1_pd(1.0), r);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  r = _mm256_mul_pd(r, _mm256_castsi256_pd(n64));
  return _mm256_andnot_pd(zmask, r);
}

inline __m256d series_poly4(__m256d u) {
  __m256d s = _mm256_mul_pd(u, _mm256_set1_pd(series_c5));
  s = _mm256_add_pd(s, _mm256_set1_pd(series_c4));
  s = _mm256_mul_pd(s, u);
  s = _mm256_add_pd(s, _mm256_set1_pd(series_c3));
  s = _mm256_mul_pd(s, u);
  s = _mm256_add_pd(s, _mm256_set1_pd(series_c2));
  s = _mm256_mul_pd(s, u);
  return _mm256_add_pd(s, _mm256_set1_pd(1.0));
}

template <int Mode>
inline __m256d term_value4(const TermSpec& s, __m256d t, __m256d e,
                           __m256d ek) {
  const __m256d coef = _mm256_set1_pd(s.coef);
  if constexpr (Mode == term_regular) {
    return _mm256_mul_pd(coef, _mm256_sub_pd(e, ek));
  } else if constexpr (Mode == term_series) {
    __m256d v = _mm256_mul_pd(coef, t);
    v = _mm256_mul_pd(v, ek);
    return _mm256_mul_pd(v, series_poly4(_mm256_mul_pd(_mm256_set1_pd(s.h), t)));
  } else {
    return _mm256_mul_pd(_mm256_mul_pd(coef, t), ek);
  }
}

template <int M1, int M2>
void curve_loop4(const double* t, const double* cp, const double* e1,
                 const double* e2, std::size_t n, double kep, double vp,
                 const TermSpec& s1, const TermSpec& s2, double* out) {
  const __m256d nkep = _mm256_set1_pd(-kep);
  const __m256d vpv = _mm256_set1_pd(vp);
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    __m256d tv = _mm256_loadu_pd(t + p);
    __m256d ek = exp4(_mm256_mul_pd(nkep, tv));
    __m256d acc = _mm256_mul_pd(vpv, _mm256_loadu_pd(cp + p));
    acc = _mm256_add_pd(acc, term_value4<M1>(s1, tv, _mm256_loadu_pd(e1 + p), ek));
    acc = _mm256_add_pd(acc, term_value4<M2>(s2, tv, _mm256_loadu_pd(e2 + p), ek));
    _mm256_storeu_pd(out + p, acc);
  }
  for (; p < n; ++p)
    out[p] = curve_point<M1, M2>(s1, s2, t[p], cp[p], e1[p], e2[p], kep, vp);
}

}  // namespace

void vexp_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = exp_eval(x[i]);
}

void eval_curve_avx2(const double* t, const double* cp, const double* e1,
                     const double* e2, std::size_t n, double kep, double vp,
                     const TermSpec& s1, const TermSpec& s2, double* out) {
  switch (s1.mode * 3 + s2.mode) {
    case 0: curve_loop4<0, 0>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 1: curve_loop4<0, 1>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 2: curve_loop4<0, 2>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 3: curve_loop4<1, 0>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 4: curve_loop4<1, 1>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 5: curve_loop4<1, 2>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 6: curve_loop4<2, 0>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 7: curve_loop4<2, 1>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    default: curve_loop4<2, 2>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
  }
}

}  // namespace dcehier::kernels::detail

#else

#include <cstdlib>

namespace dcehier::kernels::detail {

void vexp_avx2(const double*, double*, std::size_t) { std::abort(); }

void eval_curve_avx2(const double*, const double*, const double*,
                     const double*, std::size_t, double, double,
                     const TermSpec&, const TermSpec&, double*) {
  std::abort();
}

}  // namespace dcehier::kernels::detail

#endif
