// Vectorised inner loops for tissue-curve evaluation, with a scalar
// reference implementation and an AVX2 variant selected at runtime.
// Both variants execute the same operation sequence (same polynomial,
// no FMA), so their outputs are expected to match bit for bit.
#pragma once

#include <cstddef>

namespace dcehier::kernels {

enum class Isa { scalar = 0, avx2 = 1 };

Isa detect_isa();          // best variant this CPU supports
Isa active_isa();
void set_isa(Isa isa);     // throws std::invalid_argument if unsupported
bool isa_supported(Isa isa);
const char* isa_name(Isa isa);
Isa isa_from_name(const char* name);  // "scalar" | "avx2" | "auto"

// Convolution-term evaluation modes. The caller picks the mode per curve so
// every variant follows the same branch on the same data.
enum TermMode : int { term_regular = 0, term_series = 1, term_limit = 2 };

struct TermSpec {
  int mode = term_regular;
  double coef = 0.0;  // regular: D*kt*a/(kep-m); series/limit: D*kt*a
  double h = 0.0;     // kep - m, used by the series mode
};

// out[p] = vp*cp[p] + conv1(t[p]) + conv2(t[p]) for p in [0, n).
// e1, e2 hold exp(-m1 t), exp(-m2 t) precomputed on the grid.
void eval_curve(const double* t, const double* cp, const double* e1,
                const double* e2, std::size_t n, double kep, double vp,
                const TermSpec& s1, const TermSpec& s2, double* out);

// out[i] = exp(x[i]); accurate to a few ulp over [-708, 709], clamped outside
void vexp(const double* x, double* out, std::size_t n);

// scalar reference for single values (identical arithmetic to the kernels)
double exp_scalar(double x);

namespace detail {
void eval_curve_scalar(const double* t, const double* cp, const double* e1,
                       const double* e2, std::size_t n, double kep, double vp,
                       const TermSpec& s1, const TermSpec& s2, double* out);
void eval_curve_avx2(const double* t, const double* cp, const double* e1,
                     const double* e2, std::size_t n, double kep, double vp,
                     const TermSpec& s1, const TermSpec& s2, double* out);
void vexp_scalar(const double* x, double* out, std::size_t n);
void vexp_avx2(const double* x, double* out, std::size_t n);
}  // namespace detail

}  // namespace dcehier::kernels
