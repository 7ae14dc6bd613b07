#include "kernels_common.hpp"

namespace dcehier::kernels {

double exp_scalar(double x) { return detail::exp_eval(x); }

namespace detail {

void vexp_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = exp_eval(x[i]);
}

namespace {

template <int M1, int M2>
void curve_loop(const double* t, const double* cp, const double* e1,
                const double* e2, std::size_t n, double kep, double vp,
                const TermSpec& s1, const TermSpec& s2, double* out) {
  for (std::size_t p = 0; p < n; ++p)
    out[p] = curve_point<M1, M2>(s1, s2, t[p], cp[p], e1[p], e2[p], kep, vp);
}

}  // namespace

void eval_curve_scalar(const double* t, const double* cp, const double* e1,
                       const double* e2, std::size_t n, double kep, double vp,
                       const TermSpec& s1, const TermSpec& s2, double* out) {
  switch (s1.mode * 3 + s2.mode) {
    case 0: curve_loop<0, 0>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 1: curve_loop<0, 1>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 2: curve_loop<0, 2>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 3: curve_loop<1, 0>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 4: curve_loop<1, 1>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 5: curve_loop<1, 2>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 6: curve_loop<2, 0>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    case 7: curve_loop<2, 1>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
    default: curve_loop<2, 2>(t, cp, e1, e2, n, kep, vp, s1, s2, out); break;
  }
}

}  // namespace detail
}  // namespace dcehier::kernels
