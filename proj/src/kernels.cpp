#include "dcehier/kernels.hpp"

#include <atomic>
#include <stdexcept>
#include <string>

namespace dcehier::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

std::atomic<Isa> g_isa{detect_isa()};

}  // namespace

Isa detect_isa() { return cpu_has_avx2() ? Isa::avx2 : Isa::scalar; }

bool isa_supported(Isa isa) {
  return isa == Isa::scalar || (isa == Isa::avx2 && cpu_has_avx2());
}

Isa active_isa() { return g_isa.load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa))
    throw std::invalid_argument(std::string("kernel variant not supported: ") +
                                isa_name(isa));
  g_isa.store(isa, std::memory_order_relaxed);
}

const char* isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

Isa isa_from_name(const char* name) {
  std::string s(name);
  if (s == "scalar") return Isa::scalar;
  if (s == "avx2") return Isa::avx2;
  if (s == "auto") return detect_isa();
  throw std::invalid_argument("unknown kernel variant: " + s);
}

void eval_curve(const double* t, const double* cp, const double* e1,
                const double* e2, std::size_t n, double kep, double vp,
                const TermSpec& s1, const TermSpec& s2, double* out) {
  if (active_isa() == Isa::avx2)
    detail::eval_curve_avx2(t, cp, e1, e2, n, kep, vp, s1, s2, out);
  else
    detail::eval_curve_scalar(t, cp, e1, e2, n, kep, vp, s1, s2, out);
}

void vexp(const double* x, double* out, std::size_t n) {
  if (active_isa() == Isa::avx2)
    detail::vexp_avx2(x, out, n);
  else
    detail::vexp_scalar(x, out, n);
}

}  // namespace dcehier::kernels
