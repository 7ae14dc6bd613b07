#include "dcehier/kinetics.hpp"

#include <cmath>
#include <stdexcept>

#include "dcehier/stats.hpp"

namespace dcehier {

namespace {

// below this |kep - m| the difference quotient collapses to its limit
constexpr double limit_eps = 1e-8;
// below this |kep - m| * t_max the truncated expm1 series is exact to 1e-16
constexpr double series_bound = 0.01;

}  // namespace

double aif_concentration(double t, const AifParams& aif) {
  if (t < 0.0) return 0.0;
  return aif.dose * (aif.a1 * std::exp(-aif.m1 * t) +
                     aif.a2 * std::exp(-aif.m2 * t));
}

CurvePlan make_curve_plan(const TimeGrid& grid, const AifParams& aif) {
  if (grid.times.empty()) throw std::invalid_argument("empty time grid");
  for (std::size_t i = 0; i < grid.times.size(); ++i) {
    if (!std::isfinite(grid.times[i]))
      throw std::invalid_argument("non-finite time value");
    if (i > 0 && !(grid.times[i] > grid.times[i - 1]))
      throw std::invalid_argument("time grid not strictly increasing");
  }
  CurvePlan plan;
  plan.aif = aif;
  while (plan.n_pre < grid.times.size() && grid.times[plan.n_pre] < 0.0)
    ++plan.n_pre;
  plan.t.assign(grid.times.begin() + static_cast<std::ptrdiff_t>(plan.n_pre),
                grid.times.end());
  std::size_t n = plan.t.size();
  plan.cp.resize(n);
  plan.e1.resize(n);
  plan.e2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    plan.e1[i] = std::exp(-aif.m1 * plan.t[i]);
    plan.e2[i] = std::exp(-aif.m2 * plan.t[i]);
    plan.cp[i] = aif.dose * (aif.a1 * plan.e1[i] + aif.a2 * plan.e2[i]);
  }
  plan.t_max = n > 0 ? plan.t.back() : 0.0;
  return plan;
}

kernels::TermSpec conv_term_spec(double ktrans, double kep, double m, double a,
                                 double dose, double t_max) {
  kernels::TermSpec s;
  double h = kep - m;
  double base = dose * ktrans * a;
  s.h = h;
  if (std::fabs(h) < limit_eps) {
    s.mode = kernels::term_limit;
    s.coef = base;
  } else if (std::fabs(h) * t_max <= series_bound) {
    s.mode = kernels::term_series;
    s.coef = base;
  } else {
    s.mode = kernels::term_regular;
    s.coef = base / h;
  }
  return s;
}

void eval_ctc(const CurvePlan& plan, const KineticParams& p, double* out) {
  for (std::size_t i = 0; i < plan.n_pre; ++i) out[i] = 0.0;
  auto s1 = conv_term_spec(p.ktrans, p.kep, plan.aif.m1, plan.aif.a1,
                           plan.aif.dose, plan.t_max);
  auto s2 = conv_term_spec(p.ktrans, p.kep, plan.aif.m2, plan.aif.a2,
                           plan.aif.dose, plan.t_max);
  kernels::eval_curve(plan.t.data(), plan.cp.data(), plan.e1.data(),
                      plan.e2.data(), plan.t.size(), p.kep, p.vp, s1, s2,
                      out + plan.n_pre);
}

CtcSeries ctc_model(const KineticParams& p, const TimeGrid& grid,
                    const AifParams& aif) {
  CurvePlan plan = make_curve_plan(grid, aif);
  CtcSeries out(plan.size());
  eval_ctc(plan, p, out.data());
  return out;
}

namespace {

// d/du of the truncated (e^u - 1)/u series
double series_poly_d(double u) {
  return 0.5 + u * (1.0 / 3.0 + u * (1.0 / 8.0 + u * (1.0 / 30.0)));
}

double series_poly(double u) {
  return 1.0 + u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u / 120.0)));
}

}  // namespace

void eval_ctc_grad(const CurvePlan& plan, const KineticParams& p, double* c,
                   double* d_ktrans, double* d_kep, double* d_vp) {
  for (std::size_t i = 0; i < plan.n_pre; ++i) {
    c[i] = 0.0;
    d_ktrans[i] = 0.0;
    d_kep[i] = 0.0;
    d_vp[i] = 0.0;
  }
  const double ms[2] = {plan.aif.m1, plan.aif.m2};
  const double as[2] = {plan.aif.a1, plan.aif.a2};
  kernels::TermSpec specs[2];
  for (int q = 0; q < 2; ++q)
    specs[q] = conv_term_spec(p.ktrans, p.kep, ms[q], as[q], plan.aif.dose,
                              plan.t_max);
  for (std::size_t i = 0; i < plan.t.size(); ++i) {
    double t = plan.t[i];
    double ek = kernels::exp_scalar(-p.kep * t);
    double conv = 0.0, dkt = 0.0, dkep = 0.0;
    const double es[2] = {plan.e1[i], plan.e2[i]};
    for (int q = 0; q < 2; ++q) {
      const auto& s = specs[q];
      double base = plan.aif.dose * as[q];  // coef at ktrans = 1
      if (s.mode == kernels::term_regular) {
        double diff = es[q] - ek;
        conv += s.coef * diff;
        dkt += (base / s.h) * diff;
        dkep += s.coef * (t * ek - diff / s.h);
      } else {
        double u = s.mode == kernels::term_limit ? 0.0 : s.h * t;
        double sp = series_poly(u);
        conv += s.coef * t * ek * sp;
        dkt += base * t * ek * sp;
        dkep += s.coef * t * t * ek * (series_poly_d(u) - sp);
      }
    }
    std::size_t o = plan.n_pre + i;
    c[o] = p.vp * plan.cp[i] + conv;
    d_ktrans[o] = dkt;
    d_kep[o] = dkep;
    d_vp[o] = plan.cp[i];
  }
}

double residual_ss(std::span<const double> y, std::span<const double> model) {
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double d = y[i] - model[i];
    ss += d * d;
  }
  return ss;
}

double log_likelihood(std::span<const double> y,
                      std::span<const double> model, double sigma2) {
  double n = static_cast<double>(y.size());
  return -0.5 * n * (stats::log_2pi + std::log(sigma2)) -
         residual_ss(y, model) / (2.0 * sigma2);
}

}  // namespace dcehier
