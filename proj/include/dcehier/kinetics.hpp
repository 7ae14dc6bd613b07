// Tracer kinetics: bi-exponential population AIF and the closed-form
// two-parameter compartment curve with a plasma fraction.
//
// Conventions: time is in minutes with contrast injection at t = 0; frames
// at t < 0 are pre-injection and the model concentration there is 0.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcehier/kernels.hpp"

namespace dcehier {

struct AifParams {
  double dose = 0.1;             // mmol per kg body weight
  double a1 = 24.0, a2 = 6.20;   // kg per litre
  double m1 = 3.00, m2 = 0.016;  // per minute
};

struct TimeGrid {
  std::vector<double> times;  // minutes, strictly increasing
};

struct KineticParams {
  double ktrans = 0.0;  // per minute
  double kep = 0.0;     // per minute
  double vp = 0.0;      // plasma volume fraction
};

using CtcSeries = std::vector<double>;

// plasma concentration; 0 before injection
double aif_concentration(double t, const AifParams& aif);

// Per-grid precomputation shared by every curve evaluated on that grid.
struct CurvePlan {
  AifParams aif;
  std::size_t n_pre = 0;           // leading frames with t < 0
  std::vector<double> t;           // post-injection times
  std::vector<double> cp, e1, e2;  // Cp(t), exp(-m1 t), exp(-m2 t)
  double t_max = 0.0;
  std::size_t size() const { return n_pre + t.size(); }
};

CurvePlan make_curve_plan(const TimeGrid& grid, const AifParams& aif);

// out must hold plan.size() values
void eval_ctc(const CurvePlan& plan, const KineticParams& p, double* out);

CtcSeries ctc_model(const KineticParams& p, const TimeGrid& grid,
                    const AifParams& aif);

// curve plus partial derivatives with respect to ktrans, kep, vp
// (scalar path; used by the least-squares fitter)
void eval_ctc_grad(const CurvePlan& plan, const KineticParams& p, double* c,
                   double* d_ktrans, double* d_kep, double* d_vp);

double residual_ss(std::span<const double> y, std::span<const double> model);

// iid Gaussian log likelihood of y around model with variance sigma2
double log_likelihood(std::span<const double> y, std::span<const double> model,
                      double sigma2);

// mode selection shared by eval and gradient paths
kernels::TermSpec conv_term_spec(double ktrans, double kep, double m, double a,
                                 double dose, double t_max);

}  // namespace dcehier
