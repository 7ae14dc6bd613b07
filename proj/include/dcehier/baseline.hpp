// The comparison analysis: independent voxel-wise nonlinear least squares
// on the compartment model and the exact one-sided Wilcoxon signed-rank
// test on ROI median Ktrans values.
#pragma once

#include <span>
#include <vector>

#include "dcehier/hierarchy.hpp"
#include "dcehier/kinetics.hpp"

namespace dcehier {

struct NlsOptions {
  int max_iterations = 200;
  double rss_rel_tol = 1e-8;
  double grad_tol = 1e-8;
};

struct NlsFit {
  KineticParams params;
  bool converged = false;
  double rss = 0.0;
  int iterations = 0;
};

// damped least squares over (ln ktrans, ln kep, logit vp)
NlsFit nls_fit_voxel(std::span<const double> y, const CurvePlan& plan,
                     KineticParams init = {0.2, 0.5, 0.05},
                     const NlsOptions& opts = {});
NlsFit nls_fit_voxel(const CtcSeries& y, const TimeGrid& grid,
                     const AifParams& aif,
                     KineticParams init = {0.2, 0.5, 0.05},
                     const NlsOptions& opts = {});

// default start plus two restarts on non-convergence; best RSS wins
NlsFit nls_fit_voxel_multistart(std::span<const double> y,
                                const CurvePlan& plan,
                                const NlsOptions& opts = {});

// multistart fit of every voxel, indexed by layout.voxel_index
std::vector<NlsFit> fit_study(const StudyData& data,
                              const NlsOptions& opts = {});

// median Ktrans over converged fits
double roi_median_ktrans(std::span<const NlsFit> fits);

struct WilcoxonResult {
  double w_plus = 0.0;
  int n_effective = 0;
  double p_value = 1.0;
  bool exact = true;
};

// one-sided test of pre > post on paired values: d = pre - post, zeros
// dropped, midranks for ties; exact sign-assignment enumeration for
// n <= 25, normal approximation with continuity correction above
WilcoxonResult wilcoxon_one_sided(std::span<const double> pre,
                                  std::span<const double> post);

}  // namespace dcehier
