// Posterior summarization: transformed point estimates, equal-tailed
// credible intervals, directional posterior probabilities, per-voxel median
// maps and kernel density curves.
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dcehier/sampler.hpp"

namespace dcehier {

struct PosteriorSummary {
  double mean = 0.0, sd = 0.0, median = 0.0;
  std::vector<double> probs, quantiles;  // parallel, probs increasing
  std::size_t n = 0;
};

struct DensityCurve {
  std::vector<double> grid, density;
  double bandwidth = 0.0;
};

inline constexpr std::array<double, 3> default_probs{0.025, 0.5, 0.975};

// linear interpolation between order statistics ("type 7")
double quantile_type7(std::vector<double> values, double p);

PosteriorSummary summarize(std::span<const double> samples,
                           std::span<const double> probs = default_probs);

// fraction of samples strictly greater than zero
double prob_positive(std::span<const double> samples);

// summary of 100*(exp(x) - 1); negative values are reductions
PosteriorSummary percent_change(std::span<const double> log_effect_samples);

std::vector<double> extract(const ChainSamples& chain,
                            const std::function<double(const ModelState&)>& f);

// Ktrans transforms: exp(alpha1 [+ beta1]) and the patient-level
// compositions including gamma/delta; scan and patient are 0-based
PosteriorSummary study_level(const ChainSamples& chain, int scan);
PosteriorSummary patient_level(const ChainSamples& chain, int patient,
                               int scan);

// per-voxel posterior medians of exp(psi_1), i.e. the full Ktrans
// transform including the voxel effect
std::vector<double> voxel_median_map(const ChainSamples& chain, int scan,
                                     int patient);

// Gaussian kernel density on a 512-point grid spanning the data +- 3
// bandwidths; bandwidth 0 selects Silverman's rule
DensityCurve kde(std::span<const double> values, double bandwidth = 0.0);

// Gelman-Rubin potential scale reduction across chains (utility)
double rhat(const std::vector<std::vector<double>>& chains);

}  // namespace dcehier
