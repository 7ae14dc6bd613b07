#include "dcehier/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dcehier/stats.hpp"

namespace dcehier {

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("quantile probability outside [0,1]");
  std::sort(values.begin(), values.end());
  double h = (double(values.size()) - 1.0) * p;
  auto lo = std::size_t(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  double w = h - double(lo);
  return values[lo] + w * (values[lo + 1] - values[lo]);
}

PosteriorSummary summarize(std::span<const double> samples,
                           std::span<const double> probs) {
  if (samples.empty()) throw std::invalid_argument("summarize of empty sample");
  PosteriorSummary s;
  s.n = samples.size();
  s.mean = stats::mean(samples);
  s.sd = std::sqrt(stats::variance(samples));
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  auto q = [&](double p) {
    double h = (double(sorted.size()) - 1.0) * p;
    auto lo = std::size_t(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - double(lo)) * (sorted[lo + 1] - sorted[lo]);
  };
  s.median = q(0.5);
  s.probs.assign(probs.begin(), probs.end());
  for (double p : s.probs) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("quantile probability outside [0,1]");
    s.quantiles.push_back(q(p));
  }
  return s;
}

double prob_positive(std::span<const double> samples) {
  if (samples.empty())
    throw std::invalid_argument("prob_positive of empty sample");
  std::size_t c = 0;
  for (double v : samples)
    if (v > 0.0) ++c;
  return double(c) / double(samples.size());
}

PosteriorSummary percent_change(std::span<const double> log_effect_samples) {
  if (log_effect_samples.empty())
    throw std::invalid_argument("percent_change of empty sample");
  std::vector<double> pct(log_effect_samples.size());
  for (std::size_t i = 0; i < pct.size(); ++i)
    pct[i] = 100.0 * (std::exp(log_effect_samples[i]) - 1.0);
  return summarize(pct);
}

std::vector<double> extract(const ChainSamples& chain,
                            const std::function<double(const ModelState&)>& f) {
  std::vector<double> out;
  out.reserve(chain.draws.size());
  for (const auto& d : chain.draws) out.push_back(f(d));
  return out;
}

PosteriorSummary study_level(const ChainSamples& chain, int scan) {
  double x = treatment_indicator(scan);
  auto v = extract(chain, [x](const ModelState& s) {
    return std::exp(s.alpha[0] + x * s.beta[0]);
  });
  return summarize(v);
}

PosteriorSummary patient_level(const ChainSamples& chain, int patient,
                               int scan) {
  if (patient < 0 || patient >= chain.layout.n_patients)
    throw std::invalid_argument("patient index out of range");
  auto v = extract(chain, [&](const ModelState& s) {
    return std::exp(psi_mean(s, scan, patient)[0]);
  });
  return summarize(v);
}

std::vector<double> voxel_median_map(const ChainSamples& chain, int scan,
                                     int patient) {
  const auto& layout = chain.layout;
  if (scan < 0 || scan >= layout.n_scans || patient < 0 ||
      patient >= layout.n_patients)
    throw std::invalid_argument("scan or patient index out of range");
  int n = layout.nvox(scan, patient);
  std::vector<double> map(std::size_t(n), 0.0);
  std::vector<double> vals(chain.draws.size());
  for (int k = 0; k < n; ++k) {
    auto v = layout.voxel_index(scan, patient, k);
    for (std::size_t d = 0; d < chain.draws.size(); ++d)
      vals[d] = std::exp(chain.draws[d].psi[v * 2]);
    map[std::size_t(k)] = quantile_type7(vals, 0.5);
  }
  return map;
}

DensityCurve kde(std::span<const double> values, double bandwidth) {
  if (values.size() < 2) throw std::invalid_argument("kde needs >= 2 values");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) throw std::invalid_argument("kde needs >= 2 distinct values");
  double n = double(values.size());
  double bw = bandwidth;
  if (bw <= 0.0) {
    double sd = std::sqrt(stats::variance(values));
    std::vector<double> sorted(values.begin(), values.end());
    double iqr = quantile_type7(sorted, 0.75) - quantile_type7(sorted, 0.25);
    double spread = iqr / 1.34;
    if (spread <= 0.0) spread = sd;
    bw = 0.9 * std::min(sd, spread) * std::pow(n, -0.2);
  }
  DensityCurve out;
  out.bandwidth = bw;
  const int points = 512;
  double a = lo - 3.0 * bw, b = hi + 3.0 * bw;
  out.grid.resize(points);
  out.density.resize(points);
  const double norm = 1.0 / (n * bw * std::sqrt(2.0 * 3.14159265358979323846));
  for (int g = 0; g < points; ++g) {
    double xg = a + (b - a) * double(g) / double(points - 1);
    out.grid[std::size_t(g)] = xg;
    double acc = 0.0;
    for (double v : values) {
      double z = (xg - v) / bw;
      acc += std::exp(-0.5 * z * z);
    }
    out.density[std::size_t(g)] = norm * acc;
  }
  return out;
}

double rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("rhat needs >= 2 chains");
  std::size_t n = chains[0].size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 2) throw std::invalid_argument("rhat needs >= 2 draws per chain");
  double m = double(chains.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    std::span<const double> head(c.data(), n);
    means.push_back(stats::mean(head));
    w += stats::variance(head);
  }
  w /= m;
  double b = double(n) * stats::variance(means);
  double var_plus = (double(n) - 1.0) / double(n) * w + b / double(n);
  return std::sqrt(var_plus / w);
}

}  // namespace dcehier
