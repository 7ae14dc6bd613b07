#include "dcehier/hierarchy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dcehier/stats.hpp"

namespace dcehier {

void StudyLayout::finalize() {
  if (n_scans != 2)
    throw std::invalid_argument("layout requires exactly two scans");
  if (n_patients < 1) throw std::invalid_argument("layout has no patients");
  auto ns = std::size_t(n_scans);
  auto np = std::size_t(n_patients);
  if (n_voxels.size() != ns || grids.size() != ns)
    throw std::invalid_argument("layout table shape mismatch");
  offsets_.assign(ns * np + 1, 0);
  for (std::size_t i = 0; i < ns; ++i) {
    if (n_voxels[i].size() != np || grids[i].size() != np)
      throw std::invalid_argument("layout table shape mismatch");
    for (std::size_t j = 0; j < np; ++j) {
      if (n_voxels[i][j] < 1)
        throw std::invalid_argument("every (scan, patient) needs voxels");
      if (grids[i][j].times.empty())
        throw std::invalid_argument("every (scan, patient) needs a time grid");
      offsets_[i * np + j + 1] =
          offsets_[i * np + j] + std::size_t(n_voxels[i][j]);
    }
  }
}

ModelState make_state(const StudyLayout& layout) {
  ModelState s;
  auto J = std::size_t(layout.n_patients);
  auto IJ = std::size_t(layout.n_scans) * J;
  s.gamma.assign(J * 2, 0.0);
  s.delta.assign(J * 2, 0.0);
  s.tau2_gamma.assign(J * 2, 1.0);
  s.tau2_delta.assign(J * 2, 1.0);
  s.tau2_eps.assign(IJ * 2, 1.0);
  s.sigma2.assign(IJ, 1.0);
  s.psi.assign(layout.total_voxels() * 2, 0.0);
  s.vp.assign(layout.total_voxels(), 0.0);
  return s;
}

std::array<double, 2> psi_mean(const ModelState& s, int scan, int patient) {
  double x = treatment_indicator(scan);
  auto j = std::size_t(patient);
  return {s.alpha[0] + x * s.beta[0] + s.gamma[j * 2] + x * s.delta[j * 2],
          s.alpha[1] + x * s.beta[1] + s.gamma[j * 2 + 1] +
              x * s.delta[j * 2 + 1]};
}

std::array<std::array<double, 8>, 2> design_row(int scan) {
  double x = treatment_indicator(scan);
  return {{{1, x, 0, 0, 1, x, 0, 0}, {0, 0, 1, x, 0, 0, 1, x}}};
}

KineticParams kinetic_from_psi(double psi1, double psi2, double vp) {
  return {std::exp(psi1), std::exp(psi2), vp};
}

double log_prior_density(const ModelState& s, const StudyLayout& layout) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  auto positive = [](const std::vector<double>& v) {
    for (double x : v)
      if (!(x > 0.0)) return false;
    return true;
  };
  // a non-positive variance puts the state outside the support; bail before
  // any conditional normal factor can evaluate log of a negative number
  if (!positive(s.tau2_gamma) || !positive(s.tau2_delta) ||
      !positive(s.tau2_eps) || !positive(s.sigma2))
    return neg_inf;
  double lp = 0.0;
  auto J = std::size_t(layout.n_patients);
  for (std::size_t j = 0; j < J; ++j) {
    for (int l = 0; l < 2; ++l) {
      auto jl = j * 2 + std::size_t(l);
      lp += stats::log_inv_gamma_pdf(s.tau2_gamma[jl], priors.tau2_gamma_shape,
                                     priors.tau2_gamma_scale);
      lp += stats::log_inv_gamma_pdf(s.tau2_delta[jl], priors.tau2_delta_shape,
                                     priors.tau2_delta_scale);
      lp += stats::log_normal_pdf(s.gamma[jl], 0.0, s.tau2_gamma[jl]);
      lp += stats::log_normal_pdf(s.delta[jl], 0.0, s.tau2_delta[jl]);
    }
  }
  for (int i = 0; i < layout.n_scans; ++i) {
    for (int j = 0; j < layout.n_patients; ++j) {
      auto ij = std::size_t(i) * J + std::size_t(j);
      lp += stats::log_inv_gamma_pdf(s.sigma2[ij], priors.sigma2_shape,
                                     priors.sigma2_scale);
      auto m = psi_mean(s, i, j);
      for (int l = 0; l < 2; ++l) {
        double tau2 = s.tau2_eps[ij * 2 + std::size_t(l)];
        lp += stats::log_inv_gamma_pdf(tau2, priors.tau2_eps_shape,
                                       priors.tau2_eps_scale);
        for (int k = 0; k < layout.nvox(i, j); ++k) {
          double psi = s.psi[layout.voxel_index(i, j, k) * 2 + std::size_t(l)];
          lp += stats::log_normal_pdf(psi, m[std::size_t(l)], tau2);
        }
      }
      for (int k = 0; k < layout.nvox(i, j); ++k)
        lp += stats::log_beta_pdf(s.vp[layout.voxel_index(i, j, k)],
                                  priors.vp_a, priors.vp_b);
    }
  }
  return lp;
}

}  // namespace dcehier
