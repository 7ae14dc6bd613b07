// Shared test utilities: an independent quadrature oracle for the tissue
// curve, small study builders, and distribution-distance helpers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "dcehier/hierarchy.hpp"
#include "dcehier/kinetics.hpp"
#include "dcehier/rng.hpp"

namespace testutil {

// plasma concentration evaluated with std::exp only
inline double cp_ref(double t, const dcehier::AifParams& aif) {
  if (t < 0.0) return 0.0;
  return aif.dose *
         (aif.a1 * std::exp(-aif.m1 * t) + aif.a2 * std::exp(-aif.m2 * t));
}

// tissue curve by Simpson quadrature of the convolution integral; shares no
// code with the closed-form evaluation paths
inline double ctc_quadrature(const dcehier::KineticParams& p, double t,
                             const dcehier::AifParams& aif,
                             int panels = 4000) {
  if (t < 0.0) return 0.0;
  if (t == 0.0) return p.vp * cp_ref(0.0, aif);
  auto f = [&](double u) { return cp_ref(u, aif) * std::exp(-p.kep * (t - u)); };
  double h = t / (2.0 * panels);
  double s = f(0.0) + f(t);
  for (int i = 1; i < 2 * panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return p.vp * cp_ref(t, aif) + p.ktrans * s * h / 3.0;
}

// uniform grid in minutes with n_pre pre-injection frames; frame n_pre sits
// exactly at the injection time 0
inline dcehier::TimeGrid uniform_grid(int n_time, double dt_min,
                                      int n_pre) {
  dcehier::TimeGrid g;
  for (int f = 0; f < n_time; ++f) g.times.push_back((f - n_pre) * dt_min);
  return g;
}

inline dcehier::StudyLayout uniform_layout(int n_patients, int n_voxels,
                                           int n_time, double dt_min = 0.2,
                                           int n_pre = 3) {
  dcehier::StudyLayout layout;
  layout.n_patients = n_patients;
  layout.n_voxels.assign(2, std::vector<int>(n_patients, n_voxels));
  layout.grids.assign(
      2, std::vector<dcehier::TimeGrid>(n_patients,
                                        uniform_grid(n_time, dt_min, n_pre)));
  layout.finalize();
  return layout;
}

// observed series generated directly from a parameter state; noise_rng may
// be null for noise-free data (noise sd is sqrt(state.sigma2) per block)
inline dcehier::StudyData study_from_state(const dcehier::StudyLayout& layout,
                                           const dcehier::ModelState& s,
                                           const dcehier::AifParams& aif,
                                           dcehier::Rng* noise_rng) {
  dcehier::StudyData data;
  data.layout = layout;
  data.aif = aif;
  data.study_id = "test";
  data.series.resize(layout.total_voxels());
  for (int i = 0; i < layout.n_scans; ++i)
    for (int j = 0; j < layout.n_patients; ++j) {
      const auto& grid = layout.grids[std::size_t(i)][std::size_t(j)];
      double sd = std::sqrt(s.sigma2[std::size_t(i * layout.n_patients + j)]);
      for (int k = 0; k < layout.nvox(i, j); ++k) {
        std::size_t v = layout.voxel_index(i, j, k);
        auto p = dcehier::kinetic_from_psi(s.psi[v * 2], s.psi[v * 2 + 1],
                                           s.vp[v]);
        auto y = dcehier::ctc_model(p, grid, aif);
        if (noise_rng)
          for (double& yy : y) yy += sd * noise_rng->normal();
        data.series[v] = std::move(y);
      }
    }
  return data;
}

// state whose voxel parameters sit exactly at the block means
inline dcehier::ModelState state_at_means(const dcehier::StudyLayout& layout,
                                          const dcehier::ModelState& levels,
                                          double vp, double sigma2) {
  dcehier::ModelState s = levels;
  for (int i = 0; i < layout.n_scans; ++i)
    for (int j = 0; j < layout.n_patients; ++j) {
      auto m = dcehier::psi_mean(s, i, j);
      s.sigma2[std::size_t(i * layout.n_patients + j)] = sigma2;
      for (int k = 0; k < layout.nvox(i, j); ++k) {
        std::size_t v = layout.voxel_index(i, j, k);
        s.psi[v * 2] = m[0];
        s.psi[v * 2 + 1] = m[1];
        s.vp[v] = vp;
      }
    }
  return s;
}

// Kolmogorov-Smirnov distance between a sample and a CDF
inline double ks_distance(std::vector<double> x,
                          const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  double n = double(x.size()), d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = cdf(x[i]);
    d = std::max(d, std::abs(f - double(i) / n));
    d = std::max(d, std::abs(f - double(i + 1) / n));
  }
  return d;
}

}  // namespace testutil
