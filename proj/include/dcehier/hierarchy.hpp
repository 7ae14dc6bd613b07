// Index layout and parameter containers for the hierarchical model.
//
// Internal indices are 0-based throughout the library: scans i in {0,1}
// (scan 1 is the second, post-treatment acquisition and carries the
// treatment indicator x_i = 1), patients j in [0,J), voxels k within a
// (scan, patient) block, kinetic component l in {0,1} with 0 = log Ktrans
// and 1 = log kep. File formats and the CLI present 1-based indices.
#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "dcehier/kinetics.hpp"

namespace dcehier {

inline constexpr int n_kinetic = 2;

struct PriorSpec {
  double tau2_gamma_shape = 1.0, tau2_gamma_scale = 1.0;
  double tau2_delta_shape = 1.0, tau2_delta_scale = 1.0;
  double tau2_eps_shape = 1.0, tau2_eps_scale = 1e-5;
  double sigma2_shape = 1.0, sigma2_scale = 1e-2;
  double vp_a = 1.0, vp_b = 19.0;
};

inline constexpr PriorSpec priors{};

struct StudyLayout {
  int n_scans = 2;  // the model is defined for exactly two scans
  int n_patients = 0;
  std::vector<std::vector<int>> n_voxels;   // [scan][patient]
  std::vector<std::vector<TimeGrid>> grids; // [scan][patient]

  // builds the flat voxel offsets below and validates shapes
  void finalize();

  int nvox(int i, int j) const { return n_voxels[std::size_t(i)][std::size_t(j)]; }
  std::size_t block(int i, int j) const {
    return offsets_[std::size_t(i) * std::size_t(n_patients) + std::size_t(j)];
  }
  std::size_t voxel_index(int i, int j, int k) const {
    return block(i, j) + std::size_t(k);
  }
  std::size_t total_voxels() const {
    return offsets_.empty() ? 0 : offsets_.back();
  }

private:
  std::vector<std::size_t> offsets_;  // size n_scans*n_patients + 1
};

// complete parameter vector of the model; shapes follow a StudyLayout
struct ModelState {
  std::array<double, 2> alpha{};  // [l]
  std::array<double, 2> beta{};
  std::vector<double> gamma, delta;            // [j*2 + l]
  std::vector<double> tau2_gamma, tau2_delta;  // [j*2 + l]
  std::vector<double> tau2_eps;                // [(i*J + j)*2 + l]
  std::vector<double> sigma2;                  // [i*J + j]
  std::vector<double> psi;                     // [voxel_index*2 + l]
  std::vector<double> vp;                      // [voxel_index]
};

ModelState make_state(const StudyLayout& layout);

inline double treatment_indicator(int scan) { return scan == 1 ? 1.0 : 0.0; }

// E[psi_{ijk.}] = alpha + x_i beta + gamma_j + x_i delta_j, per component
std::array<double, 2> psi_mean(const ModelState& s, int scan, int patient);

// rows are the two kinetic components; columns multiply
// (alpha1, beta1, alpha2, beta2, gamma_j1, delta_j1, gamma_j2, delta_j2)
std::array<std::array<double, 8>, 2> design_row(int scan);

KineticParams kinetic_from_psi(double psi1, double psi2, double vp);

// joint log prior of all parameters (flat over alpha, beta)
double log_prior_density(const ModelState& s, const StudyLayout& layout);

// observed study held in memory: layout plus one series per voxel
struct StudyData {
  StudyLayout layout;
  AifParams aif;
  std::vector<CtcSeries> series;  // [layout.voxel_index(i, j, k)]
  std::string study_id;
};

}  // namespace dcehier
