// Study file formats, synthetic study generation with known ground truth,
// and serialization of chains, fits and summaries. Formats are documented
// in FORMATS.md; external files use 1-based scan/patient/voxel indices and
// store times in seconds.
#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcehier/baseline.hpp"
#include "dcehier/hierarchy.hpp"
#include "dcehier/posterior.hpp"
#include "dcehier/sampler.hpp"

namespace dcehier {

struct StudyFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

StudyData load_study(const std::filesystem::path& manifest);
void save_study(const StudyData& data, const std::filesystem::path& dir);

struct SimSpec {
  std::string study_id = "sim";
  int n_patients = 0;
  int n_voxels = 0;      // per (scan, patient)
  int n_time = 0;        // frames per scan
  double dt_seconds = 11.9;
  int n_preinjection = 4;
  std::array<double, 2> alpha{std::log(0.2), 0.0};
  std::array<double, 2> beta{0.0, 0.0};
  double tau2_gamma = 0.01, tau2_delta = 0.01, tau2_eps = 0.04;
  double sigma2 = 0.0025;
  bool vp_beta = true;          // draw vp from Beta(vp_a, vp_b)
  double vp_value = 0.05;       // used when vp_beta is false
  double vp_a = 1.0, vp_b = 19.0;
  AifParams aif;
};

SimSpec load_sim_spec(const std::filesystem::path& path);

struct GroundTruth {
  ModelState state;
  std::vector<CtcSeries> noise_free;  // [voxel_index]
};

struct SimResult {
  StudyData study;
  GroundTruth truth;
};

SimResult simulate_study(const SimSpec& spec, std::uint64_t seed);

void save_ground_truth(const GroundTruth& truth, const StudyLayout& layout,
                       const std::filesystem::path& dir);
GroundTruth load_ground_truth(const std::filesystem::path& dir,
                              const StudyLayout& layout);

// chain: columnar CSV (one row per retained draw) + "<file>.json" sidecar
void save_chain(const ChainSamples& chain, const std::filesystem::path& csv);
ChainSamples load_chain(const std::filesystem::path& csv);

// two-column paired-measurement CSV with a "pre,post" header
void load_pre_post_csv(const std::filesystem::path& path,
                       std::vector<double>& pre, std::vector<double>& post);

void save_fits_csv(const std::vector<NlsFit>& fits, const StudyLayout& layout,
                   const std::filesystem::path& path);
void save_medians_csv(const StudyData& data, const std::vector<NlsFit>& fits,
                      const std::filesystem::path& path);

void save_density_csv(const DensityCurve& curve,
                      const std::filesystem::path& path);

// raw numeric matrix helpers (comma-separated, no header, %.17g)
void save_matrix_csv(const std::vector<std::vector<double>>& rows,
                     const std::filesystem::path& path);
std::vector<std::vector<double>> load_matrix_csv(
    const std::filesystem::path& path);

}  // namespace dcehier
