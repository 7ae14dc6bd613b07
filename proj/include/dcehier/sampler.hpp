// Block MCMC engine: Gaussian Gibbs draws for the fixed and patient
// effects, conjugate inverse-gamma draws for every variance, and adaptive
// random-walk Metropolis-Hastings for voxel-level psi and vp.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dcehier/hierarchy.hpp"
#include "dcehier/rng.hpp"

namespace dcehier {

struct McmcConfig {
  std::int64_t burn_in = 10000;
  std::int64_t iterations = 100000;  // post burn-in
  std::int64_t thin = 100;
  std::uint64_t seed = 1;
  double target_accept_lo = 0.30;
  double target_accept_hi = 0.50;
  std::int64_t adapt_interval = 100;
  // psi proposals scale this family sd by the conditioning block's prior
  // sd sqrt(tau2_eps), so one multiplier serves blocks of any spread
  double psi_proposal_sd = 0.25;
  double vp_proposal_sd = 0.8;  // logit scale
};

struct AcceptanceReport {
  double psi_rate = 0.0, vp_rate = 0.0;  // post burn-in
  double psi_sd = 0.0, vp_sd = 0.0;      // frozen proposal sds
  std::int64_t psi_proposals = 0, vp_proposals = 0;
};

struct ChainSamples {
  McmcConfig config;
  StudyLayout layout;
  std::string study_id;
  AcceptanceReport acceptance;
  std::vector<ModelState> draws;
};

struct InitOptions {
  std::optional<std::array<double, 2>> alpha;  // overrides the default levels
};

ModelState initial_state(const StudyData& data, const InitOptions& opts = {});

// conditional parameters exposed for direct verification

struct IgMoments {
  double shape = 0.0, scale = 0.0;
};

struct EffectsConditional {
  Eigen::MatrixXd precision;  // V
  Eigen::VectorXd shift;      // m; the conditional is N(V^-1 m, V^-1)
};

EffectsConditional effects_conditional(const StudyLayout& layout,
                                       const ModelState& s, int l);
IgMoments tau2_gamma_conditional(const ModelState& s, int patient, int l);
IgMoments tau2_delta_conditional(const ModelState& s, int patient, int l);
IgMoments tau2_eps_conditional(const StudyLayout& layout, const ModelState& s,
                               int scan, int patient, int l);
IgMoments sigma2_conditional(const StudyData& data, const ModelState& s,
                             int scan, int patient);

// multiplicative tuning rule applied per adaptation batch during burn-in
double adapted_sd(double sd, double rate, const McmcConfig& cfg);

class ChainRunner {
public:
  ChainRunner(const StudyData& data, const McmcConfig& cfg, ModelState init);

  void gibbs_effects(int l);
  void gibbs_patient_variances();
  void gibbs_voxel_variances();
  void gibbs_noise_variances();
  bool mh_update_psi(int scan, int patient, int k);
  bool mh_update_vp(int scan, int patient, int k);
  void mh_sweep();
  void adapt();

  // one full iteration in the documented update order; 1-based iter
  void step(std::int64_t iter);

  using Progress = std::function<void(std::int64_t done, std::int64_t total)>;
  ChainSamples run(const Progress& progress = {});

  const ModelState& state() const { return st_; }
  ModelState& mutable_state() { return st_; }
  void refresh_cache();  // call after editing the state externally
  double cached_rss(int scan, int patient, int k) const;
  double psi_sd() const { return psi_sd_; }
  double vp_sd() const { return vp_sd_; }
  void set_proposal_sds(double psi_sd, double vp_sd);
  Rng& rng() { return rng_; }
  AcceptanceReport acceptance() const;

private:
  double block_rss(std::size_t v, int ij, const std::vector<double>& conv,
                   double vp) const;

  const StudyData& data_;
  McmcConfig cfg_;
  ModelState st_;
  Rng rng_;
  std::vector<CurvePlan> plans_;           // [i*J + j]
  std::vector<std::vector<double>> conv_;  // per voxel, post-injection part
  std::vector<double> pre_rss_, rss_;      // per voxel; rss_ spans all frames
  std::vector<double> scratch_;
  double psi_sd_ = 0.0, vp_sd_ = 0.0;
  bool post_burnin_ = false;
  std::int64_t psi_acc_b_ = 0, psi_tot_b_ = 0, vp_acc_b_ = 0, vp_tot_b_ = 0;
  std::int64_t psi_acc_ = 0, psi_tot_ = 0, vp_acc_ = 0, vp_tot_ = 0;
};

ChainSamples run_chain(const McmcConfig& cfg, const StudyData& data,
                       const ModelState& init,
                       const ChainRunner::Progress& progress = {});
ChainSamples run_chain(const McmcConfig& cfg, const StudyData& data,
                       const ChainRunner::Progress& progress = {});

}  // namespace dcehier
