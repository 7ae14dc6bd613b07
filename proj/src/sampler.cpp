#include "dcehier/sampler.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

#include "dcehier/stats.hpp"

namespace dcehier {

namespace {

void check_config(const McmcConfig& cfg) {
  if (cfg.burn_in < 0) throw std::invalid_argument("burn_in must be >= 0");
  if (cfg.thin < 1) throw std::invalid_argument("thin must be >= 1");
  if (cfg.iterations < cfg.thin)
    throw std::invalid_argument("iterations must be >= thin");
  if (!(cfg.target_accept_lo > 0.0) ||
      !(cfg.target_accept_hi > cfg.target_accept_lo) ||
      !(cfg.target_accept_hi < 1.0))
    throw std::invalid_argument("target acceptance interval invalid");
  if (cfg.adapt_interval < 1)
    throw std::invalid_argument("adapt_interval must be >= 1");
  if (!(cfg.psi_proposal_sd > 0.0) || !(cfg.vp_proposal_sd > 0.0))
    throw std::invalid_argument("proposal sds must be positive");
}

void check_state_shape(const StudyLayout& layout, const ModelState& s) {
  auto J = std::size_t(layout.n_patients);
  auto IJ = std::size_t(layout.n_scans) * J;
  bool ok = s.gamma.size() == J * 2 && s.delta.size() == J * 2 &&
            s.tau2_gamma.size() == J * 2 && s.tau2_delta.size() == J * 2 &&
            s.tau2_eps.size() == IJ * 2 && s.sigma2.size() == IJ &&
            s.psi.size() == layout.total_voxels() * 2 &&
            s.vp.size() == layout.total_voxels();
  if (!ok) throw std::invalid_argument("state does not match study layout");
}

}  // namespace

ModelState initial_state(const StudyData& data, const InitOptions& opts) {
  const auto& layout = data.layout;
  ModelState s = make_state(layout);
  s.alpha = opts.alpha.value_or(std::array<double, 2>{std::log(0.2), 0.0});
  auto J = std::size_t(layout.n_patients);
  for (int i = 0; i < layout.n_scans; ++i) {
    for (int j = 0; j < layout.n_patients; ++j) {
      auto m = psi_mean(s, i, j);
      for (int k = 0; k < layout.nvox(i, j); ++k) {
        auto v = layout.voxel_index(i, j, k);
        s.psi[v * 2] = m[0];
        s.psi[v * 2 + 1] = m[1];
        s.vp[v] = 0.05;
      }
      // pre-injection frames pooled over the block estimate the noise floor
      const auto& times = layout.grids[std::size_t(i)][std::size_t(j)].times;
      std::size_t n_pre = 0;
      while (n_pre < times.size() && times[n_pre] < 0.0) ++n_pre;
      double sum = 0.0, sum2 = 0.0;
      std::size_t cnt = 0;
      for (int k = 0; k < layout.nvox(i, j); ++k) {
        const auto& y = data.series[layout.voxel_index(i, j, k)];
        for (std::size_t f = 0; f < n_pre; ++f) {
          sum += y[f];
          sum2 += y[f] * y[f];
          ++cnt;
        }
      }
      double var = 0.01;
      if (cnt >= 2) {
        double mean = sum / double(cnt);
        var = (sum2 - double(cnt) * mean * mean) / double(cnt - 1);
      }
      s.sigma2[std::size_t(i) * J + std::size_t(j)] = std::max(var, 1e-8);
    }
  }
  return s;
}

EffectsConditional effects_conditional(const StudyLayout& layout,
                                       const ModelState& s, int l) {
  int J = layout.n_patients;
  int P = 2 + 2 * J;
  EffectsConditional c;
  c.precision = Eigen::MatrixXd::Zero(P, P);
  c.shift = Eigen::VectorXd::Zero(P);
  for (int j = 0; j < J; ++j) {
    auto jl = std::size_t(j) * 2 + std::size_t(l);
    c.precision(2 + j, 2 + j) += 1.0 / s.tau2_gamma[jl];
    c.precision(2 + J + j, 2 + J + j) += 1.0 / s.tau2_delta[jl];
  }
  for (int i = 0; i < layout.n_scans; ++i) {
    double x = treatment_indicator(i);
    for (int j = 0; j < J; ++j) {
      auto ij = std::size_t(i) * std::size_t(J) + std::size_t(j);
      double prec = 1.0 / s.tau2_eps[ij * 2 + std::size_t(l)];
      int n = layout.nvox(i, j);
      double sum_psi = 0.0;
      for (int k = 0; k < n; ++k)
        sum_psi += s.psi[layout.voxel_index(i, j, k) * 2 + std::size_t(l)];
      const int idx[4] = {0, 1, 2 + j, 2 + J + j};
      const double w[4] = {1.0, x, 1.0, x};
      for (int a = 0; a < 4; ++a) {
        if (w[a] == 0.0) continue;
        c.shift(idx[a]) += prec * w[a] * sum_psi;
        for (int b = 0; b < 4; ++b) {
          if (w[b] == 0.0) continue;
          c.precision(idx[a], idx[b]) += double(n) * prec * w[a] * w[b];
        }
      }
    }
  }
  return c;
}

IgMoments tau2_gamma_conditional(const ModelState& s, int patient, int l) {
  double g = s.gamma[std::size_t(patient) * 2 + std::size_t(l)];
  return {priors.tau2_gamma_shape + 0.5, priors.tau2_gamma_scale + 0.5 * g * g};
}

IgMoments tau2_delta_conditional(const ModelState& s, int patient, int l) {
  double d = s.delta[std::size_t(patient) * 2 + std::size_t(l)];
  return {priors.tau2_delta_shape + 0.5, priors.tau2_delta_scale + 0.5 * d * d};
}

IgMoments tau2_eps_conditional(const StudyLayout& layout, const ModelState& s,
                               int scan, int patient, int l) {
  auto m = psi_mean(s, scan, patient);
  int n = layout.nvox(scan, patient);
  double ss = 0.0;
  for (int k = 0; k < n; ++k) {
    double r = s.psi[layout.voxel_index(scan, patient, k) * 2 + std::size_t(l)] -
               m[std::size_t(l)];
    ss += r * r;
  }
  return {priors.tau2_eps_shape + 0.5 * double(n),
          priors.tau2_eps_scale + 0.5 * ss};
}

IgMoments sigma2_conditional(const StudyData& data, const ModelState& s,
                             int scan, int patient) {
  const auto& layout = data.layout;
  const auto& grid = layout.grids[std::size_t(scan)][std::size_t(patient)];
  CurvePlan plan = make_curve_plan(grid, data.aif);
  int n = layout.nvox(scan, patient);
  std::vector<double> model(plan.size());
  double rss = 0.0;
  for (int k = 0; k < n; ++k) {
    auto v = layout.voxel_index(scan, patient, k);
    eval_ctc(plan, kinetic_from_psi(s.psi[v * 2], s.psi[v * 2 + 1], s.vp[v]),
             model.data());
    rss += residual_ss(data.series[v], model);
  }
  double t = double(grid.times.size());
  return {priors.sigma2_shape + 0.5 * double(n) * t,
          priors.sigma2_scale + 0.5 * rss};
}

double adapted_sd(double sd, double rate, const McmcConfig& cfg) {
  if (rate > cfg.target_accept_hi) return sd * 1.1;
  if (rate < cfg.target_accept_lo) return sd * 0.9;
  return sd;
}

ChainRunner::ChainRunner(const StudyData& data, const McmcConfig& cfg,
                         ModelState init)
    : data_(data), cfg_(cfg), st_(std::move(init)), rng_(cfg.seed) {
  check_config(cfg_);
  check_state_shape(data_.layout, st_);
  auto J = std::size_t(data_.layout.n_patients);
  plans_.reserve(std::size_t(data_.layout.n_scans) * J);
  std::size_t max_t = 0;
  for (int i = 0; i < data_.layout.n_scans; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      plans_.push_back(
          make_curve_plan(data_.layout.grids[std::size_t(i)][j], data_.aif));
      max_t = std::max(max_t, plans_.back().t.size());
      auto expected = plans_.back().size();
      for (int k = 0; k < data_.layout.nvox(i, int(j)); ++k) {
        auto v = data_.layout.voxel_index(i, int(j), k);
        if (data_.series[v].size() != expected)
          throw std::invalid_argument("series length does not match grid");
      }
    }
  }
  scratch_.resize(max_t);
  psi_sd_ = cfg_.psi_proposal_sd;
  vp_sd_ = cfg_.vp_proposal_sd;
  conv_.resize(data_.layout.total_voxels());
  pre_rss_.resize(conv_.size());
  rss_.resize(conv_.size());
  refresh_cache();
  for (double r : rss_)
    if (!std::isfinite(r))
      throw std::runtime_error("non-finite likelihood at initial state");
}

void ChainRunner::refresh_cache() {
  auto J = std::size_t(data_.layout.n_patients);
  for (int i = 0; i < data_.layout.n_scans; ++i) {
    for (int j = 0; j < data_.layout.n_patients; ++j) {
      int ij = int(std::size_t(i) * J + std::size_t(j));
      const auto& plan = plans_[std::size_t(ij)];
      for (int k = 0; k < data_.layout.nvox(i, j); ++k) {
        auto v = data_.layout.voxel_index(i, j, k);
        const auto& y = data_.series[v];
        double pr = 0.0;
        for (std::size_t f = 0; f < plan.n_pre; ++f) pr += y[f] * y[f];
        pre_rss_[v] = pr;
        conv_[v].resize(plan.t.size());
        auto s1 = conv_term_spec(std::exp(st_.psi[v * 2]),
                                 std::exp(st_.psi[v * 2 + 1]), plan.aif.m1,
                                 plan.aif.a1, plan.aif.dose, plan.t_max);
        auto s2 = conv_term_spec(std::exp(st_.psi[v * 2]),
                                 std::exp(st_.psi[v * 2 + 1]), plan.aif.m2,
                                 plan.aif.a2, plan.aif.dose, plan.t_max);
        kernels::eval_curve(plan.t.data(), plan.cp.data(), plan.e1.data(),
                            plan.e2.data(), plan.t.size(),
                            std::exp(st_.psi[v * 2 + 1]), 0.0, s1, s2,
                            conv_[v].data());
        rss_[v] = block_rss(v, ij, conv_[v], st_.vp[v]);
      }
    }
  }
}

double ChainRunner::block_rss(std::size_t v, int ij,
                              const std::vector<double>& conv,
                              double vp) const {
  const auto& plan = plans_[std::size_t(ij)];
  const auto& y = data_.series[v];
  double ss = pre_rss_[v];
  for (std::size_t f = 0; f < plan.t.size(); ++f) {
    double r = y[plan.n_pre + f] - (vp * plan.cp[f] + conv[f]);
    ss += r * r;
  }
  return ss;
}

double ChainRunner::cached_rss(int scan, int patient, int k) const {
  return rss_[data_.layout.voxel_index(scan, patient, k)];
}

void ChainRunner::set_proposal_sds(double psi_sd, double vp_sd) {
  psi_sd_ = psi_sd;
  vp_sd_ = vp_sd;
}

void ChainRunner::gibbs_effects(int l) {
  auto cond = effects_conditional(data_.layout, st_, l);
  Eigen::LLT<Eigen::MatrixXd> llt(cond.precision);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("effects precision matrix not positive definite");
  Eigen::VectorXd mu = llt.solve(cond.shift);
  int P = int(cond.shift.size());
  Eigen::VectorXd z(P);
  for (int p = 0; p < P; ++p) z(p) = rng_.normal();
  Eigen::VectorXd xi = mu + llt.matrixU().solve(z);
  int J = data_.layout.n_patients;
  st_.alpha[std::size_t(l)] = xi(0);
  st_.beta[std::size_t(l)] = xi(1);
  for (int j = 0; j < J; ++j) {
    st_.gamma[std::size_t(j) * 2 + std::size_t(l)] = xi(2 + j);
    st_.delta[std::size_t(j) * 2 + std::size_t(l)] = xi(2 + J + j);
  }
}

void ChainRunner::gibbs_patient_variances() {
  for (int j = 0; j < data_.layout.n_patients; ++j) {
    for (int l = 0; l < 2; ++l) {
      auto jl = std::size_t(j) * 2 + std::size_t(l);
      auto g = tau2_gamma_conditional(st_, j, l);
      st_.tau2_gamma[jl] = rng_.inv_gamma(g.shape, g.scale);
      auto d = tau2_delta_conditional(st_, j, l);
      st_.tau2_delta[jl] = rng_.inv_gamma(d.shape, d.scale);
    }
  }
}

void ChainRunner::gibbs_voxel_variances() {
  auto J = std::size_t(data_.layout.n_patients);
  for (int i = 0; i < data_.layout.n_scans; ++i) {
    for (int j = 0; j < data_.layout.n_patients; ++j) {
      auto ij = std::size_t(i) * J + std::size_t(j);
      for (int l = 0; l < 2; ++l) {
        auto c = tau2_eps_conditional(data_.layout, st_, i, j, l);
        st_.tau2_eps[ij * 2 + std::size_t(l)] = rng_.inv_gamma(c.shape, c.scale);
      }
    }
  }
}

void ChainRunner::gibbs_noise_variances() {
  auto J = std::size_t(data_.layout.n_patients);
  for (int i = 0; i < data_.layout.n_scans; ++i) {
    for (int j = 0; j < data_.layout.n_patients; ++j) {
      auto ij = std::size_t(i) * J + std::size_t(j);
      double total = 0.0;
      for (int k = 0; k < data_.layout.nvox(i, j); ++k)
        total += rss_[data_.layout.voxel_index(i, j, k)];
      double t = double(
          data_.layout.grids[std::size_t(i)][std::size_t(j)].times.size());
      double n = double(data_.layout.nvox(i, j));
      st_.sigma2[ij] = rng_.inv_gamma(priors.sigma2_shape + 0.5 * n * t,
                                      priors.sigma2_scale + 0.5 * total);
    }
  }
}

bool ChainRunner::mh_update_psi(int scan, int patient, int k) {
  auto J = std::size_t(data_.layout.n_patients);
  int ij = int(std::size_t(scan) * J + std::size_t(patient));
  const auto& plan = plans_[std::size_t(ij)];
  auto v = data_.layout.voxel_index(scan, patient, k);
  auto m = psi_mean(st_, scan, patient);
  double t1 = st_.tau2_eps[std::size_t(ij) * 2];
  double t2 = st_.tau2_eps[std::size_t(ij) * 2 + 1];
  double sigma2 = st_.sigma2[std::size_t(ij)];
  double p1 = st_.psi[v * 2], p2 = st_.psi[v * 2 + 1];
  // the family sd scales the conditioning block's prior sd, so step sizes
  // track tau2_eps; the kernel for psi given the rest stays symmetric
  double q1 = p1 + psi_sd_ * std::sqrt(t1) * rng_.normal();
  double q2 = p2 + psi_sd_ * std::sqrt(t2) * rng_.normal();
  double log_u = std::log(rng_.uniform01());

  double kt = std::exp(q1), kep = std::exp(q2);
  auto s1 = conv_term_spec(kt, kep, plan.aif.m1, plan.aif.a1, plan.aif.dose,
                           plan.t_max);
  auto s2 = conv_term_spec(kt, kep, plan.aif.m2, plan.aif.a2, plan.aif.dose,
                           plan.t_max);
  kernels::eval_curve(plan.t.data(), plan.cp.data(), plan.e1.data(),
                      plan.e2.data(), plan.t.size(), kep, 0.0, s1, s2,
                      scratch_.data());
  const auto& y = data_.series[v];
  double vp = st_.vp[v];
  double rss_new = pre_rss_[v];
  for (std::size_t f = 0; f < plan.t.size(); ++f) {
    double r = y[plan.n_pre + f] - (vp * plan.cp[f] + scratch_[f]);
    rss_new += r * r;
  }
  double d1n = q1 - m[0], d1o = p1 - m[0];
  double d2n = q2 - m[1], d2o = p2 - m[1];
  double log_ratio = (d1o * d1o - d1n * d1n) / (2.0 * t1) +
                     (d2o * d2o - d2n * d2n) / (2.0 * t2) -
                     (rss_new - rss_[v]) / (2.0 * sigma2);
  ++(post_burnin_ ? psi_tot_ : psi_tot_b_);
  if (std::isfinite(rss_new) && log_u < log_ratio) {
    st_.psi[v * 2] = q1;
    st_.psi[v * 2 + 1] = q2;
    for (std::size_t f = 0; f < plan.t.size(); ++f) conv_[v][f] = scratch_[f];
    rss_[v] = rss_new;
    ++(post_burnin_ ? psi_acc_ : psi_acc_b_);
    return true;
  }
  return false;
}

bool ChainRunner::mh_update_vp(int scan, int patient, int k) {
  auto J = std::size_t(data_.layout.n_patients);
  int ij = int(std::size_t(scan) * J + std::size_t(patient));
  auto v = data_.layout.voxel_index(scan, patient, k);
  double sigma2 = st_.sigma2[std::size_t(ij)];
  double vp = st_.vp[v];
  double u_new = stats::logit(vp) + vp_sd_ * rng_.normal();
  double log_u = std::log(rng_.uniform01());
  double w = stats::inv_logit(u_new);
  double rss_new = block_rss(v, ij, conv_[v], w);
  double log_ratio = stats::log_beta_pdf(w, priors.vp_a, priors.vp_b) -
                     stats::log_beta_pdf(vp, priors.vp_a, priors.vp_b) +
                     std::log(w) + std::log1p(-w) - std::log(vp) -
                     std::log1p(-vp) -
                     (rss_new - rss_[v]) / (2.0 * sigma2);
  ++(post_burnin_ ? vp_tot_ : vp_tot_b_);
  if (std::isfinite(rss_new) && log_u < log_ratio) {
    st_.vp[v] = w;
    rss_[v] = rss_new;
    ++(post_burnin_ ? vp_acc_ : vp_acc_b_);
    return true;
  }
  return false;
}

void ChainRunner::mh_sweep() {
  for (int i = 0; i < data_.layout.n_scans; ++i) {
    for (int j = 0; j < data_.layout.n_patients; ++j) {
      for (int k = 0; k < data_.layout.nvox(i, j); ++k) {
        mh_update_psi(i, j, k);
        mh_update_vp(i, j, k);
      }
    }
  }
}

void ChainRunner::adapt() {
  if (psi_tot_b_ > 0)
    psi_sd_ = adapted_sd(psi_sd_, double(psi_acc_b_) / double(psi_tot_b_), cfg_);
  if (vp_tot_b_ > 0)
    vp_sd_ = adapted_sd(vp_sd_, double(vp_acc_b_) / double(vp_tot_b_), cfg_);
  psi_acc_b_ = psi_tot_b_ = vp_acc_b_ = vp_tot_b_ = 0;
}

void ChainRunner::step(std::int64_t iter) {
  post_burnin_ = iter > cfg_.burn_in;
  gibbs_effects(0);
  gibbs_effects(1);
  gibbs_patient_variances();
  gibbs_voxel_variances();
  gibbs_noise_variances();
  mh_sweep();
  if (!post_burnin_ && iter % cfg_.adapt_interval == 0) adapt();
}

ChainSamples ChainRunner::run(const Progress& progress) {
  ChainSamples out;
  out.config = cfg_;
  out.layout = data_.layout;
  out.study_id = data_.study_id;
  std::int64_t total = cfg_.burn_in + cfg_.iterations;
  out.draws.reserve(std::size_t(cfg_.iterations / cfg_.thin));
  for (std::int64_t iter = 1; iter <= total; ++iter) {
    step(iter);
    if (iter > cfg_.burn_in && (iter - cfg_.burn_in) % cfg_.thin == 0)
      out.draws.push_back(st_);
    if (progress && (iter % 100 == 0 || iter == total)) progress(iter, total);
  }
  out.acceptance = acceptance();
  return out;
}

AcceptanceReport ChainRunner::acceptance() const {
  AcceptanceReport r;
  r.psi_sd = psi_sd_;
  r.vp_sd = vp_sd_;
  r.psi_proposals = psi_tot_;
  r.vp_proposals = vp_tot_;
  if (psi_tot_ > 0) r.psi_rate = double(psi_acc_) / double(psi_tot_);
  if (vp_tot_ > 0) r.vp_rate = double(vp_acc_) / double(vp_tot_);
  return r;
}

ChainSamples run_chain(const McmcConfig& cfg, const StudyData& data,
                       const ModelState& init,
                       const ChainRunner::Progress& progress) {
  ChainRunner runner(data, cfg, init);
  return runner.run(progress);
}

ChainSamples run_chain(const McmcConfig& cfg, const StudyData& data,
                       const ChainRunner::Progress& progress) {
  return run_chain(cfg, data, initial_state(data), progress);
}

}  // namespace dcehier
