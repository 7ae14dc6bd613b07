// Sampler checks: full conditionals against brute-force linear algebra,
// random-variate moments against reference values, Metropolis-Hastings
// stationary distributions in closed-form limits, adaptation rules, draw
// bookkeeping and determinism.
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dcehier/sampler.hpp"
#include "dcehier/stats.hpp"
#include "dcehier/studyio.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dcehier;

namespace {

// fills psi with reproducible spread-out values around the block means
void scatter_psi(const StudyLayout& layout, ModelState& s, Rng& rng,
                 double sd) {
  for (int i = 0; i < layout.n_scans; ++i)
    for (int j = 0; j < layout.n_patients; ++j) {
      auto m = psi_mean(s, i, j);
      for (int k = 0; k < layout.nvox(i, j); ++k) {
        auto v = layout.voxel_index(i, j, k);
        s.psi[v * 2] = m[0] + sd * rng.normal();
        s.psi[v * 2 + 1] = m[1] + sd * rng.normal();
      }
    }
}

ModelState example_levels(const StudyLayout& layout) {
  ModelState s = make_state(layout);
  s.alpha = {std::log(0.2), 0.0};
  s.beta = {-0.26, -0.11};
  Rng rng(5);
  for (std::size_t jl = 0; jl < s.gamma.size(); ++jl) {
    s.gamma[jl] = 0.1 * rng.normal();
    s.delta[jl] = 0.1 * rng.normal();
    s.tau2_gamma[jl] = 0.5 + 0.2 * rng.uniform01();
    s.tau2_delta[jl] = 0.5 + 0.2 * rng.uniform01();
  }
  for (auto& t : s.tau2_eps) t = 0.03 + 0.05 * rng.uniform01();
  for (auto& v : s.sigma2) v = 0.0025;
  return s;
}

}  // namespace

TEST_CASE("effects conditional equals brute-force normal equations") {
  for (int J : {1, 3}) {
    auto layout = testutil::uniform_layout(J, 7, 12, 0.2, 2);
    auto s = example_levels(layout);
    Rng rng(11);
    scatter_psi(layout, s, rng, 0.3);

    for (int l = 0; l < 2; ++l) {
      int P = 2 + 2 * J;
      Eigen::MatrixXd V = Eigen::MatrixXd::Zero(P, P);
      Eigen::VectorXd m = Eigen::VectorXd::Zero(P);
      for (int j = 0; j < J; ++j) {
        auto jl = std::size_t(j) * 2 + std::size_t(l);
        V(2 + j, 2 + j) += 1.0 / s.tau2_gamma[jl];
        V(2 + J + j, 2 + J + j) += 1.0 / s.tau2_delta[jl];
      }
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < J; ++j) {
          double prec =
              1.0 / s.tau2_eps[(std::size_t(i) * std::size_t(J) + std::size_t(j)) * 2 +
                               std::size_t(l)];
          Eigen::VectorXd w = Eigen::VectorXd::Zero(P);
          w(0) = 1.0;
          w(1) = treatment_indicator(i);
          w(2 + j) = 1.0;
          w(2 + J + j) = treatment_indicator(i);
          for (int k = 0; k < layout.nvox(i, j); ++k) {
            double psi =
                s.psi[layout.voxel_index(i, j, k) * 2 + std::size_t(l)];
            V += prec * w * w.transpose();
            m += prec * psi * w;
          }
        }

      auto cond = effects_conditional(layout, s, l);
      REQUIRE(cond.precision.rows() == P);
      for (int a = 0; a < P; ++a) {
        CHECK(std::abs(cond.shift(a) - m(a)) <= 1e-9 * (1.0 + std::abs(m(a))));
        for (int b = 0; b < P; ++b)
          CHECK(std::abs(cond.precision(a, b) - V(a, b)) <=
                1e-9 * (1.0 + std::abs(V(a, b))));
      }
    }
  }
}

TEST_CASE("effects conditional mean reproduces block means as tau2_eps -> 0") {
  auto layout = testutil::uniform_layout(2, 5, 10, 0.2, 2);
  auto s = example_levels(layout);
  Rng rng(21);
  scatter_psi(layout, s, rng, 0.4);
  for (auto& t : s.tau2_eps) t = 1e-6;
  for (auto& t : s.tau2_gamma) t = 1e4;
  for (auto& t : s.tau2_delta) t = 1e4;

  auto cond = effects_conditional(layout, s, 0);
  Eigen::VectorXd mu = cond.precision.llt().solve(cond.shift);
  int J = layout.n_patients;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < J; ++j) {
      double x = treatment_indicator(i);
      double fitted = mu(0) + x * mu(1) + mu(2 + j) + x * mu(2 + J + j);
      double mean = 0.0;
      for (int k = 0; k < layout.nvox(i, j); ++k)
        mean += s.psi[layout.voxel_index(i, j, k) * 2];
      mean /= double(layout.nvox(i, j));
      CHECK(fitted == doctest::Approx(mean).epsilon(1e-4));
    }
}

TEST_CASE("effects draws have the conditional mean and covariance") {
  auto layout = testutil::uniform_layout(1, 6, 10, 0.2, 2);
  auto truth = testutil::state_at_means(layout, example_levels(layout), 0.05,
                                        0.0025);
  Rng noise(3);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, &noise);

  McmcConfig cfg;
  cfg.seed = 17;
  auto init = example_levels(layout);
  Rng rng(31);
  scatter_psi(layout, init, rng, 0.2);
  init.sigma2.assign(init.sigma2.size(), 0.0025);
  init.vp.assign(init.vp.size(), 0.05);
  ChainRunner runner(data, cfg, init);

  auto cond = effects_conditional(layout, runner.state(), 0);
  Eigen::MatrixXd Sigma =
      cond.precision.llt().solve(Eigen::MatrixXd::Identity(4, 4));
  Eigen::VectorXd mu = cond.precision.llt().solve(cond.shift);

  const int n = 20000;
  Eigen::MatrixXd draws(n, 4);
  for (int it = 0; it < n; ++it) {
    runner.gibbs_effects(0);
    const auto& st = runner.state();
    draws(it, 0) = st.alpha[0];
    draws(it, 1) = st.beta[0];
    draws(it, 2) = st.gamma[0];
    draws(it, 3) = st.delta[0];
  }
  Eigen::VectorXd mean = draws.colwise().mean();
  Eigen::MatrixXd centered = draws.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);

  for (int p = 0; p < 4; ++p) {
    double se = std::sqrt(Sigma(p, p) / double(n));
    CHECK(std::abs(mean(p) - mu(p)) <= 5.0 * se);
    CHECK(cov(p, p) == doctest::Approx(Sigma(p, p)).epsilon(0.10));
  }
  CHECK(std::abs(cov(0, 2) - Sigma(0, 2)) <=
        0.1 * std::sqrt(Sigma(0, 0) * Sigma(2, 2)));
}

TEST_CASE("variance conditionals match their closed forms") {
  auto layout = testutil::uniform_layout(1, 10, 8, 0.2, 2);
  auto s = testutil::state_at_means(layout, example_levels(layout), 0.05, 0.0025);

  // zero spread: scale collapses to the prior scale
  auto c0 = tau2_eps_conditional(layout, s, 0, 0, 0);
  CHECK(c0.shape == 1.0 + 0.5 * 10.0);
  CHECK(c0.scale == 1e-5);

  // a single perturbed voxel contributes r^2/2
  double r = 0.37;
  s.psi[layout.voxel_index(0, 0, 3) * 2] += r;
  auto c1 = tau2_eps_conditional(layout, s, 0, 0, 0);
  CHECK(c1.scale == doctest::Approx(1e-5 + 0.5 * r * r).epsilon(1e-14));

  auto g = tau2_gamma_conditional(s, 0, 1);
  CHECK(g.shape == 1.5);
  CHECK(g.scale ==
        doctest::Approx(1.0 + 0.5 * s.gamma[1] * s.gamma[1]).epsilon(1e-15));
  s.gamma[1] = 0.0;
  g = tau2_gamma_conditional(s, 0, 1);
  CHECK(g.scale == 1.0);

  auto d = tau2_delta_conditional(s, 0, 0);
  CHECK(d.shape == 1.5);
  CHECK(d.scale ==
        doctest::Approx(1.0 + 0.5 * s.delta[0] * s.delta[0]).epsilon(1e-15));
}

TEST_CASE("noise conditional uses the exact model residuals") {
  auto layout = testutil::uniform_layout(1, 4, 9, 0.25, 2);
  auto s = testutil::state_at_means(layout, example_levels(layout), 0.04, 0.0025);
  auto data = testutil::study_from_state(layout, s, AifParams{}, nullptr);

  // noise-free data evaluated at the generating state: rss is exactly 0
  auto c = sigma2_conditional(data, s, 1, 0);
  CHECK(c.shape == 1.0 + 0.5 * 4.0 * 9.0);
  CHECK(c.scale == 1e-2);

  // one perturbed observation contributes r^2/2
  double r = 0.123;
  data.series[layout.voxel_index(1, 0, 2)][5] += r;
  auto c1 = sigma2_conditional(data, s, 1, 0);
  CHECK(c1.scale == doctest::Approx(1e-2 + 0.5 * r * r).epsilon(1e-12));
}

TEST_CASE("random variates match reference distributions") {
  Rng rng(123);
  const int n = 200000;

  SUBCASE("uniform01 stays inside the open interval and is uniform") {
    std::vector<double> x(n);
    for (auto& v : x) {
      v = rng.uniform01();
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
    }
    CHECK(testutil::ks_distance(x, [](double t) { return t; }) < 0.005);
  }

  SUBCASE("normal KS") {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    CHECK(testutil::ks_distance(x, [](double t) { return stats::normal_cdf(t); }) <
          0.005);
  }

  SUBCASE("gamma moments and medians") {
    struct Ref {
      double shape, median;
    };
    for (auto ref : {Ref{0.3, 0.073131135866951982},
                     Ref{1.7, 1.380762075939121},
                     Ref{4.2, 3.8717832095760842}}) {
      std::vector<double> x(n);
      for (auto& v : x) v = rng.gamma(ref.shape);
      CHECK(stats::mean(x) ==
            doctest::Approx(ref.shape).epsilon(0.02));
      CHECK(stats::variance(x) == doctest::Approx(ref.shape).epsilon(0.05));
      std::nth_element(x.begin(), x.begin() + n / 2, x.end());
      CHECK(x[n / 2] == doctest::Approx(ref.median).epsilon(0.02));
    }
  }

  SUBCASE("inverse gamma median") {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.inv_gamma(1.5, 1.0);
    std::nth_element(x.begin(), x.begin() + n / 2, x.end());
    CHECK(x[n / 2] == doctest::Approx(0.8453178681336283).epsilon(0.02));
  }

  SUBCASE("beta(1,19) against its closed-form CDF") {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.beta(1.0, 19.0);
    CHECK(stats::mean(x) == doctest::Approx(0.05).epsilon(0.02));
    CHECK(testutil::ks_distance(
              x, [](double t) { return 1.0 - std::pow(1.0 - t, 19.0); }) <
          0.005);
  }
}

TEST_CASE("metropolis accepts everything when the proposal is the current point") {
  auto layout = testutil::uniform_layout(1, 3, 10, 0.2, 2);
  auto truth = testutil::state_at_means(layout, example_levels(layout), 0.05,
                                        0.0025);
  Rng noise(9);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, &noise);
  McmcConfig cfg;
  ChainRunner runner(data, cfg, initial_state(data));
  runner.set_proposal_sds(0.0, 0.0);
  for (int rep = 0; rep < 100; ++rep)
    for (int k = 0; k < 3; ++k) {
      CHECK(runner.mh_update_psi(0, 0, k));
      CHECK(runner.mh_update_vp(0, 0, k));
    }
}

TEST_CASE("metropolis accepts everything under a flat conditional") {
  auto layout = testutil::uniform_layout(1, 2, 8, 0.25, 2);
  auto truth = testutil::state_at_means(layout, example_levels(layout), 0.05,
                                        0.0025);
  Rng noise(13);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, &noise);
  McmcConfig cfg;
  ChainRunner runner(data, cfg, initial_state(data));
  auto& st = runner.mutable_state();
  for (auto& t : st.tau2_eps) t = 1e16;  // flat psi prior
  for (auto& v : st.sigma2) v = 1e16;    // flat likelihood
  runner.refresh_cache();
  // the psi step size is the multiplier times sqrt(tau2_eps), so keep the
  // multiplier tiny to stay in the finite range of the curve model; vp keeps
  // its beta prior regardless of the likelihood, so its steps must be tiny
  // for near-certain acceptance
  runner.set_proposal_sds(1e-12, 1e-9);
  int acc = 0, tot = 0;
  for (int rep = 0; rep < 200; ++rep)
    for (int k = 0; k < 2; ++k) {
      acc += runner.mh_update_psi(0, 0, k);
      acc += runner.mh_update_vp(0, 0, k);
      tot += 2;
    }
  CHECK(acc == tot);
}

TEST_CASE("psi updates leave their conditional prior invariant") {
  // flat likelihood: the stationary law of psi is N(mean, tau2_eps)
  auto layout = testutil::uniform_layout(1, 1, 6, 0.3, 1);
  auto levels = make_state(layout);
  levels.alpha = {-1.6, -0.1};
  auto truth = testutil::state_at_means(layout, levels, 0.05, 0.0025);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, nullptr);
  McmcConfig cfg;
  cfg.seed = 29;
  ChainRunner runner(data, cfg, initial_state(data));
  auto& st = runner.mutable_state();
  st.alpha = levels.alpha;
  std::fill(st.gamma.begin(), st.gamma.end(), 0.0);
  std::fill(st.delta.begin(), st.delta.end(), 0.0);
  st.tau2_eps = {0.04, 0.09};
  st.sigma2 = {1e16, 1e16};
  runner.refresh_cache();
  runner.set_proposal_sds(2.4, 0.8);

  const int n = 200000;
  std::vector<double> psi1, psi2;
  psi1.reserve(n);
  for (int it = 0; it < n; ++it) {
    runner.mh_update_psi(0, 0, 0);
    psi1.push_back(runner.state().psi[0]);
    psi2.push_back(runner.state().psi[1]);
  }
  CHECK(testutil::ks_distance(psi1, [&](double t) {
          return stats::normal_cdf((t - levels.alpha[0]) / 0.2);
        }) < 0.02);
  CHECK(testutil::ks_distance(psi2, [&](double t) {
          return stats::normal_cdf((t - levels.alpha[1]) / 0.3);
        }) < 0.02);
}

TEST_CASE("vp updates leave the beta prior invariant under a flat likelihood") {
  auto layout = testutil::uniform_layout(1, 1, 6, 0.3, 1);
  auto truth = testutil::state_at_means(layout, example_levels(layout), 0.05,
                                        0.0025);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, nullptr);
  McmcConfig cfg;
  cfg.seed = 37;
  ChainRunner runner(data, cfg, initial_state(data));
  runner.mutable_state().sigma2 = {1e16, 1e16};
  runner.refresh_cache();

  const int n = 200000;
  std::vector<double> vp;
  vp.reserve(n);
  for (int it = 0; it < n; ++it) {
    runner.mh_update_vp(0, 0, 0);
    vp.push_back(runner.state().vp[0]);
  }
  CHECK(stats::mean(vp) == doctest::Approx(0.05).epsilon(0.05));
  CHECK(testutil::ks_distance(
            vp, [](double t) { return 1.0 - std::pow(1.0 - t, 19.0); }) < 0.02);
}

TEST_CASE("proposal adaptation follows the acceptance band") {
  McmcConfig cfg;
  CHECK(adapted_sd(0.2, 0.40, cfg) == 0.2);
  CHECK(adapted_sd(0.2, 0.80, cfg) == doctest::Approx(0.22).epsilon(1e-15));
  CHECK(adapted_sd(0.2, 0.20, cfg) == doctest::Approx(0.18).epsilon(1e-15));
  CHECK(adapted_sd(0.2, 0.50, cfg) == 0.2);  // boundary is inside the band
  CHECK(adapted_sd(0.2, 0.30, cfg) == 0.2);
}

TEST_CASE("adaptation runs during burn-in and freezes afterwards") {
  auto layout = testutil::uniform_layout(1, 4, 10, 0.2, 2);
  auto truth = testutil::state_at_means(layout, example_levels(layout), 0.05,
                                        0.0025);
  Rng noise(41);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, &noise);
  McmcConfig cfg;
  cfg.burn_in = 300;
  cfg.iterations = 200;
  cfg.thin = 100;
  cfg.adapt_interval = 100;
  ChainRunner runner(data, cfg, initial_state(data));
  // absurdly wide proposals: every batch during burn-in shrinks by 0.9
  runner.set_proposal_sds(50.0, 50.0);
  std::vector<double> sds;
  for (std::int64_t iter = 1; iter <= 500; ++iter) {
    runner.step(iter);
    sds.push_back(runner.psi_sd());
  }
  CHECK(sds[99] == doctest::Approx(45.0).epsilon(1e-12));
  CHECK(sds[199] == doctest::Approx(40.5).epsilon(1e-12));
  CHECK(sds[299] == doctest::Approx(36.45).epsilon(1e-12));
  for (std::size_t i = 300; i < sds.size(); ++i) CHECK(sds[i] == sds[299]);
  CHECK(runner.acceptance().psi_sd == sds.back());
}

TEST_CASE("retained draw count is iterations over thin") {
  auto layout = testutil::uniform_layout(1, 2, 8, 0.25, 2);
  auto truth = testutil::state_at_means(layout, example_levels(layout), 0.05,
                                        0.0025);
  Rng noise(43);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, &noise);

  McmcConfig cfg;
  cfg.burn_in = 20;
  cfg.iterations = 100;
  cfg.thin = 100;
  auto one = run_chain(cfg, data);
  CHECK(one.draws.size() == 1);

  cfg.iterations = 300;
  cfg.thin = 50;
  auto six = run_chain(cfg, data);
  CHECK(six.draws.size() == 6);

  McmcConfig defaults;
  CHECK(defaults.iterations / defaults.thin == 1000);
}

TEST_CASE("invalid configurations are rejected") {
  auto layout = testutil::uniform_layout(1, 1, 6, 0.3, 1);
  auto truth = testutil::state_at_means(layout, example_levels(layout), 0.05,
                                        0.0025);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, nullptr);
  auto bad = [&](auto mutate) {
    McmcConfig cfg;
    cfg.burn_in = 10;
    cfg.iterations = 20;
    cfg.thin = 10;
    mutate(cfg);
    CHECK_THROWS_AS(run_chain(cfg, data), std::invalid_argument);
  };
  bad([](McmcConfig& c) { c.burn_in = -1; });
  bad([](McmcConfig& c) { c.thin = 0; });
  bad([](McmcConfig& c) { c.iterations = 5; });  // below thin
  bad([](McmcConfig& c) { c.target_accept_hi = c.target_accept_lo; });
  bad([](McmcConfig& c) { c.adapt_interval = 0; });
  bad([](McmcConfig& c) { c.psi_proposal_sd = 0.0; });
  bad([](McmcConfig& c) { c.vp_proposal_sd = -1.0; });
}

TEST_CASE("chains are bit-reproducible for a fixed seed") {
  auto layout = testutil::uniform_layout(2, 3, 10, 0.2, 2);
  auto truth = testutil::state_at_means(layout, example_levels(layout), 0.05,
                                        0.0025);
  Rng noise(47);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, &noise);
  McmcConfig cfg;
  cfg.burn_in = 50;
  cfg.iterations = 100;
  cfg.thin = 20;
  cfg.seed = 99;
  auto a = run_chain(cfg, data);
  auto b = run_chain(cfg, data);
  REQUIRE(a.draws.size() == b.draws.size());
  for (std::size_t d = 0; d < a.draws.size(); ++d) {
    CHECK(a.draws[d].alpha == b.draws[d].alpha);
    CHECK(a.draws[d].beta == b.draws[d].beta);
    CHECK(a.draws[d].psi == b.draws[d].psi);
    CHECK(a.draws[d].vp == b.draws[d].vp);
    CHECK(a.draws[d].sigma2 == b.draws[d].sigma2);
    CHECK(a.draws[d].tau2_eps == b.draws[d].tau2_eps);
  }

  cfg.seed = 100;
  auto c = run_chain(cfg, data);
  CHECK(c.draws.back().psi != a.draws.back().psi);
}

TEST_CASE("cached residuals track a fresh recomputation") {
  auto layout = testutil::uniform_layout(1, 3, 12, 0.2, 3);
  auto truth = testutil::state_at_means(layout, example_levels(layout), 0.05,
                                        0.0025);
  Rng noise(53);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, &noise);
  McmcConfig cfg;
  cfg.burn_in = 30;
  cfg.iterations = 30;
  cfg.thin = 30;
  ChainRunner runner(data, cfg, initial_state(data));
  for (std::int64_t iter = 1; iter <= 60; ++iter) runner.step(iter);

  const auto& st = runner.state();
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 3; ++k) {
      auto v = layout.voxel_index(i, 0, k);
      auto p = kinetic_from_psi(st.psi[v * 2], st.psi[v * 2 + 1], st.vp[v]);
      auto model = ctc_model(p, layout.grids[std::size_t(i)][0], data.aif);
      double want = residual_ss(data.series[v], model);
      CHECK(runner.cached_rss(i, 0, k) ==
            doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("initial state sits at the level means with pooled pre-frame noise") {
  auto layout = testutil::uniform_layout(1, 30, 12, 0.2, 4);
  auto levels = make_state(layout);
  levels.alpha = {std::log(0.2), 0.0};
  auto truth = testutil::state_at_means(layout, levels, 0.05, 0.01);
  Rng noise(59);
  auto data = testutil::study_from_state(layout, truth, AifParams{}, &noise);

  auto s = initial_state(data);
  for (std::size_t v = 0; v < layout.total_voxels(); ++v) {
    CHECK(s.psi[v * 2] == std::log(0.2));
    CHECK(s.psi[v * 2 + 1] == 0.0);
    CHECK(s.vp[v] == 0.05);
  }
  // 30 voxels x 4 pre frames of sd-0.1 noise estimate sigma2 = 0.01
  for (double v : s.sigma2) {
    CHECK(v > 0.005);
    CHECK(v < 0.02);
  }

  InitOptions opts;
  opts.alpha = std::array<double, 2>{-1.0, -0.5};
  auto s2 = initial_state(data, opts);
  CHECK(s2.psi[0] == -1.0);
  CHECK(s2.psi[1] == -0.5);

  // constant pre-injection frames clamp the estimate at the floor
  auto flat = data;
  for (auto& y : flat.series)
    for (int f = 0; f < 4; ++f) y[std::size_t(f)] = 0.0;
  auto s3 = initial_state(flat);
  CHECK(s3.sigma2[0] == 1e-8);
}

TEST_CASE("chain started at the generating truth stays on it") {
  // stationarity sanity: a chain initialized at the generating state keeps
  // the identified quantities near truth.  At this study size the posterior
  // is degenerate per (scan, patient) block: compressing one kinetic
  // coordinate onto the block mean fits the data as well as the generating
  // state (the other coordinate and v_p absorb the shape change), and the
  // IG(1, 1e-5) prior then drives that coordinate's tau2_eps toward its
  // floor.  Block means, sigma2, and alpha survive the compression, so only
  // those are asserted tightly; tau2_eps is checked block-wise on the
  // coordinate that keeps the spread.
  SimSpec spec;
  spec.study_id = "recovery";
  spec.n_patients = 3;
  spec.n_voxels = 25;
  spec.n_time = 40;
  spec.n_preinjection = 4;
  spec.alpha = {std::log(0.2), 0.0};
  spec.beta = {-0.26, -0.11};
  spec.tau2_gamma = 0.01;
  spec.tau2_delta = 0.01;
  spec.tau2_eps = 0.04;
  spec.sigma2 = 0.0025;
  auto sim = simulate_study(spec, 77);

  McmcConfig cfg;
  cfg.burn_in = 600;
  cfg.iterations = 3000;
  cfg.thin = 10;
  cfg.seed = 3;
  auto chain = run_chain(cfg, sim.study, sim.truth.state);
  REQUIRE(chain.draws.size() == 300);

  CHECK(chain.acceptance.psi_rate > 0.15);
  CHECK(chain.acceptance.psi_rate < 0.70);
  CHECK(chain.acceptance.vp_rate > 0.15);
  CHECK(chain.acceptance.vp_rate < 0.70);

  auto mean_of = [&](auto f) {
    double s = 0.0;
    for (const auto& d : chain.draws) s += f(d);
    return s / double(chain.draws.size());
  };

  // retained-draw mean of alpha1 within 3 Monte Carlo standard errors
  // (batch means) of the generating value
  {
    std::vector<double> a1;
    for (const auto& d : chain.draws) a1.push_back(d.alpha[0]);
    const std::size_t B = 15, m = a1.size() / B;
    std::vector<double> bm(B, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < m; ++t) bm[b] += a1[b * m + t];
      bm[b] /= double(m);
    }
    double mcse = std::sqrt(stats::variance(bm) / double(B));
    CHECK(std::abs(stats::mean(a1) - spec.alpha[0]) <= 3.0 * mcse);
  }

  for (std::size_t ij = 0; ij < 6; ++ij) {
    double m = mean_of([&](const ModelState& d) { return d.sigma2[ij]; });
    CHECK(m > 0.0025 * 0.6);
    CHECK(m < 0.0025 * 1.6);
    double t1 = mean_of([&](const ModelState& d) { return d.tau2_eps[ij * 2]; });
    double t2 = mean_of([&](const ModelState& d) { return d.tau2_eps[ij * 2 + 1]; });
    CHECK(t1 > 0.0);
    CHECK(t2 > 0.0);
    // at least one coordinate per block keeps a data-scale spread
    CHECK(std::max(t1, t2) > 0.01);
    CHECK(std::max(t1, t2) < 0.50);
  }

  // block-level levels are identified by the voxel data
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      auto want = psi_mean(sim.truth.state, i, j);
      for (int l = 0; l < 2; ++l) {
        double got = mean_of([&](const ModelState& d) {
          return psi_mean(d, i, j)[std::size_t(l)];
        });
        CHECK(std::abs(got - want[std::size_t(l)]) < 0.20);
      }
    }
}
