// Command-line front end: synthetic study generation, MCMC fitting,
// posterior summaries, hypothesis reports and the least-squares baseline.
#include <cinttypes>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dcehier/baseline.hpp"
#include "dcehier/posterior.hpp"
#include "dcehier/sampler.hpp"
#include "dcehier/studyio.hpp"

namespace {

using dcehier::ChainSamples;
using dcehier::PosteriorSummary;
using nlohmann::json;

json summary_to_json(const PosteriorSummary& s) {
  json q = json::object();
  for (std::size_t i = 0; i < s.probs.size(); ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "%g%%", 100.0 * s.probs[i]);
    q[key] = s.quantiles[i];
  }
  return json{{"mean", s.mean},
          {"sd", s.sd},
          {"median", s.median},
          {"quantiles", std::move(q)},
          {"n", s.n}};
}

std::vector<double> beta_samples(const ChainSamples& chain, int l) {
  return dcehier::extract(chain, [l](const dcehier::ModelState& st) {
    return st.beta[std::size_t(l)];
  });
}

void progress_to_stderr(std::int64_t done, std::int64_t total) {
  std::fprintf(stderr, "\r%" PRId64 "/%" PRId64, done, total);
  if (done == total) std::fputc('\n', stderr);
  std::fflush(stderr);
}

int run_simulate(const std::string& spec_path, std::uint64_t seed,
                 const std::string& out_dir) {
  auto spec = dcehier::load_sim_spec(spec_path);
  auto sim = dcehier::simulate_study(spec, seed);
  dcehier::save_study(sim.study, out_dir);
  dcehier::save_ground_truth(sim.truth, sim.study.layout,
                             std::filesystem::path(out_dir) / "truth");
  std::printf("wrote study '%s': %d patients, %zu voxels, seed %" PRIu64 "\n",
              sim.study.study_id.c_str(), sim.study.layout.n_patients,
              sim.study.layout.total_voxels(), seed);
  return 0;
}

int run_fit(const std::string& study_path, const std::string& out_csv,
            dcehier::McmcConfig cfg, const std::string& kernel, bool init_nls,
            bool quiet) {
  dcehier::kernels::set_isa(dcehier::kernels::isa_from_name(kernel.c_str()));
  auto data = dcehier::load_study(study_path);
  dcehier::InitOptions init;
  if (init_nls) {
    std::vector<double> lkt, lkep;
    for (int j = 0; j < data.layout.n_patients; ++j) {
      auto plan = dcehier::make_curve_plan(data.layout.grids[0][std::size_t(j)],
                                           data.aif);
      for (int k = 0; k < data.layout.nvox(0, j); ++k) {
        const auto& y = data.series[data.layout.voxel_index(0, j, k)];
        auto fit = dcehier::nls_fit_voxel_multistart(y, plan);
        if (fit.converged && fit.params.ktrans > 0.0 && fit.params.kep > 0.0) {
          lkt.push_back(std::log(fit.params.ktrans));
          lkep.push_back(std::log(fit.params.kep));
        }
      }
    }
    if (lkt.empty()) {
      std::fprintf(stderr, "warning: no converged least-squares fits; "
                           "using default initial levels\n");
    } else {
      init.alpha = {dcehier::quantile_type7(lkt, 0.5),
                    dcehier::quantile_type7(lkep, 0.5)};
    }
  }
  auto st = dcehier::initial_state(data, init);
  auto chain = dcehier::run_chain(
      cfg, data, st, quiet ? dcehier::ChainRunner::Progress{} :
                             progress_to_stderr);
  dcehier::save_chain(chain, out_csv);
  std::printf("wrote %zu draws to %s (psi acceptance %.3f, vp %.3f, "
              "kernel %s)\n",
              chain.draws.size(), out_csv.c_str(),
              chain.acceptance.psi_rate, chain.acceptance.vp_rate,
              dcehier::kernels::isa_name(dcehier::kernels::active_isa()));
  return 0;
}

int run_summarize(const std::string& chain_path, const std::string& out_path,
                  const std::string& density_path) {
  auto chain = dcehier::load_chain(chain_path);
  if (chain.draws.empty()) throw std::runtime_error("chain holds no draws");

  json out;
  out["study_id"] = chain.study_id;
  out["n_draws"] = chain.draws.size();
  out["acceptance"] = {{"psi_rate", chain.acceptance.psi_rate},
                       {"vp_rate", chain.acceptance.vp_rate}};
  out["ktrans"] = {
      {"pre", summary_to_json(dcehier::study_level(chain, 0))},
      {"post", summary_to_json(dcehier::study_level(chain, 1))},
      {"percent_change",
       summary_to_json(dcehier::percent_change(beta_samples(chain, 0)))}};
  out["kep"] = {
      {"percent_change",
       summary_to_json(dcehier::percent_change(beta_samples(chain, 1)))}};
  auto b1 = beta_samples(chain, 0);
  out["prob_ktrans_decrease"] = 1.0 - dcehier::prob_positive(b1);
  json patients = json::array();
  for (int j = 0; j < chain.layout.n_patients; ++j)
    patients.push_back(
        {{"patient", j + 1},
         {"pre", summary_to_json(dcehier::patient_level(chain, j, 0))},
         {"post", summary_to_json(dcehier::patient_level(chain, j, 1))}});
  out["patients"] = std::move(patients);

  if (!density_path.empty()) {
    std::vector<double> pct;
    pct.reserve(b1.size());
    for (double b : b1) pct.push_back(100.0 * (std::exp(b) - 1.0));
    dcehier::save_density_csv(dcehier::kde(pct), density_path);
    out["percent_change_density"] = density_path;
  }

  std::string text = out.dump(2) + "\n";
  if (out_path.empty() || out_path == "-") {
    std::fputs(text.c_str(), stdout);
  } else {
    std::FILE* f = std::fopen(out_path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + out_path);
    std::fputs(text.c_str(), f);
    std::fclose(f);
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

int run_test_chain(const std::string& chain_path, double level) {
  auto chain = dcehier::load_chain(chain_path);
  if (chain.draws.empty()) throw std::runtime_error("chain holds no draws");
  auto b1 = beta_samples(chain, 0);
  double p_dec = 1.0 - dcehier::prob_positive(b1);
  auto pct = dcehier::percent_change(b1);
  std::printf("posterior draws: %zu\n", b1.size());
  std::printf("P(Ktrans decreases after treatment) = %.6g\n", p_dec);
  std::printf("percent change in Ktrans: median %.4g, %g%% CI [%.4g, %.4g]\n",
              pct.median, 100.0 * (pct.probs.back() - pct.probs.front()),
              pct.quantiles.front(), pct.quantiles.back());
  bool reject = p_dec >= level;
  std::printf("H0 (no decrease) %s at posterior probability %g\n",
              reject ? "rejected" : "not rejected", level);
  return 0;
}

int run_test_wilcoxon(const std::string& csv_path) {
  std::vector<double> pre, post;
  dcehier::load_pre_post_csv(csv_path, pre, post);
  auto r = dcehier::wilcoxon_one_sided(pre, post);
  std::printf("Wilcoxon signed-rank, one-sided (pre > post)\n");
  std::printf("pairs used (nonzero differences): %d\n", r.n_effective);
  std::printf("W+ = %g\n", r.w_plus);
  std::printf("p = %.12g (%s)\n", r.p_value,
              r.exact ? "exact" : "normal approximation");
  return 0;
}

int run_baseline(const std::string& study_path, const std::string& fits_path,
                 const std::string& medians_path) {
  auto data = dcehier::load_study(study_path);
  auto fits = dcehier::fit_study(data);
  std::size_t conv = 0;
  for (const auto& f : fits) conv += f.converged ? 1u : 0u;
  if (!fits_path.empty()) {
    dcehier::save_fits_csv(fits, data.layout, fits_path);
    std::printf("wrote %s (%zu/%zu voxels converged)\n", fits_path.c_str(),
                conv, fits.size());
  }
  if (!medians_path.empty()) {
    dcehier::save_medians_csv(data, fits, medians_path);
    std::printf("wrote %s\n", medians_path.c_str());
  }
  std::vector<double> pre, post;
  for (int j = 0; j < data.layout.n_patients; ++j) {
    std::array<double, 2> med{};
    bool ok = true;
    for (int i = 0; i < 2; ++i) {
      std::span<const dcehier::NlsFit> block(
          fits.data() + data.layout.block(i, j),
          std::size_t(data.layout.nvox(i, j)));
      try {
        med[std::size_t(i)] = dcehier::roi_median_ktrans(block);
      } catch (const std::invalid_argument&) {
        ok = false;
      }
    }
    if (ok) {
      pre.push_back(med[0]);
      post.push_back(med[1]);
    }
  }
  if (pre.size() >= 2) {
    auto r = dcehier::wilcoxon_one_sided(pre, post);
    std::printf("median-Ktrans Wilcoxon (pre > post): n = %d, W+ = %g, "
                "p = %.6g (%s)\n",
                r.n_effective, r.w_plus, r.p_value,
                r.exact ? "exact" : "approx");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian analysis of longitudinal DCE-MRI "
               "studies"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  std::uint64_t sim_seed = 1;
  auto* sim = app.add_subcommand("simulate",
                                 "generate a synthetic study with known "
                                 "ground truth");
  sim->add_option("--spec", spec_path, "simulation spec (JSON)")->required();
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--out", out_dir, "output directory")->required();

  std::string study_path, chain_out, kernel = "auto";
  dcehier::McmcConfig cfg;
  bool init_nls = false, quiet = false;
  auto* fit = app.add_subcommand("fit", "run the MCMC sampler on a study");
  fit->add_option("--study", study_path, "study manifest (JSON)")->required();
  fit->add_option("--out", chain_out, "output chain CSV")->required();
  fit->add_option("--seed", cfg.seed, "RNG seed");
  fit->add_option("--burnin", cfg.burn_in, "burn-in iterations");
  fit->add_option("--iterations,--iters", cfg.iterations,
                  "post burn-in iterations");
  fit->add_option("--thin", cfg.thin, "thinning interval");
  fit->add_option("--psi-sd", cfg.psi_proposal_sd,
                  "initial psi proposal sd");
  fit->add_option("--vp-sd", cfg.vp_proposal_sd,
                  "initial vp proposal sd (logit scale)");
  fit->add_option("--kernel", kernel, "curve kernel: scalar, avx2 or auto")
      ->check(CLI::IsMember({"scalar", "avx2", "auto"}));
  fit->add_flag("--init-nls", init_nls,
                "initialise levels from least-squares fits of scan 1");
  fit->add_flag("--quiet", quiet, "suppress progress output");

  std::string chain_path, summary_out, density_out;
  auto* summ = app.add_subcommand("summarize",
                                  "posterior summaries from a saved chain");
  summ->add_option("--chain", chain_path, "chain CSV")->required();
  summ->add_option("--out", summary_out, "summary JSON ('-' for stdout)");
  summ->add_option("--density-out", density_out,
                   "write a percent-change density curve CSV");

  std::string test_chain, wilcoxon_csv;
  double level = 0.95;
  auto* test = app.add_subcommand("test", "hypothesis reports");
  test->add_option("--chain", test_chain,
                   "posterior treatment-effect report from a chain CSV");
  test->add_option("--wilcoxon", wilcoxon_csv,
                   "signed-rank test on a pre,post CSV");
  test->add_option("--level", level, "posterior probability threshold");

  std::string fits_out, medians_out;
  std::string base_study;
  auto* base = app.add_subcommand("baseline",
                                  "voxel-wise least squares and the "
                                  "signed-rank test");
  base->add_option("--study", base_study, "study manifest (JSON)")->required();
  base->add_option("--out", fits_out, "per-voxel fit CSV");
  base->add_option("--medians", medians_out, "per-patient median CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(spec_path, sim_seed, out_dir);
    if (fit->parsed())
      return run_fit(study_path, chain_out, cfg, kernel, init_nls, quiet);
    if (summ->parsed())
      return run_summarize(chain_path, summary_out, density_out);
    if (test->parsed()) {
      if (test_chain.empty() && wilcoxon_csv.empty())
        throw std::runtime_error("test needs --chain or --wilcoxon");
      int rc = 0;
      if (!test_chain.empty()) rc = run_test_chain(test_chain, level);
      if (rc == 0 && !wilcoxon_csv.empty())
        rc = run_test_wilcoxon(wilcoxon_csv);
      return rc;
    }
    if (base->parsed()) return run_baseline(base_study, fits_out, medians_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
