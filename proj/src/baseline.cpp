#include "dcehier/baseline.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dcehier/stats.hpp"

namespace dcehier {

namespace {

struct TransformedParams {
  double u1, u2, u3;  // ln ktrans, ln kep, logit vp
};

TransformedParams to_unconstrained(const KineticParams& p) {
  double kt = std::clamp(p.ktrans, 1e-12, 1e12);
  double kep = std::clamp(p.kep, 1e-12, 1e12);
  double vp = std::clamp(p.vp, 1e-9, 1.0 - 1e-9);
  return {std::log(kt), std::log(kep), stats::logit(vp)};
}

KineticParams from_unconstrained(const TransformedParams& u) {
  return {std::exp(u.u1), std::exp(u.u2), stats::inv_logit(u.u3)};
}

}  // namespace

NlsFit nls_fit_voxel(std::span<const double> y, const CurvePlan& plan,
                     KineticParams init, const NlsOptions& opts) {
  if (y.size() != plan.size())
    throw std::invalid_argument("series length does not match grid");
  const std::size_t n = y.size();
  std::vector<double> c(n), d_kt(n), d_kep(n), d_vp(n);
  TransformedParams u = to_unconstrained(init);

  auto eval_rss = [&](const TransformedParams& v, bool grads) {
    KineticParams p = from_unconstrained(v);
    if (grads)
      eval_ctc_grad(plan, p, c.data(), d_kt.data(), d_kep.data(), d_vp.data());
    else
      eval_ctc(plan, p, c.data());
    double ss = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      double r = y[t] - c[t];
      ss += r * r;
    }
    return ss;
  };

  NlsFit fit;
  double rss = eval_rss(u, true);
  double lambda = 1e-3;
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    KineticParams p = from_unconstrained(u);
    // chain rule to the unconstrained scale
    Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    double jvp = p.vp * (1.0 - p.vp);
    for (std::size_t t = 0; t < n; ++t) {
      Eigen::Vector3d row(d_kt[t] * p.ktrans, d_kep[t] * p.kep, d_vp[t] * jvp);
      a += row * row.transpose();
      g += row * (y[t] - c[t]);
    }
    if (g.cwiseAbs().maxCoeff() < opts.grad_tol) {
      fit.converged = true;
      break;
    }
    bool stepped = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::Matrix3d damped = a;
      for (int q = 0; q < 3; ++q)
        damped(q, q) += lambda * std::max(a(q, q), 1e-12);
      Eigen::Vector3d delta = damped.ldlt().solve(g);
      TransformedParams cand{u.u1 + delta(0), u.u2 + delta(1),
                             u.u3 + delta(2)};
      double cand_rss = eval_rss(cand, false);
      if (std::isfinite(cand_rss) && cand_rss <= rss) {
        double drop = rss - cand_rss;
        u = cand;
        bool small = drop <= opts.rss_rel_tol * std::max(rss, 1e-300);
        rss = cand_rss;
        lambda = std::max(lambda * 0.1, 1e-12);
        stepped = true;
        if (small) fit.converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }
    if (!stepped || fit.converged) {
      ++iter;
      break;
    }
    rss = eval_rss(u, true);
  }
  eval_rss(u, false);
  fit.params = from_unconstrained(u);
  fit.rss = rss;
  fit.iterations = iter;
  return fit;
}

NlsFit nls_fit_voxel(const CtcSeries& y, const TimeGrid& grid,
                     const AifParams& aif, KineticParams init,
                     const NlsOptions& opts) {
  CurvePlan plan = make_curve_plan(grid, aif);
  return nls_fit_voxel(y, plan, init, opts);
}

NlsFit nls_fit_voxel_multistart(std::span<const double> y,
                                const CurvePlan& plan,
                                const NlsOptions& opts) {
  const KineticParams starts[3] = {
      {0.2, 0.5, 0.05}, {0.05, 0.1, 0.01}, {1.0, 2.0, 0.1}};
  NlsFit best = nls_fit_voxel(y, plan, starts[0], opts);
  if (best.converged) return best;
  for (int s = 1; s < 3; ++s) {
    NlsFit fit = nls_fit_voxel(y, plan, starts[s], opts);
    if (fit.converged || fit.rss < best.rss) {
      bool better = (fit.converged && !best.converged) ||
                    (fit.converged == best.converged && fit.rss < best.rss);
      if (better) best = fit;
    }
    if (best.converged) break;
  }
  return best;
}

std::vector<NlsFit> fit_study(const StudyData& data, const NlsOptions& opts) {
  const auto& layout = data.layout;
  std::vector<NlsFit> fits(layout.total_voxels());
  for (int i = 0; i < layout.n_scans; ++i) {
    for (int j = 0; j < layout.n_patients; ++j) {
      CurvePlan plan = make_curve_plan(
          layout.grids[std::size_t(i)][std::size_t(j)], data.aif);
      for (int k = 0; k < layout.nvox(i, j); ++k) {
        auto v = layout.voxel_index(i, j, k);
        fits[v] = nls_fit_voxel_multistart(data.series[v], plan, opts);
      }
    }
  }
  return fits;
}

double roi_median_ktrans(std::span<const NlsFit> fits) {
  std::vector<double> kt;
  for (const auto& f : fits)
    if (f.converged) kt.push_back(f.params.ktrans);
  if (kt.empty()) throw std::invalid_argument("no converged fits");
  std::sort(kt.begin(), kt.end());
  std::size_t n = kt.size();
  return n % 2 ? kt[n / 2] : 0.5 * (kt[n / 2 - 1] + kt[n / 2]);
}

WilcoxonResult wilcoxon_one_sided(std::span<const double> pre,
                                  std::span<const double> post) {
  if (pre.size() != post.size() || pre.empty())
    throw std::invalid_argument("paired samples of equal nonzero length required");
  std::vector<double> d;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    double v = pre[i] - post[i];
    if (v != 0.0) d.push_back(v);
  }
  if (d.empty()) throw std::invalid_argument("all differences zero");
  const int n = int(d.size());

  std::vector<int> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::fabs(d[std::size_t(a)]) < std::fabs(d[std::size_t(b)]);
  });

  // doubled midranks stay integral under ties
  std::vector<long long> rank2(d.size());
  std::vector<int> tie_sizes;
  for (std::size_t s = 0; s < d.size();) {
    std::size_t e = s;
    while (e + 1 < d.size() &&
           std::fabs(d[std::size_t(order[e + 1])]) ==
               std::fabs(d[std::size_t(order[s])]))
      ++e;
    long long doubled = (long long)(s + 1) + (long long)(e + 1);
    for (std::size_t q = s; q <= e; ++q) rank2[std::size_t(order[q])] = doubled;
    tie_sizes.push_back(int(e - s + 1));
    s = e + 1;
  }

  long long w2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) w2 += rank2[i];

  WilcoxonResult res;
  res.n_effective = n;
  res.w_plus = double(w2) / 2.0;

  if (n <= 25) {
    long long total = 0;
    for (long long r : rank2) total += r;
    std::vector<double> dp(std::size_t(total) + 1, 0.0);
    dp[0] = 1.0;
    for (long long r : rank2)
      for (long long s = total; s >= r; --s)
        dp[std::size_t(s)] += dp[std::size_t(s - r)];
    double tail = 0.0;
    for (long long s = w2; s <= total; ++s) tail += dp[std::size_t(s)];
    res.p_value = tail / std::ldexp(1.0, n);
    res.exact = true;
  } else {
    double nn = double(n);
    double mu = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (int t : tie_sizes) {
      double tt = double(t);
      var -= (tt * tt * tt - tt) / 48.0;
    }
    double z = (res.w_plus - 0.5 - mu) / std::sqrt(var);
    res.p_value = std::min(1.0, std::max(1e-300, 1.0 - stats::normal_cdf(z)));
    res.exact = false;
  }
  return res;
}

}  // namespace dcehier
