#include "dtanma/summaries.hpp"
#include "dtanma/math.hpp"
#include "dtanma/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dtanma {

namespace {

constexpr double kChi2Q95Df2 = 5.991464547107979;  // 95% quantile of chi^2_2

CredibleInterval ci_from_draws(std::vector<double> draws) {
  std::sort(draws.begin(), draws.end());
  auto q = [&](double p) {
    const double h = (static_cast<double>(draws.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= draws.size()) return draws.back();
    return draws[lo] + (h - static_cast<double>(lo)) * (draws[lo + 1] - draws[lo]);
  };
  return {q(0.5), q(0.025), q(0.975)};
}

int require_test(const Layout& layout, const std::string& test_id) {
  const int k = layout.test_index(test_id);
  if (k < 0) throw std::invalid_argument("unknown test '" + test_id + "'");
  return k;
}

// Location-side between-study covariance of (logit fpf, logit sens) for one
// test, given one retained draw.
Eigen::Matrix2d location_cov_for_test(const ParameterState& st, int k) {
  const Layout& L = *st.layout;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  bool found = false;
  for (std::size_t b = 0; b < L.cov_blocks().size(); ++b) {
    const CovBlock& cb = L.cov_blocks()[b];
    const bool applies = cb.only_test < 0 || cb.only_test == k;
    if (!applies) continue;
    if (cb.governs == EffectVectors::PairFull || cb.governs == EffectVectors::StudyFull) {
      cov += st.cov_matrix(static_cast<int>(b)).topLeftCorner(2, 2);
      found = true;
    } else if (cb.governs == EffectVectors::PairLoc ||
               cb.governs == EffectVectors::StudyLoc) {
      cov += st.cov_matrix(static_cast<int>(b));
      found = true;
    }
  }
  if (L.has_tau()) {
    for (int j = 0; j < 2; ++j) {
      const double t = st.tau_m(k, j);
      cov(j, j) += t * t;
    }
    found = true;
  }
  if (!found) throw std::runtime_error("no location covariance block for test");
  return cov;
}

struct DrawAccess {
  const PosteriorSamples& samples;
  double at(long draw, int param) const {
    const int c = static_cast<int>(draw / samples.n_kept);
    const int i = static_cast<int>(draw % samples.n_kept);
    return samples.draw(c, i, param);
  }
  long total() const { return samples.total_kept(); }
};

}  // namespace

AccuracySummary pooled_accuracy(const PosteriorSamples& samples, const std::string& test_id,
                                std::optional<double> threshold, bool predictive) {
  const Layout& L = *samples.layout;
  const int k = require_test(L, test_id);
  const bool continuous = L.test_continuous[k];
  if (continuous && !threshold.has_value())
    throw std::invalid_argument("pooled_accuracy: continuous test requires a threshold");
  if (!continuous && threshold.has_value())
    throw std::invalid_argument("pooled_accuracy: binary test takes no threshold");

  AccuracySummary out;
  out.test_id = test_id;
  out.threshold = threshold;
  if (continuous &&
      (*threshold < L.thr_min[k] || *threshold > L.thr_max[k]))
    out.extrapolated = true;

  const DrawAccess acc{samples};
  const long n = acc.total();
  if (n == 0) throw std::invalid_argument("pooled_accuracy: no draws");
  const double ratio = continuous ? std::log(L.c_star[k]) - std::log(*threshold) : 0.0;

  std::vector<double> sens(n), fpf(n);

  if (!predictive) {
    for (long t = 0; t < n; ++t) {
      for (int j = 0; j < 2; ++j) {
        double logit_p = acc.at(t, L.idx_m(k, j));
        if (continuous) logit_p += ratio / std::exp(acc.at(t, L.idx_s(k, j)));
        (j == 1 ? sens[t] : fpf[t]) = inv_logit(logit_p);
      }
    }
  } else {
    // New-study predictive summaries: re-draw the random effects from each
    // retained draw's variance components.
    Rng rng(samples.config.seed ^ fnv1a64("predictive:" + test_id));
    ParameterState st;
    st.layout = samples.layout;
    st.values.resize(L.dim);
    for (long t = 0; t < n; ++t) {
      for (int p = 0; p < L.dim; ++p) st.values[p] = acc.at(t, p);
      double loc_effect[2] = {0.0, 0.0};
      double scale_effect[2] = {0.0, 0.0};

      for (std::size_t b = 0; b < L.cov_blocks().size(); ++b) {
        const CovBlock& cb = L.cov_blocks()[b];
        const bool applies = cb.only_test < 0 || cb.only_test == k;
        if (!applies) continue;
        const Eigen::MatrixXd chol = st.cov_chol_lower(static_cast<int>(b));
        Eigen::VectorXd z(cb.dim);
        for (int i = 0; i < cb.dim; ++i) z[i] = rng.normal();
        const Eigen::VectorXd e = chol * z;
        switch (cb.governs) {
          case EffectVectors::PairFull:
            if (continuous) {
              loc_effect[0] += e[0];
              loc_effect[1] += e[1];
              scale_effect[0] += e[2];
              scale_effect[1] += e[3];
            } else {
              // Binary test: location block is the top-left 2x2; use the
              // first two components of the draw.
              loc_effect[0] += e[0];
              loc_effect[1] += e[1];
            }
            break;
          case EffectVectors::PairLoc:
          case EffectVectors::StudyLoc:
            loc_effect[0] += e[0];
            loc_effect[1] += e[1];
            break;
          case EffectVectors::PairScale:
          case EffectVectors::StudyScale:
            if (continuous) {
              scale_effect[0] += e[0];
              scale_effect[1] += e[1];
            }
            break;
          case EffectVectors::StudyFull:
            loc_effect[0] += e[0];
            loc_effect[1] += e[1];
            if (continuous) {
              scale_effect[0] += e[2];
              scale_effect[1] += e[3];
            }
            break;
        }
      }
      if (L.has_tau())
        for (int j = 0; j < 2; ++j) loc_effect[j] += st.tau_m(k, j) * rng.normal();
      if (continuous && L.idx_tau_s(k, 0) >= 0)
        for (int j = 0; j < 2; ++j) scale_effect[j] += st.tau_s(k, j) * rng.normal();

      for (int j = 0; j < 2; ++j) {
        double logit_p = st.m(k, j) + loc_effect[j];
        if (continuous)
          logit_p += ratio / std::exp(st.s(k, j) + scale_effect[j]);
        (j == 1 ? sens[t] : fpf[t]) = inv_logit(logit_p);
      }
    }
  }

  out.sensitivity = ci_from_draws(std::move(sens));
  out.fpf = ci_from_draws(std::move(fpf));
  return out;
}

ThresholdCurve threshold_curve(const PosteriorSamples& samples, const std::string& test_id,
                               int grid_size) {
  const Layout& L = *samples.layout;
  const int k = require_test(L, test_id);
  if (!L.test_continuous[k])
    throw std::invalid_argument("threshold_curve: test '" + test_id + "' is binary");
  if (grid_size < 2) throw std::invalid_argument("threshold_curve: grid_size must be >= 2");

  ThresholdCurve curve;
  curve.test_id = test_id;
  const double lo = std::log(L.thr_min[k]);
  const double hi = std::log(L.thr_max[k]);
  for (int g = 0; g < grid_size; ++g) {
    const double f = static_cast<double>(g) / static_cast<double>(grid_size - 1);
    curve.grid.push_back(std::exp(lo + f * (hi - lo)));
  }
  for (double thr : curve.grid)
    curve.points.push_back(pooled_accuracy(samples, test_id, thr));
  return curve;
}

SrocCurve sroc_curve(const PosteriorSamples& samples, const std::string& test_id) {
  const Layout& L = *samples.layout;
  const int k = require_test(L, test_id);
  const DrawAccess acc{samples};
  const long n = acc.total();

  SrocCurve out;
  out.test_id = test_id;

  // Credible ellipse of the posterior mean operating point on logit scale.
  {
    std::vector<double> x(n), y(n);
    for (long t = 0; t < n; ++t) {
      x[t] = acc.at(t, L.idx_m(k, 0));
      y[t] = acc.at(t, L.idx_m(k, 1));
    }
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (long t = 0; t < n; ++t) {
      sxx += (x[t] - mx) * (x[t] - mx);
      syy += (y[t] - my) * (y[t] - my);
      sxy += (x[t] - mx) * (y[t] - my);
    }
    const double denom = static_cast<double>(n) - 1.0;
    sxx /= denom;
    syy /= denom;
    sxy /= denom;
    const double tr = sxx + syy;
    const double det = sxx * syy - sxy * sxy;
    const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    const double l1 = 0.5 * tr + disc;
    const double l2 = 0.5 * tr - disc;
    out.ellipse.center_x = mx;
    out.ellipse.center_y = my;
    out.ellipse.axis1 = std::sqrt(std::max(0.0, kChi2Q95Df2 * l1));
    out.ellipse.axis2 = std::sqrt(std::max(0.0, kChi2Q95Df2 * l2));
    out.ellipse.angle = std::fabs(sxy) < 1e-300 && sxx >= syy
                            ? 0.0
                            : std::atan2(l1 - sxx, sxy == 0.0 ? 1e-300 : sxy);
    for (int i = 0; i <= 128; ++i) {
      const double th = 2.0 * M_PI * static_cast<double>(i) / 128.0;
      const double ex = out.ellipse.axis1 * std::cos(th);
      const double ey = out.ellipse.axis2 * std::sin(th);
      const double ca = std::cos(out.ellipse.angle), sa = std::sin(out.ellipse.angle);
      out.ellipse.polygon.emplace_back(inv_logit(mx + ca * ex - sa * ey),
                                       inv_logit(my + sa * ex + ca * ey));
    }
  }

  if (L.test_continuous[k]) {
    // Trace (fpf(c), sens(c)) per draw over the threshold grid; band is
    // pointwise in fpf.
    const int grid_size = 100;
    const double lo = std::log(L.thr_min[k]);
    const double hi = std::log(L.thr_max[k]);
    std::vector<double> ratio(grid_size);
    for (int g = 0; g < grid_size; ++g) {
      const double f = static_cast<double>(g) / static_cast<double>(grid_size - 1);
      ratio[g] = std::log(L.c_star[k]) - (lo + f * (hi - lo));
    }
    // Per-draw curves; thresholds ascend so fpf/sens descend along g.
    std::vector<std::vector<double>> fpf(n, std::vector<double>(grid_size));
    std::vector<std::vector<double>> sens(n, std::vector<double>(grid_size));
    for (long t = 0; t < n; ++t) {
      const double m0 = acc.at(t, L.idx_m(k, 0)), m1 = acc.at(t, L.idx_m(k, 1));
      const double is0 = std::exp(-acc.at(t, L.idx_s(k, 0)));
      const double is1 = std::exp(-acc.at(t, L.idx_s(k, 1)));
      for (int g = 0; g < grid_size; ++g) {
        fpf[t][g] = inv_logit(m0 + ratio[g] * is0);
        sens[t][g] = inv_logit(m1 + ratio[g] * is1);
      }
    }
    // fpf axis: pooled median fpf at each grid threshold.
    std::vector<double> axis(grid_size);
    {
      std::vector<double> tmp(n);
      for (int g = 0; g < grid_size; ++g) {
        for (long t = 0; t < n; ++t) tmp[t] = fpf[t][g];
        axis[g] = ci_from_draws(tmp).median;
      }
    }
    std::vector<double> interp(n);
    for (int g = grid_size - 1; g >= 0; --g) {  // ascending fpf
      const double f = axis[g];
      for (long t = 0; t < n; ++t) {
        // fpf[t] decreases along g; find the bracketing segment.
        const auto& fr = fpf[t];
        const auto& sr = sens[t];
        if (f >= fr[0]) {
          interp[t] = sr[0];
        } else if (f <= fr[grid_size - 1]) {
          interp[t] = sr[grid_size - 1];
        } else {
          int a = 0, b = grid_size - 1;
          while (b - a > 1) {
            const int mid = (a + b) / 2;
            if (fr[mid] >= f)
              a = mid;
            else
              b = mid;
          }
          const double w = (f - fr[b]) / (fr[a] - fr[b]);
          interp[t] = sr[b] + w * (sr[a] - sr[b]);
        }
      }
      SrocPoint p;
      p.fpf = f;
      p.sensitivity = ci_from_draws(interp);
      out.points.push_back(p);
    }
  } else {
    // Summary line from the fitted location covariance: regression of logit
    // sensitivity on logit fpf.
    ParameterState st;
    st.layout = samples.layout;
    st.values.resize(L.dim);
    const int grid_size = 99;
    std::vector<double> fgrid(grid_size);
    for (int g = 0; g < grid_size; ++g)
      fgrid[g] = 0.01 + 0.98 * static_cast<double>(g) / static_cast<double>(grid_size - 1);
    std::vector<std::vector<double>> sens(grid_size, std::vector<double>(n));
    bool cov_ok = true;
    for (long t = 0; t < n && cov_ok; ++t) {
      for (int p = 0; p < L.dim; ++p) st.values[p] = acc.at(t, p);
      Eigen::Matrix2d cov;
      try {
        cov = location_cov_for_test(st, k);
      } catch (const std::exception&) {
        cov_ok = false;
        break;
      }
      const double slope = cov(1, 0) / cov(0, 0);
      const double m0 = st.m(k, 0), m1 = st.m(k, 1);
      for (int g = 0; g < grid_size; ++g)
        sens[g][t] = inv_logit(m1 + slope * (logit(fgrid[g]) - m0));
    }
    if (!cov_ok) {
      out.curve_available = false;
      out.flag = "location covariance block unavailable for this variant";
    } else {
      for (int g = 0; g < grid_size; ++g) {
        SrocPoint p;
        p.fpf = fgrid[g];
        p.sensitivity = ci_from_draws(sens[g]);
        out.points.push_back(p);
      }
    }
  }
  return out;
}

RankingReport rankings(const PosteriorSamples& samples, const std::vector<std::string>& tests,
                       const std::vector<std::optional<double>>& thresholds) {
  if (tests.size() < 2) throw std::invalid_argument("rankings: need at least 2 tests");
  if (thresholds.size() != tests.size())
    throw std::invalid_argument("rankings: one threshold entry per test required");
  const Layout& L = *samples.layout;
  const DrawAccess acc{samples};
  const long n = acc.total();
  const int K = static_cast<int>(tests.size());

  std::vector<int> kidx(K);
  std::vector<double> ratio(K, 0.0);
  std::vector<bool> continuous(K);
  for (int t = 0; t < K; ++t) {
    kidx[t] = require_test(L, tests[t]);
    continuous[t] = L.test_continuous[kidx[t]];
    if (continuous[t]) {
      const double thr = thresholds[t].has_value() ? *thresholds[t] : L.c_star[kidx[t]];
      ratio[t] = std::log(L.c_star[kidx[t]]) - std::log(thr);
    } else if (thresholds[t].has_value()) {
      throw std::invalid_argument("rankings: binary test takes no threshold");
    }
  }

  RankingReport rep;
  rep.tests = tests;
  rep.rank_prob.assign(K, std::vector<double>(K, 0.0));
  std::vector<std::vector<double>> rank_draws(K, std::vector<double>(n));
  std::vector<std::vector<double>> sens(K, std::vector<double>(n)),
      fpf(K, std::vector<double>(n));

  std::vector<std::pair<double, int>> youden(K);
  for (long d = 0; d < n; ++d) {
    for (int t = 0; t < K; ++t) {
      double ls = acc.at(d, L.idx_m(kidx[t], 1));
      double lf = acc.at(d, L.idx_m(kidx[t], 0));
      if (continuous[t]) {
        ls += ratio[t] / std::exp(acc.at(d, L.idx_s(kidx[t], 1)));
        lf += ratio[t] / std::exp(acc.at(d, L.idx_s(kidx[t], 0)));
      }
      sens[t][d] = inv_logit(ls);
      fpf[t][d] = inv_logit(lf);
      youden[t] = {sens[t][d] - fpf[t][d], t};
    }
    std::stable_sort(youden.begin(), youden.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int r = 0; r < K; ++r) {
      rep.rank_prob[youden[r].second][r] += 1.0;
      rank_draws[youden[r].second][d] = static_cast<double>(r + 1);
    }
  }
  for (int t = 0; t < K; ++t)
    for (int r = 0; r < K; ++r) rep.rank_prob[t][r] /= static_cast<double>(n);
  for (int t = 0; t < K; ++t)
    rep.median_rank.push_back(ci_from_draws(rank_draws[t]).median);

  for (int a = 0; a < K; ++a)
    for (int b = a + 1; b < K; ++b) {
      PairwiseComparison pc;
      pc.test_a = tests[a];
      pc.test_b = tests[b];
      std::vector<double> ds(n), dp(n), dd(n);
      for (long d = 0; d < n; ++d) {
        ds[d] = sens[a][d] - sens[b][d];
        dp[d] = fpf[b][d] - fpf[a][d];  // spec_a - spec_b
        const double dor_a = logit(sens[a][d]) - logit(fpf[a][d]);
        const double dor_b = logit(sens[b][d]) - logit(fpf[b][d]);
        dd[d] = dor_a - dor_b;
      }
      pc.delta_sens = ci_from_draws(std::move(ds));
      pc.delta_spec = ci_from_draws(std::move(dp));
      pc.delta_log_dor = ci_from_draws(std::move(dd));
      rep.pairwise.push_back(std::move(pc));
    }
  return rep;
}

std::string accuracy_table_csv(const std::vector<AccuracySummary>& rows) {
  std::ostringstream os;
  os.precision(6);
  os << "test_id,threshold,measure,median,lower95,upper95,extrapolated\n";
  for (const auto& r : rows) {
    auto emit = [&](const char* measure, const CredibleInterval& ci) {
      os << r.test_id << ',';
      if (r.threshold.has_value())
        os << *r.threshold;
      else
        os << "NA";
      os << ',' << measure << ',' << ci.median << ',' << ci.lower << ',' << ci.upper << ','
         << (r.extrapolated ? 1 : 0) << '\n';
    };
    emit("sensitivity", r.sensitivity);
    emit("fpf", r.fpf);
    emit("specificity", r.specificity());
  }
  return os.str();
}

std::string rankings_csv(const RankingReport& report) {
  std::ostringstream os;
  os.precision(6);
  os << "test_id,median_rank";
  for (std::size_t r = 0; r < report.tests.size(); ++r) os << ",p_rank" << r + 1;
  os << '\n';
  for (std::size_t t = 0; t < report.tests.size(); ++t) {
    os << report.tests[t] << ',' << report.median_rank[t];
    for (double p : report.rank_prob[t]) os << ',' << p;
    os << '\n';
  }
  os << "pair_a,pair_b,measure,median,lower95,upper95\n";
  for (const auto& pc : report.pairwise) {
    auto emit = [&](const char* measure, const CredibleInterval& ci) {
      os << pc.test_a << ',' << pc.test_b << ',' << measure << ',' << ci.median << ','
         << ci.lower << ',' << ci.upper << '\n';
    };
    emit("delta_sens", pc.delta_sens);
    emit("delta_spec", pc.delta_spec);
    emit("delta_log_dor", pc.delta_log_dor);
  }
  return os.str();
}

}  // namespace dtanma
