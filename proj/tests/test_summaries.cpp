#include "dtanma/summaries.hpp"
#include "dtanma/math.hpp"
#include "dtanma/rng.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace dtanma;

namespace {

ModelSpec spec_of(ModelVariant v, CovarianceStructure c = CovarianceStructure::Full4) {
  ModelSpec s;
  s.variant = v;
  s.cov = c;
  return s;
}

// Synthetic container: fill each retained draw through a callback.
PosteriorSamples make_samples(const Dataset& d, const ModelSpec& spec, int n_kept,
                              const std::function<void(int, ParameterState&)>& fill) {
  const ParameterState proto = build_layout(d, spec);
  PosteriorSamples s;
  s.layout = proto.layout;
  s.n_chains = 1;
  s.n_kept = n_kept;
  s.dim = proto.layout->dim;
  s.config.seed = 7;
  ParameterState work = proto;
  std::vector<double> draws;
  draws.reserve(static_cast<std::size_t>(n_kept) * s.dim);
  for (int i = 0; i < n_kept; ++i) {
    work.values.setZero();
    fill(i, work);
    draws.insert(draws.end(), work.values.data(), work.values.data() + s.dim);
  }
  s.draws.push_back(std::move(draws));
  s.deviance.emplace_back(n_kept, 0.0);
  return s;
}

}  // namespace

TEST_CASE("pooled_accuracy: degenerate posterior at zero gives 0.5 everywhere") {
  const Dataset d = fixtures::mixed_network();
  const auto s = make_samples(d, spec_of(ModelVariant::MetaRegression), 200,
                              [](int, ParameterState&) {});
  const AccuracySummary cont = pooled_accuracy(s, "c1", 20.0);  // at c_star
  CHECK(cont.sensitivity.median == doctest::Approx(0.5));
  CHECK(cont.fpf.median == doctest::Approx(0.5));
  CHECK_FALSE(cont.extrapolated);
  const AccuracySummary bin = pooled_accuracy(s, "b1", std::nullopt);
  CHECK(bin.sensitivity.median == doctest::Approx(0.5));

  CHECK_THROWS_AS(pooled_accuracy(s, "c1", std::nullopt), std::invalid_argument);
  CHECK_THROWS_AS(pooled_accuracy(s, "b1", 3.0), std::invalid_argument);
  CHECK_THROWS_AS(pooled_accuracy(s, "nope", std::nullopt), std::invalid_argument);
}

TEST_CASE("pooled_accuracy: quantile monotonicity and exact specificity duality") {
  const Dataset d = fixtures::mixed_network();
  Rng rng(5);
  const auto s = make_samples(d, spec_of(ModelVariant::MetaRegression), 500,
                              [&](int, ParameterState& st) {
                                const Layout& L = *st.layout;
                                const int k = L.test_index("c1");
                                st.values[L.idx_m(k, 0)] = -2.0 + 0.4 * rng.normal();
                                st.values[L.idx_m(k, 1)] = 1.0 + 0.4 * rng.normal();
                                st.values[L.idx_s(k, 0)] = 0.1 * rng.normal();
                                st.values[L.idx_s(k, 1)] = 0.1 * rng.normal();
                              });
  const AccuracySummary a = pooled_accuracy(s, "c1", 25.0);
  CHECK(a.sensitivity.lower <= a.sensitivity.median);
  CHECK(a.sensitivity.median <= a.sensitivity.upper);
  CHECK(a.fpf.lower <= a.fpf.median);
  const CredibleInterval spec_ci = a.specificity();
  CHECK(spec_ci.median == 1.0 - a.fpf.median);
  CHECK(spec_ci.lower == 1.0 - a.fpf.upper);
  CHECK(spec_ci.upper == 1.0 - a.fpf.lower);

  // outside the observed range [10, 42.5]
  CHECK(pooled_accuracy(s, "c1", 80.0).extrapolated);
  CHECK(pooled_accuracy(s, "c1", 5.0).extrapolated);
  CHECK_FALSE(pooled_accuracy(s, "c1", 42.5).extrapolated);
}

TEST_CASE("threshold_curve: grid, consistency with pooled_accuracy, monotonicity") {
  const Dataset d = fixtures::mixed_network();
  Rng rng(9);
  const auto s = make_samples(d, spec_of(ModelVariant::MetaRegression), 300,
                              [&](int, ParameterState& st) {
                                const Layout& L = *st.layout;
                                const int k = L.test_index("c1");
                                st.values[L.idx_m(k, 0)] = -1.5 + 0.3 * rng.normal();
                                st.values[L.idx_m(k, 1)] = 0.8 + 0.3 * rng.normal();
                                st.values[L.idx_s(k, 0)] = 0.05 * rng.normal();
                                st.values[L.idx_s(k, 1)] = 0.05 * rng.normal();
                              });
  const ThresholdCurve curve = threshold_curve(s, "c1", 50);
  REQUIRE(curve.grid.size() == 50);
  CHECK(curve.grid.front() == doctest::Approx(10.0));
  CHECK(curve.grid.back() == doctest::Approx(42.5));

  // bit-exact agreement with pooled_accuracy at every grid point
  for (std::size_t g = 0; g < curve.grid.size(); g += 7) {
    const AccuracySummary direct = pooled_accuracy(s, "c1", curve.grid[g]);
    CHECK(curve.points[g].sensitivity.median == direct.sensitivity.median);
    CHECK(curve.points[g].fpf.upper == direct.fpf.upper);
  }
  // posterior-median sensitivity non-increasing along the grid
  for (std::size_t g = 1; g < curve.grid.size(); ++g)
    CHECK(curve.points[g].sensitivity.median <=
          curve.points[g - 1].sensitivity.median + 1e-15);

  CHECK_THROWS_AS(threshold_curve(s, "b1", 50), std::invalid_argument);
}

TEST_CASE("sroc: continuous curve tracks the pooled operating points") {
  const Dataset d = fixtures::mixed_network();
  Rng rng(13);
  const auto s = make_samples(d, spec_of(ModelVariant::MetaRegression), 400,
                              [&](int, ParameterState& st) {
                                const Layout& L = *st.layout;
                                const int k = L.test_index("c1");
                                st.values[L.idx_m(k, 0)] = -2.0 + 0.05 * rng.normal();
                                st.values[L.idx_m(k, 1)] = 1.0 + 0.05 * rng.normal();
                                st.values[L.idx_s(k, 0)] = 0.02 * rng.normal();
                                st.values[L.idx_s(k, 1)] = 0.02 * rng.normal();
                              });
  const SrocCurve curve = sroc_curve(s, "c1");
  REQUIRE(curve.curve_available);
  REQUIRE(!curve.points.empty());
  // ordered by fpf, band contains the median pointwise
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    if (i > 0) CHECK(curve.points[i].fpf >= curve.points[i - 1].fpf);
    CHECK(curve.points[i].sensitivity.lower <= curve.points[i].sensitivity.median);
    CHECK(curve.points[i].sensitivity.median <= curve.points[i].sensitivity.upper);
  }
  // passes through the pooled points of the same draws (concentrated
  // posterior, interpolation error only)
  const ThresholdCurve tc = threshold_curve(s, "c1", 100);
  for (std::size_t g = 10; g < tc.grid.size(); g += 20) {
    const double f = tc.points[g].fpf.median;
    const double sens = tc.points[g].sensitivity.median;
    double best = 1.0;
    for (const auto& p : curve.points)
      if (std::fabs(p.fpf - f) < 1e-9) best = std::fabs(p.sensitivity.median - sens);
    CHECK(best < 5e-3);
  }
}

TEST_CASE("sroc: binary summary line from the location covariance") {
  const Dataset d = fixtures::binary_network(8, 2);
  // point-mass posterior with a chosen covariance block
  Eigen::Matrix2d sigma;
  sigma << 0.5, 0.3, 0.3, 0.8;
  const double m0 = -1.2, m1 = 0.9;
  const auto s = make_samples(d, spec_of(ModelVariant::Independent), 150,
                              [&](int, ParameterState& st) {
                                const Layout& L = *st.layout;
                                const int k = L.test_index("t1");
                                st.values[L.idx_m(k, 0)] = m0;
                                st.values[L.idx_m(k, 1)] = m1;
                                for (std::size_t b = 0; b < L.cov_blocks().size(); ++b)
                                  st.set_cov_matrix(static_cast<int>(b), sigma);
                              });
  const SrocCurve curve = sroc_curve(s, "t1");
  REQUIRE(curve.curve_available);
  const double beta = sigma(1, 0) / sigma(0, 0);
  for (const auto& p : curve.points) {
    const double expected = inv_logit(m1 + beta * (logit(p.fpf) - m0));
    CHECK(p.sensitivity.median == doctest::Approx(expected).epsilon(1e-10));
    CHECK(p.sensitivity.lower == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("sroc: ellipse is axis-aligned for independent symmetric draws") {
  const Dataset d = fixtures::binary_network(8, 2);
  Rng rng(17);
  const auto s = make_samples(d, spec_of(ModelVariant::MetaRegression), 4000,
                              [&](int, ParameterState& st) {
                                const Layout& L = *st.layout;
                                const int k = L.test_index("t1");
                                st.values[L.idx_m(k, 0)] = -1.0 + 0.5 * rng.normal();
                                st.values[L.idx_m(k, 1)] = 1.0 + 0.1 * rng.normal();
                              });
  const SrocCurve curve = sroc_curve(s, "t1");
  // larger variance on the fpf axis -> first eigenvector near the x axis
  const double a = std::fabs(std::remainder(curve.ellipse.angle, M_PI));
  CHECK(std::min(a, M_PI - a) < 0.1);
  CHECK(curve.ellipse.axis1 > curve.ellipse.axis2);
  CHECK(curve.ellipse.center_x == doctest::Approx(-1.0).epsilon(0.05));
  // polygon lives in probability space
  for (const auto& [x, y] : curve.ellipse.polygon) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
    CHECK(y > 0.0);
    CHECK(y < 1.0);
  }
}

TEST_CASE("rankings: symmetry, dominance, exact probability bookkeeping") {
  const Dataset d = fixtures::binary_network(8, 3);
  Rng rng(23);
  const int n = 4000;
  // t1 and t2 exchangeable, t3 strictly worse
  const auto s = make_samples(d, spec_of(ModelVariant::MetaRegression), n,
                              [&](int, ParameterState& st) {
                                const Layout& L = *st.layout;
                                for (const char* id : {"t1", "t2"}) {
                                  const int k = L.test_index(id);
                                  st.values[L.idx_m(k, 0)] = -2.0 + 0.3 * rng.normal();
                                  st.values[L.idx_m(k, 1)] = 2.0 + 0.3 * rng.normal();
                                }
                                const int k3 = L.test_index("t3");
                                st.values[L.idx_m(k3, 0)] = 0.0;
                                st.values[L.idx_m(k3, 1)] = 0.0;
                              });
  const RankingReport rep =
      rankings(s, {"t1", "t2", "t3"}, {std::nullopt, std::nullopt, std::nullopt});

  for (std::size_t t = 0; t < rep.tests.size(); ++t) {
    double total = 0.0;
    for (double p : rep.rank_prob[t]) total += p;
    CHECK(std::fabs(total - 1.0) < 1e-12);
  }
  const double mc = 3.0 / std::sqrt(static_cast<double>(n));
  CHECK(rep.rank_prob[0][0] == doctest::Approx(0.5).epsilon(0.0).scale(1.0).epsilon(mc * 4));
  CHECK(rep.rank_prob[2][2] == doctest::Approx(1.0));
  CHECK(rep.median_rank[2] == doctest::Approx(3.0));

  // pairwise: t1 - t3 has positive delta sens and delta spec
  for (const auto& pc : rep.pairwise) {
    if (pc.test_a == "t1" && pc.test_b == "t3") {
      CHECK(pc.delta_sens.median > 0.3);
      CHECK(pc.delta_spec.median > 0.3);
      CHECK(pc.delta_log_dor.median > 1.0);
    }
  }
  CHECK_THROWS_AS(rankings(s, {"t1"}, {std::nullopt}), std::invalid_argument);
}

TEST_CASE("csv exports carry one row per measure") {
  const Dataset d = fixtures::mixed_network();
  const auto s = make_samples(d, spec_of(ModelVariant::MetaRegression), 150,
                              [](int, ParameterState&) {});
  std::vector<AccuracySummary> rows{pooled_accuracy(s, "c1", 20.0),
                                    pooled_accuracy(s, "b1", std::nullopt)};
  const std::string csv = accuracy_table_csv(rows);
  CHECK(csv.find("sensitivity") != std::string::npos);
  CHECK(csv.find("specificity") != std::string::npos);
  CHECK(csv.find("NA") != std::string::npos);  // binary threshold column
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 1 + 2 * 3);

  const RankingReport rep =
      rankings(s, {"b1", "b2"}, {std::nullopt, std::nullopt});
  const std::string rcsv = rankings_csv(rep);
  CHECK(rcsv.find("delta_log_dor") != std::string::npos);
}

TEST_CASE("predictive summaries widen the intervals") {
  const Dataset d = fixtures::mixed_network();
  Rng rng(29);
  const auto s = make_samples(
      d, spec_of(ModelVariant::Anova, CovarianceStructure::Reduced2), 600,
      [&](int, ParameterState& st) {
        const Layout& L = *st.layout;
        const int k = L.test_index("c1");
        st.values[L.idx_m(k, 0)] = -1.5 + 0.05 * rng.normal();
        st.values[L.idx_m(k, 1)] = 1.0 + 0.05 * rng.normal();
        for (std::size_t kk = 0; kk < L.test_ids.size(); ++kk)
          for (int j = 0; j < 2; ++j) {
            st.values[L.idx_tau_m(static_cast<int>(kk), j)] = 0.8;
            if (L.idx_tau_s(static_cast<int>(kk), j) >= 0)
              st.values[L.idx_tau_s(static_cast<int>(kk), j)] = 0.3;
          }
        st.set_cov_matrix(0, 0.4 * Eigen::Matrix2d::Identity());
      });
  const AccuracySummary plain = pooled_accuracy(s, "c1", 20.0, false);
  const AccuracySummary pred = pooled_accuracy(s, "c1", 20.0, true);
  CHECK(pred.sensitivity.upper - pred.sensitivity.lower >
        plain.sensitivity.upper - plain.sensitivity.lower);
  // deterministic given the container seed
  const AccuracySummary pred2 = pooled_accuracy(s, "c1", 20.0, true);
  CHECK(pred.sensitivity.median == pred2.sensitivity.median);
  CHECK(pred.fpf.upper == pred2.fpf.upper);
}
