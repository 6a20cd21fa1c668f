// Criterion 3: posterior recovery. 20 simulated networks (20 studies, 3
// continuous tests, 3 thresholds per series) under the study-effect variant;
// the 95% intervals must cover the true location fixed effects in >= 88% of
// cases pooled over replicates, within 15 minutes.

#include "acceptance.hpp"

#include "dtanma/inference.hpp"
#include "dtanma/math.hpp"
#include "dtanma/model.hpp"
#include "dtanma/rng.hpp"

#include <chrono>
#include <cmath>

namespace {

using namespace dtanma;

bool run(std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();

  const int n_reps = 20;
  const int n_studies = 20;
  const std::vector<std::string> test_ids{"ct1", "ct2", "ct3"};
  const std::vector<double> cstar{20.0, 35.0, 50.0};
  const double true_m[3][2] = {{-2.2, 1.0}, {-1.5, 0.7}, {-2.8, 1.4}};
  const double true_s[3][2] = {{0.1, -0.1}, {0.0, 0.2}, {-0.2, 0.0}};

  std::vector<TestDescriptor> tests;
  for (int k = 0; k < 3; ++k)
    tests.push_back({test_ids[k], test_ids[k], TestKind::Continuous, cstar[k]});

  std::vector<DesignCell> design;
  for (int i = 0; i < n_studies; ++i) {
    const std::string study = "s" + std::string(i < 9 ? "0" : "") + std::to_string(i + 1);
    for (int k = 0; k < 3; ++k) {
      const std::vector<double> thresholds{0.5 * cstar[k], cstar[k], 2.0 * cstar[k]};
      const long n_dis = 90 + 13 * ((i + k) % 7);
      const long n_non = 120 + 17 * ((i + 2 * k) % 5);
      design.push_back({study, test_ids[k], DiseaseGroup::Diseased, thresholds, n_dis});
      design.push_back({study, test_ids[k], DiseaseGroup::NonDiseased, thresholds, n_non});
    }
  }

  ModelSpec spec;
  spec.variant = ModelVariant::Anova;
  spec.cov = CovarianceStructure::Reduced2;

  const Dataset skeleton = design_skeleton(tests, design);
  int covered = 0, total = 0;
  for (int rep = 0; rep < n_reps; ++rep) {
    ParameterState truth = build_layout(skeleton, spec);
    const Layout& L = *truth.layout;
    Rng rng(5000 + rep);
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 2; ++j) {
        truth.values[L.idx_m(k, j)] = true_m[k][j];
        truth.values[L.idx_s(k, j)] = true_s[k][j];
        truth.values[L.idx_tau_m(k, j)] = 0.4;
        truth.values[L.idx_tau_s(k, j)] = 0.15;
      }
    truth.set_cov_matrix(0, [] {
      Eigen::Matrix2d s;
      s << 0.09, 0.03, 0.03, 0.09;
      return s;
    }());
    for (std::size_t e = 0; e < L.pairs.size(); ++e)
      for (int j = 0; j < 2; ++j) {
        truth.values[L.idx_eps(static_cast<int>(e), j)] = rng.normal(0.0, 0.4);
        truth.values[L.idx_u(static_cast<int>(e), j)] = rng.normal(0.0, 0.15);
      }
    {
      const Eigen::MatrixXd chol = truth.cov_chol_lower(0);
      for (std::size_t i = 0; i < L.study_ids.size(); ++i) {
        Eigen::VectorXd z(2);
        z << rng.normal(), rng.normal();
        const Eigen::VectorXd eta = chol * z;
        truth.values[L.idx_eta(static_cast<int>(i), 0)] = eta[0];
        truth.values[L.idx_eta(static_cast<int>(i), 1)] = eta[1];
      }
    }

    const Dataset sim = simulate_dataset(spec, truth, design, 77000 + rep);

    SamplerConfig cfg;
    cfg.chains = 1;
    cfg.warmup_iters = 1200;
    cfg.keep_iters = 1200;
    cfg.seed = 1000 + rep;
    const PosteriorSamples fit = run_mcmc(sim, spec, cfg);
    const Layout& FL = *fit.layout;
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 2; ++j) {
        auto draws = fit.pooled(FL.idx_m(FL.test_index(test_ids[k]), j));
        const double lo = quantile(draws, 0.025);
        const double hi = quantile(draws, 0.975);
        covered += (true_m[k][j] >= lo && true_m[k][j] <= hi) ? 1 : 0;
        ++total;
      }
  }

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double rate = static_cast<double>(covered) / total;
  out << "coverage=" << covered << "/" << total << " (" << rate * 100.0
      << "%), time=" << seconds << "s";
  return rate >= 0.88 && seconds < 900.0;
}

const acceptance::Register reg(3, "posterior recovery coverage of the location effects", run);

}  // namespace
