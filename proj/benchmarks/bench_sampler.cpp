#include "dtanma/dataset.hpp"
#include "dtanma/inference.hpp"
#include "dtanma/model.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace dtanma;

// Cost of one retained iteration (all scalar sites + covariance blocks) on
// the bundled networks.
void bench_iterations(benchmark::State& state, const char* file, ModelVariant variant,
                      CovarianceStructure cov) {
  const Dataset d = parse_dataset_file(std::string(DTANMA_DATA_DIR) + file);
  ModelSpec spec;
  spec.variant = variant;
  spec.cov = cov;
  SamplerConfig cfg;
  cfg.chains = 1;
  cfg.warmup_iters = 10;
  cfg.seed = 1;
  long produced = 0;
  for (auto _ : state) {
    cfg.keep_iters = 50;
    cfg.seed += 1;
    const PosteriorSamples s = run_mcmc(d, spec, cfg);
    produced += s.n_kept;
    benchmark::DoNotOptimize(s.draws[0].back());
  }
  state.SetItemsProcessed(produced);
}

void BM_sampler_prostate_metareg(benchmark::State& state) {
  bench_iterations(state, "/prostate_synth.csv", ModelVariant::MetaRegression,
                   CovarianceStructure::Full4);
}
BENCHMARK(BM_sampler_prostate_metareg)->Unit(benchmark::kMillisecond);

void BM_sampler_hcc_anovaplus(benchmark::State& state) {
  bench_iterations(state, "/hcc_synth.csv", ModelVariant::AnovaPlus,
                   CovarianceStructure::Reduced2);
}
BENCHMARK(BM_sampler_hcc_anovaplus)->Unit(benchmark::kMillisecond);

void BM_diagnostics(benchmark::State& state) {
  const Dataset d = parse_dataset_file(std::string(DTANMA_DATA_DIR) + "/prostate_synth.csv");
  ModelSpec spec;
  spec.variant = ModelVariant::MetaRegression;
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.warmup_iters = 100;
  cfg.keep_iters = 500;
  cfg.seed = 3;
  const PosteriorSamples s = run_mcmc(d, spec, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(diagnostics(s).params.size());
}
BENCHMARK(BM_diagnostics)->Unit(benchmark::kMillisecond);

}  // namespace
