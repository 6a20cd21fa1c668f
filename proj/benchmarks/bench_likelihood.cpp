#include "dtanma/dataset.hpp"
#include "dtanma/likelihood.hpp"
#include "dtanma/model.hpp"
#include "dtanma/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

using namespace dtanma;

ThresholdSeries make_series(int len, long n, Rng& rng, std::vector<double>& probs) {
  ThresholdSeries s;
  s.study_id = "s";
  s.test_id = "t";
  s.group = DiseaseGroup::Diseased;
  s.group_size = n;
  probs.clear();
  for (int t = 0; t < len; ++t) {
    s.thresholds.push_back(10.0 * (t + 1));
    probs.push_back(0.9 * std::pow(0.6, t));
  }
  long prev = n;
  for (int t = 0; t < len; ++t) {
    prev = rng.binomial(prev, 0.7);
    s.positives.push_back(prev);
  }
  return s;
}

void BM_chain_loglik(benchmark::State& state) {
  Rng rng(1);
  std::vector<double> probs;
  const ThresholdSeries s = make_series(static_cast<int>(state.range(0)), 200, rng, probs);
  for (auto _ : state) benchmark::DoNotOptimize(chain_loglik(s, probs));
}
BENCHMARK(BM_chain_loglik)->Arg(1)->Arg(3)->Arg(6);

void BM_multinomial_oracle(benchmark::State& state) {
  Rng rng(1);
  std::vector<double> probs;
  const ThresholdSeries s = make_series(static_cast<int>(state.range(0)), 200, rng, probs);
  for (auto _ : state) benchmark::DoNotOptimize(multinomial_oracle(s, probs));
}
BENCHMARK(BM_multinomial_oracle)->Arg(3)->Arg(6);

void BM_dataset_loglik(benchmark::State& state) {
  const Dataset d = parse_dataset_file(std::string(DTANMA_DATA_DIR) + "/hcc_synth.csv");
  ModelSpec spec;
  spec.variant = ModelVariant::MetaRegression;
  const ParameterState st = build_layout(d, spec);
  for (auto _ : state) {
    double total = 0.0;
    for (std::size_t i = 0; i < d.series.size(); ++i)
      total += series_loglik(d, st, static_cast<int>(i));
    benchmark::DoNotOptimize(total);
  }
}
BENCHMARK(BM_dataset_loglik);

}  // namespace
