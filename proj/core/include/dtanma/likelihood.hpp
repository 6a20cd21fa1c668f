#pragma once

#include "dtanma/dataset.hpp"

#include <map>
#include <optional>
#include <span>
#include <tuple>

namespace dtanma {

// Per-(study, test, group) accuracy parameters on the latent logistic scale.
// location is mu_ijk (logit scale), log_scale is log sigma_ijk. For binary
// tests (is_continuous = false) the scale is unused.
struct AccuracyParams {
  double location = 0.0;
  double log_scale = 0.0;
  bool is_continuous = false;
  double c_star = std::numeric_limits<double>::quiet_NaN();
};

// Probability of a positive result at a threshold:
//   inv_logit(mu + z * (log c_star - log threshold) / sigma).
// Pass nullopt for binary tests. Strictly decreasing in the threshold for
// continuous tests away from floating-point saturation.
double positive_prob(const AccuracyParams& params, std::optional<double> threshold);

// Exact log-likelihood of one series under the conditional-binomial chain:
// x_1 ~ Bin(p_1, N), x_t | x_{t-1} ~ Bin(p_t / p_{t-1}, x_{t-1}).
// Conditional ratios are formed in log space; impossible data returns -inf.
double chain_loglik(const ThresholdSeries& series, std::span<const double> probs);

// Independent check: log density of the equivalent multinomial over interval
// counts (N - x_1, x_1 - x_2, ..., x_T) with cell probabilities
// (1 - p_1, p_1 - p_2, ..., p_T). Agrees with chain_loglik to ~1e-10.
double multinomial_oracle(const ThresholdSeries& series, std::span<const double> probs);

struct SeriesKey {
  std::string study_id;
  std::string test_id;
  DiseaseGroup group;
  bool operator<(const SeriesKey& o) const {
    return std::tie(study_id, test_id, group) < std::tie(o.study_id, o.test_id, o.group);
  }
};

using AccuracyParamsMap = std::map<SeriesKey, AccuracyParams>;

// Sum of chain_loglik over all series; summation follows the dataset's
// sorted series order so results are bit-stable. Throws if a series has no
// parameter entry.
double dataset_loglik(const Dataset& d, const AccuracyParamsMap& params);

}  // namespace dtanma
