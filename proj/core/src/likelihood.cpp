#include "dtanma/likelihood.hpp"
#include "dtanma/math.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dtanma {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double positive_prob(const AccuracyParams& params, std::optional<double> threshold) {
  if (!std::isfinite(params.location) || !std::isfinite(params.log_scale))
    throw std::invalid_argument("positive_prob: non-finite parameters");
  double x = params.location;
  if (params.is_continuous && threshold.has_value()) {
    const double thr = *threshold;
    if (!std::isfinite(thr) || !(thr > 0.0))
      throw std::invalid_argument("positive_prob: threshold must be a positive real");
    if (!std::isfinite(params.c_star) || !(params.c_star > 0.0))
      throw std::invalid_argument("positive_prob: c_star must be a positive real");
    const double sigma = std::exp(params.log_scale);
    x += (std::log(params.c_star) - std::log(thr)) / sigma;
  } else if (params.is_continuous) {
    throw std::invalid_argument("positive_prob: continuous test requires a threshold");
  }
  return inv_logit(x);
}

double chain_loglik(const ThresholdSeries& series, std::span<const double> probs) {
  const std::size_t T = series.positives.size();
  if (probs.size() != T)
    throw std::invalid_argument("chain_loglik: probs length does not match series");
  for (double p : probs)
    if (std::isnan(p)) throw std::invalid_argument("chain_loglik: NaN probability");

  // Guard the boundaries so log terms stay defined; valid counts with probs
  // inside (0,1) never hit the clamps.
  auto clamp01 = [](double p) {
    if (p < 1e-300) return 1e-300;
    const double hi = 1.0 - 0x1.0p-53;
    return p > hi ? hi : p;
  };

  const double n = static_cast<double>(series.group_size);
  const double x1 = static_cast<double>(series.positives[0]);
  const double p1 = clamp01(probs[0]);
  double ll = log_choose(n, x1);
  if (x1 > 0.0) ll += x1 * std::log(p1);
  if (n - x1 > 0.0) ll += (n - x1) * std::log1p(-p1);

  double prev_log_p = std::log(p1);
  for (std::size_t t = 1; t < T; ++t) {
    const double x_prev = static_cast<double>(series.positives[t - 1]);
    const double x_t = static_cast<double>(series.positives[t]);
    const double log_p = std::log(clamp01(probs[t]));
    if (x_t > x_prev) return -kInf;
    if (x_prev == 0.0) {
      prev_log_p = log_p;
      continue;  // Binomial(0 | ., 0) = 1
    }
    // Conditional success probability q = p_t / p_{t-1}, clamped to (0,1].
    double log_q = log_p - prev_log_p;
    if (log_q > 0.0) log_q = 0.0;
    ll += log_choose(x_prev, x_t);
    if (x_t > 0.0) ll += x_t * log_q;
    if (x_prev - x_t > 0.0) {
      const double log_1mq = log1mexp(log_q);
      if (log_1mq == -kInf) return -kInf;
      ll += (x_prev - x_t) * log_1mq;
    }
    prev_log_p = log_p;
  }
  return ll;
}

double multinomial_oracle(const ThresholdSeries& series, std::span<const double> probs) {
  const std::size_t T = series.positives.size();
  if (probs.size() != T)
    throw std::invalid_argument("multinomial_oracle: probs length does not match series");
  for (double p : probs)
    if (std::isnan(p)) throw std::invalid_argument("multinomial_oracle: NaN probability");

  const double n = static_cast<double>(series.group_size);
  std::vector<double> counts(T + 1), cells(T + 1);
  counts[0] = n - static_cast<double>(series.positives[0]);
  cells[0] = 1.0 - probs[0];
  for (std::size_t t = 0; t + 1 < T; ++t) {
    counts[t + 1] =
        static_cast<double>(series.positives[t]) - static_cast<double>(series.positives[t + 1]);
    cells[t + 1] = probs[t] - probs[t + 1];
  }
  counts[T] = static_cast<double>(series.positives[T - 1]);
  cells[T] = probs[T - 1];

  double ll = std::lgamma(n + 1.0);
  for (std::size_t i = 0; i <= T; ++i) {
    if (counts[i] < 0.0) return -kInf;
    ll -= std::lgamma(counts[i] + 1.0);
    if (counts[i] > 0.0) {
      if (!(cells[i] > 0.0)) return -kInf;
      ll += counts[i] * std::log(cells[i]);
    }
  }
  return ll;
}

double dataset_loglik(const Dataset& d, const AccuracyParamsMap& params) {
  double total = 0.0;
  std::vector<double> probs;
  for (const auto& s : d.series) {
    const auto it = params.find({s.study_id, s.test_id, s.group});
    if (it == params.end())
      throw std::invalid_argument("dataset_loglik: missing parameters for " + s.location());
    const AccuracyParams& a = it->second;
    probs.clear();
    for (double thr : s.thresholds) {
      if (std::isnan(thr))
        probs.push_back(positive_prob(a, std::nullopt));
      else
        probs.push_back(positive_prob(a, thr));
    }
    total += chain_loglik(s, probs);
  }
  return total;
}

}  // namespace dtanma
