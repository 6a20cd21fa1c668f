#pragma once

#include "dtanma/inference.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dtanma {

struct CredibleInterval {
  double median = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
};

struct AccuracySummary {
  std::string test_id;
  std::optional<double> threshold;  // nullopt for binary tests
  CredibleInterval sensitivity;
  CredibleInterval fpf;
  bool extrapolated = false;  // threshold outside the observed range

  // 1 - fpf with the bounds exchanged.
  CredibleInterval specificity() const {
    return {1.0 - fpf.median, 1.0 - fpf.upper, 1.0 - fpf.lower};
  }
};

// Pooled accuracy at a threshold, over the retained draws of the fixed
// effects. `predictive` re-draws the random effects per retained draw
// instead (sensitivity analysis for a new study).
AccuracySummary pooled_accuracy(const PosteriorSamples& samples, const std::string& test_id,
                                std::optional<double> threshold, bool predictive = false);

struct ThresholdCurve {
  std::string test_id;
  std::vector<double> grid;  // log-spaced over the observed range
  std::vector<AccuracySummary> points;
};

ThresholdCurve threshold_curve(const PosteriorSamples& samples, const std::string& test_id,
                               int grid_size = 100);

struct CredibleEllipse {
  // On the (logit fpf, logit sensitivity) scale.
  double center_x = 0.0, center_y = 0.0;
  double axis1 = 0.0, axis2 = 0.0;  // semi-axes at the 95% chi-square radius
  double angle = 0.0;               // radians, first eigenvector vs x-axis
  // Mapped back to (fpf, sensitivity) space for plotting.
  std::vector<std::pair<double, double>> polygon;
};

struct SrocPoint {
  double fpf = 0.0;
  CredibleInterval sensitivity;
};

struct SrocCurve {
  std::string test_id;
  std::vector<SrocPoint> points;  // ordered by fpf
  CredibleEllipse ellipse;
  bool curve_available = true;
  std::string flag;  // reason when only the ellipse could be built
};

// Continuous tests: per-draw (fpf, sens) trace over the threshold grid with
// pointwise-in-fpf sensitivity quantiles. Binary tests: per-draw summary
// line implied by the fitted location covariance block.
SrocCurve sroc_curve(const PosteriorSamples& samples, const std::string& test_id);

struct PairwiseComparison {
  std::string test_a, test_b;
  CredibleInterval delta_sens;
  CredibleInterval delta_spec;
  CredibleInterval delta_log_dor;
};

struct RankingReport {
  std::vector<std::string> tests;
  // rank_prob[t][r] = P(test t has rank r+1) by Youden index.
  std::vector<std::vector<double>> rank_prob;
  std::vector<double> median_rank;
  std::vector<PairwiseComparison> pairwise;
};

// thresholds: one entry per test; nullopt selects the reference threshold
// (and is required for binary tests).
RankingReport rankings(const PosteriorSamples& samples, const std::vector<std::string>& tests,
                       const std::vector<std::optional<double>>& thresholds);

// Delimited export: one row per test x threshold x measure.
std::string accuracy_table_csv(const std::vector<AccuracySummary>& rows);
std::string rankings_csv(const RankingReport& report);

}  // namespace dtanma
