#pragma once

#include "dtanma/summaries.hpp"

#include <string>

namespace dtanma {

// Self-contained SVG output; every figure embeds its numeric data as a CSV
// block inside <metadata> so results stay auditable without re-running.

// Sensitivity and FPF vs threshold (log x axis) with 95% bands.
std::string threshold_curve_svg(const ThresholdCurve& curve);

// ROC-space figure: summary curve with pointwise band, credible ellipse, and
// the pooled operating point.
std::string sroc_svg(const SrocCurve& curve, const AccuracySummary& pooled);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace dtanma
