#include "dtanma/inference.hpp"
#include "dtanma/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dtanma {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Split every chain in half, dropping the middle draw of odd-length chains.
std::vector<std::vector<double>> split_halves(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    if (half == 0) continue;
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.end() - half, c.end());
  }
  return out;
}

bool is_constant(const std::vector<std::vector<double>>& seqs) {
  double first = seqs.front().front();
  for (const auto& s : seqs)
    for (double v : s)
      if (v != first) return false;
  return true;
}

// Fractional ranks with average ties, mapped through the normal quantile.
std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& seqs) {
  struct Entry {
    double value;
    std::size_t seq, pos;
  };
  std::vector<Entry> all;
  for (std::size_t m = 0; m < seqs.size(); ++m)
    for (std::size_t i = 0; i < seqs[m].size(); ++i) all.push_back({seqs[m][i], m, i});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.value < b.value; });
  const double total = static_cast<double>(all.size());
  std::vector<std::vector<double>> out(seqs.size());
  for (std::size_t m = 0; m < seqs.size(); ++m) out[m].resize(seqs[m].size());
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    const double z = normal_quantile((avg_rank - 0.375) / (total + 0.25));
    for (std::size_t k = i; k < j; ++k) out[all[k].seq][all[k].pos] = z;
    i = j;
  }
  return out;
}

struct Moments {
  double b = 0.0, w = 0.0, var_plus = 0.0;
  std::vector<double> seq_mean, seq_var;
};

Moments pooled_moments(const std::vector<std::vector<double>>& seqs) {
  const double m = static_cast<double>(seqs.size());
  const double n = static_cast<double>(seqs.front().size());
  Moments mo;
  for (const auto& s : seqs) {
    mo.seq_mean.push_back(mean(s));
    mo.seq_var.push_back(s.size() > 1 ? sample_variance(s) : 0.0);
  }
  const double grand = mean(mo.seq_mean);
  double b = 0.0;
  for (double mu : mo.seq_mean) b += (mu - grand) * (mu - grand);
  mo.b = seqs.size() > 1 ? n / (m - 1.0) * b : 0.0;
  mo.w = mean(mo.seq_var);
  mo.var_plus = (n - 1.0) / n * mo.w + mo.b / n;
  return mo;
}

double ess_from(const std::vector<std::vector<double>>& seqs) {
  const Moments mo = pooled_moments(seqs);
  if (!(mo.var_plus > 0.0)) return 1.0;
  const std::size_t n = seqs.front().size();
  const std::size_t m = seqs.size();
  const std::size_t max_lag = std::min<std::size_t>(n - 1, 2000);

  // Combined autocorrelations with Geyer's initial monotone positive
  // sequence rule on paired sums.
  auto acov = [&](const std::vector<double>& s, double mu, std::size_t lag) {
    double acc = 0.0;
    for (std::size_t t = lag; t < s.size(); ++t) acc += (s[t] - mu) * (s[t - lag] - mu);
    return acc / static_cast<double>(s.size());
  };

  std::vector<double> rho;
  rho.push_back(1.0);
  double tau = 1.0;
  double prev_pair = kNaN;
  for (std::size_t lag = 1; lag + 1 <= max_lag; lag += 2) {
    double a1 = 0.0, a2 = 0.0;
    for (std::size_t q = 0; q < m; ++q) {
      a1 += acov(seqs[q], mo.seq_mean[q], lag);
      a2 += acov(seqs[q], mo.seq_mean[q], lag + 1);
    }
    a1 /= static_cast<double>(m);
    a2 /= static_cast<double>(m);
    const double r1 = 1.0 - (mo.w - a1) / mo.var_plus;
    const double r2 = 1.0 - (mo.w - a2) / mo.var_plus;
    double pair = r1 + r2;
    if (pair < 0.0) break;
    if (!std::isnan(prev_pair) && pair > prev_pair) pair = prev_pair;  // monotone
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  double ess = static_cast<double>(m) * static_cast<double>(n) / tau;
  ess = std::min(ess, static_cast<double>(m) * static_cast<double>(n) *
                          std::log10(static_cast<double>(m * n)));
  return std::max(ess, 1.0);
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  auto seqs = split_halves(chains);
  if (seqs.size() < 2) return kNaN;
  if (is_constant(seqs)) return kNaN;
  seqs = rank_normalize(seqs);
  const Moments mo = pooled_moments(seqs);
  if (!(mo.w > 0.0)) return kNaN;
  return std::sqrt(mo.var_plus / mo.w);
}

double rank_normalized_ess(const std::vector<std::vector<double>>& chains) {
  auto seqs = split_halves(chains);
  if (seqs.empty()) return 0.0;
  if (is_constant(seqs)) return 1.0;
  seqs = rank_normalize(seqs);
  return ess_from(seqs);
}

FitDiagnostics diagnostics(const PosteriorSamples& samples) {
  FitDiagnostics out;
  out.accept_rates = samples.accept_rates;
  out.rhat_available = samples.n_chains >= 2;
  if (!out.rhat_available)
    out.warnings.push_back("single chain: split R-hat not computed");

  for (int p = 0; p < samples.dim; ++p) {
    std::vector<std::vector<double>> chains(samples.n_chains);
    for (int c = 0; c < samples.n_chains; ++c) {
      chains[c].resize(samples.n_kept);
      for (int i = 0; i < samples.n_kept; ++i) chains[c][i] = samples.draw(c, i, p);
    }
    ParamDiagnostic d;
    d.name = samples.layout->names[p];
    d.ess = rank_normalized_ess(chains);
    if (out.rhat_available) d.rhat = split_rhat(chains);
    const bool stuck = d.ess <= 1.0 + 1e-12;
    d.flagged = stuck || (out.rhat_available && !std::isnan(d.rhat) && d.rhat > 1.05);
    if (stuck) out.warnings.push_back("parameter " + d.name + " appears stuck (ESS ~ 1)");
    out.params.push_back(std::move(d));
  }
  return out;
}

std::string FitDiagnostics::to_text() const {
  std::ostringstream os;
  os << "# parameter\trhat\tess\tflag\n";
  os.precision(6);
  for (const auto& p : params) {
    os << p.name << '\t';
    if (std::isnan(p.rhat))
      os << "NA";
    else
      os << p.rhat;
    os << '\t' << p.ess << '\t' << (p.flagged ? "FLAG" : "ok") << '\n';
  }
  os << "# acceptance rates\n";
  for (const auto& [family, rate] : accept_rates)
    os << "accept\t" << family << '\t' << rate << '\n';
  for (const auto& w : warnings) os << "warning\t" << w << '\n';
  return os.str();
}

}  // namespace dtanma
