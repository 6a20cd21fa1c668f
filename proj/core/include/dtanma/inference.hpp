#pragma once

#include "dtanma/model.hpp"
#include "dtanma/rng.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace dtanma {

struct SamplerConfig {
  int chains = 3;
  int warmup_iters = 10000;
  int keep_iters = 20000;
  int thin = 1;
  std::uint64_t seed = 1;
  double target_accept = 0.44;         // scalar proposals
  double target_accept_block = 0.234;  // joint covariance proposals
  int adapt_window = 50;
  int threads = 0;  // 0 = one thread per chain
  // Diagnostics switches: sample the prior only, or pin parameter groups by
  // name prefix (e.g. "eps[", "Sigma").
  bool likelihood_off = false;
  std::vector<std::string> freeze;

  std::string to_text() const;
  static SamplerConfig from_text(const std::string& text);
};

// Everything needed to continue a chain exactly where it stopped.
struct ChainCheckpoint {
  Eigen::VectorXd state;
  Rng::State rng{};
  std::vector<double> scalar_log_scales;
  std::vector<double> block_log_scales;
  long iterations_done = 0;
};

struct PosteriorSamples {
  std::shared_ptr<const Layout> layout;
  SamplerConfig config;
  std::uint64_t spec_hash = 0;
  std::uint64_t data_fingerprint = 0;
  int n_chains = 0;
  int n_kept = 0;
  int dim = 0;
  std::vector<std::vector<double>> draws;     // per chain, iteration-major
  std::vector<std::vector<double>> deviance;  // per chain
  std::vector<ChainCheckpoint> checkpoints;
  std::map<std::string, double> accept_rates;  // by site family

  double draw(int chain, int iter, int param) const {
    return draws[chain][static_cast<std::size_t>(iter) * dim + param];
  }
  std::vector<double> pooled(int param) const;
  std::vector<double> pooled_deviance() const;
  long total_kept() const { return static_cast<long>(n_chains) * n_kept; }
};

struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using ProgressFn = std::function<void(int chain, long done, long total)>;

// Data-informed deterministic starting point: empirical pooled logits for
// the fixed effects (clamped to +-4), random effects at zero, identity
// covariance blocks, tau at 0.5.
ParameterState initial_state(const Dataset& d, const ModelSpec& spec);

// Adaptive random-walk Metropolis within blocked Gibbs. One iteration
// updates, in this order:
//   1. every scalar site in flat layout order (m, s, eps, u, eta, gamma,
//      then tau/hyper), one normal + one uniform from the chain stream per
//      site, random-walk proposals (multiplicative for positive parameters);
//   2. every covariance block in layout order: a conjugate Wishart draw of
//      the precision matrix where the convention allows it, otherwise a
//      joint random-walk on the Cholesky parameters.
// Proposal scales adapt in windows of `adapt_window` during warmup only and
// are frozen afterwards. Chains use independent streams derived from
// (seed, chain index), so results do not depend on the thread count.
PosteriorSamples run_mcmc(const Dataset& d, const ModelSpec& spec,
                          const SamplerConfig& cfg, const ProgressFn& progress = nullptr);

// Continues sampling from the stored checkpoints, appending extra_keep
// retained draws per chain. Adaptation stays frozen.
void extend_mcmc(const Dataset& d, const ModelSpec& spec, PosteriorSamples& samples,
                 int extra_keep, const ProgressFn& progress = nullptr);

// Log-likelihood of the saturated model (conditional proportions fitted
// exactly; 0 log 0 terms contribute zero).
double saturated_loglik(const Dataset& d);

// -2 * (loglik(state) - loglik(saturated)).
double residual_deviance(const Dataset& d, const ParameterState& state,
                         const ModelSpec& spec);

struct DicReport {
  double mean_residual_deviance = 0.0;  // D-bar
  double p_v = 0.0;                     // var(deviance)/2
  double dic = 0.0;                     // D-bar + pV
};
DicReport dic(const PosteriorSamples& samples);

struct ParamDiagnostic {
  std::string name;
  double rhat = std::numeric_limits<double>::quiet_NaN();
  double ess = 0.0;
  bool flagged = false;
};

struct FitDiagnostics {
  std::vector<ParamDiagnostic> params;
  bool rhat_available = true;
  std::vector<std::string> warnings;
  std::map<std::string, double> accept_rates;
  std::string to_text() const;
};

// Rank-normalized split R-hat and bulk ESS.
FitDiagnostics diagnostics(const PosteriorSamples& samples);

double split_rhat(const std::vector<std::vector<double>>& chains);
double rank_normalized_ess(const std::vector<std::vector<double>>& chains);

}  // namespace dtanma
