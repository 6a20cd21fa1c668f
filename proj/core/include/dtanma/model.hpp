#pragma once

#include "dtanma/dataset.hpp"
#include "dtanma/likelihood.hpp"
#include "dtanma/variant.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace dtanma {

struct PriorConfig {
  double fixed_effect_variance = 1000.0;  // m_kj, s_jk ~ N(0, this)
  double tau_upper = 5.0;                 // tau ~ U(0, this)
  double ma_exp_upper = 5.0;              // exp(m_a) ~ U(0, this)
  double sigma_a_upper = 20.0;            // sigma_a ~ U(0, this)
};

struct ModelSpec {
  ModelVariant variant = ModelVariant::MetaRegression;
  CovarianceStructure cov = CovarianceStructure::Full4;
  WishartConvention wishart = WishartConvention::Precision;
  // Extends the hierarchical variance prior of AnovaPlus from tau_m to tau_s
  // (experimental; off reproduces the published parametrization).
  bool hierarchical_scale_variances = false;
  PriorConfig priors;

  std::string to_config_text() const;
  std::uint64_t hash() const;
  bool is_anova_family() const {
    return variant == ModelVariant::Anova || variant == ModelVariant::AnovaPlus;
  }
};

// Which effect vectors a covariance block governs.
enum class EffectVectors {
  PairFull,    // (eps0, eps1, u0, u1) per study-test pair
  PairLoc,     // (eps0, eps1)
  PairScale,   // (u0, u1), continuous pairs only
  StudyFull,   // (eta0, eta1, gamma0, gamma1) per study
  StudyLoc,    // (eta0, eta1)
  StudyScale,  // (gamma0, gamma1)
};

struct CovBlock {
  std::string name;
  int dim = 0;
  int theta_offset = 0;  // chol parameters in the flat vector
  EffectVectors governs = EffectVectors::PairLoc;
  int only_test = -1;            // restrict to one test (Independent)
  bool binary_marginal = false;  // binary pairs enter through the 2x2 location block
  int theta_count() const { return dim * (dim + 1) / 2; }
};

// Deterministic map between the model's structured parameters and a flat
// real vector. Depends only on (Dataset, ModelSpec).
class Layout {
 public:
  ModelSpec spec;
  std::uint64_t data_fingerprint = 0;

  std::vector<std::string> test_ids;
  std::vector<bool> test_continuous;
  std::vector<double> c_star;    // NaN for binary
  std::vector<double> thr_min;   // observed threshold range, NaN for binary
  std::vector<double> thr_max;
  std::vector<std::string> study_ids;
  std::vector<std::pair<int, int>> pairs;  // (study_idx, test_idx), sorted
  bool has_continuous = false;

  struct SeriesRef {
    int pair = -1;
    int test = -1;
    int study = -1;
    int group = 0;
    std::vector<double> log_ratio;  // log(c_star) - log(C_t); empty for binary
  };
  std::vector<SeriesRef> series_refs;  // parallel to Dataset::series

  int dim = 0;
  std::vector<std::string> names;

  // ---- flat indices (-1 where the parameter does not exist) --------------
  int idx_m(int test, int group) const { return m_offset_ + 2 * test + group; }
  int idx_s(int test, int group) const {
    return s_index_[test] < 0 ? -1 : s_index_[test] + group;
  }
  int idx_eps(int pair, int group) const { return eps_index_[pair] + group; }
  int idx_u(int pair, int group) const {
    return u_index_[pair] < 0 ? -1 : u_index_[pair] + group;
  }
  int idx_eta(int study, int group) const {
    return eta_offset_ < 0 ? -1 : eta_offset_ + 2 * study + group;
  }
  int idx_gamma(int study, int group) const {
    return gamma_offset_ < 0 ? -1 : gamma_offset_ + 2 * study + group;
  }
  int idx_tau_m(int test, int group) const {
    return tau_m_index_.empty() ? -1 : tau_m_index_[test] + group;
  }
  int idx_tau_s(int test, int group) const {
    return tau_s_index_.empty() || tau_s_index_[test] < 0 ? -1
                                                          : tau_s_index_[test] + group;
  }
  int idx_m_a(int group) const { return m_a_offset_ < 0 ? -1 : m_a_offset_ + group; }
  int idx_sigma_a(int group) const {
    return sigma_a_offset_ < 0 ? -1 : sigma_a_offset_ + group;
  }
  int idx_m_a_scale(int group) const {
    return m_a_scale_offset_ < 0 ? -1 : m_a_scale_offset_ + group;
  }
  int idx_sigma_a_scale(int group) const {
    return sigma_a_scale_offset_ < 0 ? -1 : sigma_a_scale_offset_ + group;
  }

  const std::vector<CovBlock>& cov_blocks() const { return cov_blocks_; }
  bool has_eta() const { return eta_offset_ >= 0; }
  bool has_gamma() const { return gamma_offset_ >= 0; }
  bool has_tau() const { return !tau_m_index_.empty(); }

  int test_index(const std::string& test_id) const;
  int study_index(const std::string& study_id) const;
  int pair_index(int study, int test) const;

  std::string to_text() const;
  static std::shared_ptr<const Layout> from_text(const std::string& text);

  friend std::shared_ptr<const Layout> detail_build_layout(const Dataset&, const ModelSpec&);

 private:
  void finalize();  // derives flat indices from the tables above

  int m_offset_ = 0;
  std::vector<int> s_index_;
  std::vector<int> eps_index_;
  std::vector<int> u_index_;
  int eta_offset_ = -1;
  int gamma_offset_ = -1;
  std::vector<CovBlock> cov_blocks_;
  std::vector<int> tau_m_index_;
  std::vector<int> tau_s_index_;
  int m_a_offset_ = -1;
  int sigma_a_offset_ = -1;
  int m_a_scale_offset_ = -1;
  int sigma_a_scale_offset_ = -1;
};

// Materialized views of the structured parameter groups; rebuilt on demand
// from the flat vector.
struct FixedEffects {
  Eigen::MatrixXd location;   // tests x 2
  Eigen::MatrixXd log_scale;  // tests x 2, NaN where absent
};

struct RandomEffects {
  Eigen::MatrixXd eps;    // pairs x 2
  Eigen::MatrixXd u;      // pairs x 2, NaN where absent
  Eigen::MatrixXd eta;    // studies x 2 or 0x0
  Eigen::MatrixXd gamma;  // studies x 2 or 0x0
};

struct VarianceComponents {
  std::vector<std::pair<std::string, Eigen::MatrixXd>> sigma;
  Eigen::MatrixXd tau_m;  // tests x 2 or 0x0
  Eigen::MatrixXd tau_s;  // tests x 2 (NaN where absent) or 0x0
  Eigen::Vector2d m_a{std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN()};
  Eigen::Vector2d sigma_a{std::numeric_limits<double>::quiet_NaN(),
                          std::numeric_limits<double>::quiet_NaN()};
};

// One point of the joint parameter space. The flat vector is the canonical
// storage; covariance matrices live in it as log-diagonal Cholesky
// parameters, so flatten/unflatten is the identity by construction.
struct ParameterState {
  std::shared_ptr<const Layout> layout;
  Eigen::VectorXd values;

  double operator[](int i) const { return values[i]; }
  double& operator[](int i) { return values[i]; }

  double m(int test, int group) const { return values[layout->idx_m(test, group)]; }
  double s(int test, int group) const { return values[layout->idx_s(test, group)]; }
  double eps(int pair, int group) const { return values[layout->idx_eps(pair, group)]; }
  double u(int pair, int group) const { return values[layout->idx_u(pair, group)]; }
  double eta(int study, int group) const { return values[layout->idx_eta(study, group)]; }
  double gamma(int study, int group) const {
    return values[layout->idx_gamma(study, group)];
  }
  double tau_m(int test, int group) const {
    return values[layout->idx_tau_m(test, group)];
  }
  double tau_s(int test, int group) const {
    return values[layout->idx_tau_s(test, group)];
  }

  Eigen::MatrixXd cov_matrix(int block) const;
  Eigen::MatrixXd cov_chol_lower(int block) const;
  // Cholesky-factorizes and stores; throws std::domain_error if not SPD.
  void set_cov_matrix(int block, const Eigen::MatrixXd& sigma);

  FixedEffects fixed_effects() const;
  RandomEffects random_effects() const;
  VarianceComponents variance_components() const;

  // mu_ijk and log sigma_ijk assembled per the variant.
  AccuracyParams accuracy_params(const Layout::SeriesRef& ref) const;
};

// Builds the deterministic layout and a zero-initialized state. Throws if
// the variant's data requirements are violated.
ParameterState build_layout(const Dataset& d, const ModelSpec& spec);

// Hyper-prior log density (fixed effects, Wishart on each random-effects
// precision matrix, uniform/hierarchical variance priors). Covariance terms
// are densities over the matrix; scalar terms are densities over the stored
// coordinate (Jacobians included for hierarchically modeled tau). Returns
// -inf outside the prior support.
double log_prior(const ParameterState& state, const ModelSpec& spec);

// Log density of all random effects given the variance components.
double random_effects_logdensity(const ParameterState& state, const ModelSpec& spec);

// Exact log-likelihood of one series at the current state.
double series_loglik(const Dataset& d, const ParameterState& state, int series_idx);

// dataset log-likelihood + random-effects density + prior.
double log_posterior(const Dataset& d, const ParameterState& state, const ModelSpec& spec);

struct DesignCell {
  std::string study_id;
  std::string test_id;
  DiseaseGroup group = DiseaseGroup::NonDiseased;
  std::vector<double> thresholds;  // empty for binary tests
  long group_size = 0;
};

// Draws counts by the sequential conditional-binomial scheme; deterministic
// given the seed.
Dataset simulate_dataset(const ModelSpec& spec, const ParameterState& true_state,
                         const std::vector<DesignCell>& design, std::uint64_t seed);

// Zero-count dataset with the design's shape. A layout built on the skeleton
// indexes the same studies/tests/pairs, so a true state constructed on it can
// drive simulate_dataset over the identical design.
Dataset design_skeleton(const std::vector<TestDescriptor>& tests,
                        const std::vector<DesignCell>& design);

}  // namespace dtanma
