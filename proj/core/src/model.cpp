#include "dtanma/model.hpp"
#include "dtanma/math.hpp"
#include "dtanma/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace dtanma {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

// ---- ModelSpec -------------------------------------------------------------

std::string ModelSpec::to_config_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "variant = " << to_string(variant) << '\n'
     << "covariance = " << to_string(cov) << '\n'
     << "wishart_convention = " << to_string(wishart) << '\n'
     << "hierarchical_scale_variances = " << (hierarchical_scale_variances ? "true" : "false")
     << '\n'
     << "prior_fixed_variance = " << priors.fixed_effect_variance << '\n'
     << "prior_tau_upper = " << priors.tau_upper << '\n'
     << "prior_ma_exp_upper = " << priors.ma_exp_upper << '\n'
     << "prior_sigma_a_upper = " << priors.sigma_a_upper << '\n';
  return os.str();
}

std::uint64_t ModelSpec::hash() const { return fnv1a64(to_config_text()); }

// ---- Layout ----------------------------------------------------------------

int Layout::test_index(const std::string& test_id) const {
  for (std::size_t k = 0; k < test_ids.size(); ++k)
    if (test_ids[k] == test_id) return static_cast<int>(k);
  return -1;
}

int Layout::study_index(const std::string& study_id) const {
  const auto it = std::lower_bound(study_ids.begin(), study_ids.end(), study_id);
  if (it == study_ids.end() || *it != study_id) return -1;
  return static_cast<int>(it - study_ids.begin());
}

int Layout::pair_index(int study, int test) const {
  const auto it = std::lower_bound(pairs.begin(), pairs.end(), std::make_pair(study, test));
  if (it == pairs.end() || *it != std::make_pair(study, test)) return -1;
  return static_cast<int>(it - pairs.begin());
}

void Layout::finalize() {
  const int K = static_cast<int>(test_ids.size());
  const int I = static_cast<int>(study_ids.size());
  const int P = static_cast<int>(pairs.size());
  has_continuous = false;
  for (bool c : test_continuous) has_continuous = has_continuous || c;
  const bool anova = spec.is_anova_family();

  names.clear();
  int next = 0;
  auto push = [&](const std::string& name) {
    names.push_back(name);
    return next++;
  };

  m_offset_ = next;
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < 2; ++j)
      push("m[" + test_ids[k] + "," + std::to_string(j) + "]");

  s_index_.assign(K, -1);
  for (int k = 0; k < K; ++k) {
    if (!test_continuous[k]) continue;
    s_index_[k] = next;
    for (int j = 0; j < 2; ++j)
      push("s[" + test_ids[k] + "," + std::to_string(j) + "]");
  }

  eps_index_.assign(P, -1);
  for (int e = 0; e < P; ++e) {
    eps_index_[e] = next;
    for (int j = 0; j < 2; ++j)
      push("eps[" + study_ids[pairs[e].first] + "," + test_ids[pairs[e].second] + "," +
           std::to_string(j) + "]");
  }

  u_index_.assign(P, -1);
  for (int e = 0; e < P; ++e) {
    if (!test_continuous[pairs[e].second]) continue;
    u_index_[e] = next;
    for (int j = 0; j < 2; ++j)
      push("u[" + study_ids[pairs[e].first] + "," + test_ids[pairs[e].second] + "," +
           std::to_string(j) + "]");
  }

  eta_offset_ = -1;
  gamma_offset_ = -1;
  if (anova) {
    eta_offset_ = next;
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < 2; ++j)
        push("eta[" + study_ids[i] + "," + std::to_string(j) + "]");
    if (spec.cov != CovarianceStructure::Reduced2 && has_continuous) {
      gamma_offset_ = next;
      for (int i = 0; i < I; ++i)
        for (int j = 0; j < 2; ++j)
          push("gamma[" + study_ids[i] + "," + std::to_string(j) + "]");
    }
  }

  cov_blocks_.clear();
  auto add_block = [&](const std::string& name, int dim, EffectVectors governs,
                       int only_test, bool marginal) {
    CovBlock b;
    b.name = name;
    b.dim = dim;
    b.governs = governs;
    b.only_test = only_test;
    b.binary_marginal = marginal;
    b.theta_offset = next;
    for (int t = 0; t < b.theta_count(); ++t) push(name + ".c" + std::to_string(t));
    cov_blocks_.push_back(b);
  };

  bool any_binary = false;
  for (bool c : test_continuous) any_binary = any_binary || !c;

  if (spec.variant == ModelVariant::Independent) {
    for (int k = 0; k < K; ++k) {
      const std::string id = test_ids[k];
      if (!test_continuous[k]) {
        add_block("Sigma[" + id + "]", 2, EffectVectors::PairLoc, k, false);
      } else if (spec.cov == CovarianceStructure::Full4) {
        add_block("Sigma[" + id + "]", 4, EffectVectors::PairFull, k, false);
      } else if (spec.cov == CovarianceStructure::BlockDiag22) {
        add_block("SigmaLoc[" + id + "]", 2, EffectVectors::PairLoc, k, false);
        add_block("SigmaScale[" + id + "]", 2, EffectVectors::PairScale, k, false);
      } else {
        add_block("SigmaLoc[" + id + "]", 2, EffectVectors::PairLoc, k, false);
      }
    }
  } else if (spec.variant == ModelVariant::MetaRegression) {
    if (spec.cov == CovarianceStructure::Full4) {
      if (has_continuous)
        add_block("Sigma", 4, EffectVectors::PairFull, -1, any_binary);
      else
        add_block("Sigma", 2, EffectVectors::PairLoc, -1, false);
    } else if (spec.cov == CovarianceStructure::BlockDiag22) {
      add_block("SigmaLoc", 2, EffectVectors::PairLoc, -1, false);
      if (has_continuous) add_block("SigmaScale", 2, EffectVectors::PairScale, -1, false);
    } else {
      add_block("SigmaLoc", 2, EffectVectors::PairLoc, -1, false);
    }
  } else {  // Anova / AnovaPlus: study-level block
    if (spec.cov == CovarianceStructure::Full4) {
      if (has_continuous)
        add_block("SigmaStudy", 4, EffectVectors::StudyFull, -1, false);
      else
        add_block("SigmaStudy", 2, EffectVectors::StudyLoc, -1, false);
    } else if (spec.cov == CovarianceStructure::BlockDiag22) {
      add_block("SigmaStudyLoc", 2, EffectVectors::StudyLoc, -1, false);
      if (has_continuous) add_block("SigmaStudyScale", 2, EffectVectors::StudyScale, -1, false);
    } else {
      add_block("SigmaStudyLoc", 2, EffectVectors::StudyLoc, -1, false);
    }
  }

  tau_m_index_.clear();
  tau_s_index_.clear();
  if (anova) {
    tau_m_index_.assign(K, -1);
    for (int k = 0; k < K; ++k) {
      tau_m_index_[k] = next;
      for (int j = 0; j < 2; ++j)
        push("tau_m[" + test_ids[k] + "," + std::to_string(j) + "]");
    }
    tau_s_index_.assign(K, -1);
    for (int k = 0; k < K; ++k) {
      if (!test_continuous[k]) continue;
      tau_s_index_[k] = next;
      for (int j = 0; j < 2; ++j)
        push("tau_s[" + test_ids[k] + "," + std::to_string(j) + "]");
    }
  } else if (spec.cov == CovarianceStructure::Reduced2 && has_continuous) {
    // Models 1-2 with the reduced structure: u terms keep independent
    // variances. Shared across tests under MetaRegression, per test under
    // Independent.
    tau_s_index_.assign(K, -1);
    if (spec.variant == ModelVariant::MetaRegression) {
      const int shared = next;
      for (int j = 0; j < 2; ++j) push("tau_s[*," + std::to_string(j) + "]");
      for (int k = 0; k < K; ++k)
        if (test_continuous[k]) tau_s_index_[k] = shared;
    } else {
      for (int k = 0; k < K; ++k) {
        if (!test_continuous[k]) continue;
        tau_s_index_[k] = next;
        for (int j = 0; j < 2; ++j)
          push("tau_s[" + test_ids[k] + "," + std::to_string(j) + "]");
      }
    }
  }

  m_a_offset_ = sigma_a_offset_ = -1;
  m_a_scale_offset_ = sigma_a_scale_offset_ = -1;
  if (spec.variant == ModelVariant::AnovaPlus) {
    m_a_offset_ = next;
    for (int j = 0; j < 2; ++j) push("m_a[" + std::to_string(j) + "]");
    sigma_a_offset_ = next;
    for (int j = 0; j < 2; ++j) push("sigma_a[" + std::to_string(j) + "]");
    if (spec.hierarchical_scale_variances && has_continuous) {
      m_a_scale_offset_ = next;
      for (int j = 0; j < 2; ++j) push("m_as[" + std::to_string(j) + "]");
      sigma_a_scale_offset_ = next;
      for (int j = 0; j < 2; ++j) push("sigma_as[" + std::to_string(j) + "]");
    }
  }

  dim = next;
}

std::shared_ptr<const Layout> detail_build_layout(const Dataset& d, const ModelSpec& spec) {
  auto layout = std::make_shared<Layout>();
  layout->spec = spec;
  layout->data_fingerprint = d.fingerprint();

  for (const auto& t : d.tests) {
    layout->test_ids.push_back(t.test_id);
    layout->test_continuous.push_back(t.is_continuous());
    layout->c_star.push_back(t.is_continuous() ? t.c_star : kNaN);
  }
  layout->thr_min.assign(d.tests.size(), kNaN);
  layout->thr_max.assign(d.tests.size(), kNaN);
  layout->study_ids = d.studies;

  std::set<std::pair<int, int>> pairs;
  for (const auto& s : d.series) {
    const int k = layout->test_index(s.test_id);
    const int i = layout->study_index(s.study_id);
    pairs.insert({i, k});
    if (layout->test_continuous[k]) {
      for (double thr : s.thresholds) {
        if (std::isnan(layout->thr_min[k]) || thr < layout->thr_min[k])
          layout->thr_min[k] = thr;
        if (std::isnan(layout->thr_max[k]) || thr > layout->thr_max[k])
          layout->thr_max[k] = thr;
      }
    }
  }
  layout->pairs.assign(pairs.begin(), pairs.end());

  for (const auto& s : d.series) {
    Layout::SeriesRef ref;
    ref.test = layout->test_index(s.test_id);
    ref.study = layout->study_index(s.study_id);
    ref.pair = layout->pair_index(ref.study, ref.test);
    ref.group = group_index(s.group);
    if (layout->test_continuous[ref.test]) {
      const double log_cstar = std::log(layout->c_star[ref.test]);
      for (double thr : s.thresholds) ref.log_ratio.push_back(log_cstar - std::log(thr));
    }
    layout->series_refs.push_back(std::move(ref));
  }

  layout->finalize();
  return layout;
}

ParameterState build_layout(const Dataset& d, const ModelSpec& spec) {
  const NetworkGraph g = build_network_graph(d);
  const ValidationReport report = validate_for_model(d, g, spec.variant);
  if (!report.ok())
    throw std::invalid_argument("model/data incompatibility:\n" + report.to_text());
  ParameterState st;
  st.layout = detail_build_layout(d, spec);
  st.values = Eigen::VectorXd::Zero(st.layout->dim);
  return st;
}

std::string Layout::to_text() const {
  std::ostringstream os;
  os.precision(17);
  auto num = [&os](double v) {
    if (std::isnan(v))
      os << "NA";
    else
      os << v;
  };
  os << "spec_begin\n" << spec.to_config_text() << "spec_end\n";
  os << "data_fingerprint " << data_fingerprint << '\n';
  os << "tests " << test_ids.size() << '\n';
  for (std::size_t k = 0; k < test_ids.size(); ++k) {
    os << test_ids[k] << ' ' << (test_continuous[k] ? 1 : 0) << ' ';
    num(c_star[k]);
    os << ' ';
    num(thr_min[k]);
    os << ' ';
    num(thr_max[k]);
    os << '\n';
  }
  os << "studies " << study_ids.size() << '\n';
  for (const auto& s : study_ids) os << s << '\n';
  os << "pairs " << pairs.size() << '\n';
  for (const auto& [i, k] : pairs) os << i << ' ' << k << '\n';
  return os.str();
}

std::shared_ptr<const Layout> Layout::from_text(const std::string& text) {
  std::istringstream is(text);
  auto layout = std::make_shared<Layout>();
  std::string tok;
  is >> tok;
  if (tok != "spec_begin") throw std::runtime_error("layout: bad header");
  std::string line;
  std::getline(is, line);
  ModelSpec spec;
  while (std::getline(is, line) && line != "spec_end") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(val);
    if (key == "variant") spec.variant = variant_from_string(val);
    else if (key == "covariance") spec.cov = covariance_from_string(val);
    else if (key == "wishart_convention") spec.wishart = wishart_from_string(val);
    else if (key == "hierarchical_scale_variances") spec.hierarchical_scale_variances = val == "true";
    else if (key == "prior_fixed_variance") spec.priors.fixed_effect_variance = std::stod(val);
    else if (key == "prior_tau_upper") spec.priors.tau_upper = std::stod(val);
    else if (key == "prior_ma_exp_upper") spec.priors.ma_exp_upper = std::stod(val);
    else if (key == "prior_sigma_a_upper") spec.priors.sigma_a_upper = std::stod(val);
  }
  layout->spec = spec;
  is >> tok >> layout->data_fingerprint;
  std::size_t n = 0;
  is >> tok >> n;
  if (tok != "tests") throw std::runtime_error("layout: expected tests");
  auto read_num = [&is]() {
    std::string t;
    is >> t;
    return t == "NA" ? kNaN : std::stod(t);
  };
  for (std::size_t k = 0; k < n; ++k) {
    std::string id;
    int cont = 0;
    is >> id >> cont;
    layout->test_ids.push_back(id);
    layout->test_continuous.push_back(cont != 0);
    layout->c_star.push_back(read_num());
    layout->thr_min.push_back(read_num());
    layout->thr_max.push_back(read_num());
  }
  is >> tok >> n;
  if (tok != "studies") throw std::runtime_error("layout: expected studies");
  for (std::size_t i = 0; i < n; ++i) {
    std::string id;
    is >> id;
    layout->study_ids.push_back(id);
  }
  is >> tok >> n;
  if (tok != "pairs") throw std::runtime_error("layout: expected pairs");
  for (std::size_t e = 0; e < n; ++e) {
    int i, k;
    is >> i >> k;
    layout->pairs.emplace_back(i, k);
  }
  layout->finalize();
  return layout;
}

// ---- ParameterState --------------------------------------------------------

Eigen::MatrixXd ParameterState::cov_chol_lower(int block) const {
  const CovBlock& b = layout->cov_blocks()[block];
  const Eigen::VectorXd theta = values.segment(b.theta_offset, b.theta_count());
  return chol_params_to_lower(theta, b.dim);
}

Eigen::MatrixXd ParameterState::cov_matrix(int block) const {
  const Eigen::MatrixXd l = cov_chol_lower(block);
  return l * l.transpose();
}

void ParameterState::set_cov_matrix(int block, const Eigen::MatrixXd& sigma) {
  const CovBlock& b = layout->cov_blocks()[block];
  if (sigma.rows() != b.dim || sigma.cols() != b.dim)
    throw std::invalid_argument("set_cov_matrix: dimension mismatch");
  values.segment(b.theta_offset, b.theta_count()) = spd_to_chol_params(sigma);
}

FixedEffects ParameterState::fixed_effects() const {
  const auto& L = *layout;
  const int K = static_cast<int>(L.test_ids.size());
  FixedEffects fe;
  fe.location.resize(K, 2);
  fe.log_scale.setConstant(K, 2, kNaN);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < 2; ++j) {
      fe.location(k, j) = m(k, j);
      if (L.idx_s(k, j) >= 0) fe.log_scale(k, j) = s(k, j);
    }
  return fe;
}

RandomEffects ParameterState::random_effects() const {
  const auto& L = *layout;
  const int P = static_cast<int>(L.pairs.size());
  const int I = static_cast<int>(L.study_ids.size());
  RandomEffects re;
  re.eps.resize(P, 2);
  re.u.setConstant(P, 2, kNaN);
  for (int e = 0; e < P; ++e)
    for (int j = 0; j < 2; ++j) {
      re.eps(e, j) = eps(e, j);
      if (L.idx_u(e, j) >= 0) re.u(e, j) = u(e, j);
    }
  if (L.has_eta()) {
    re.eta.resize(I, 2);
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < 2; ++j) re.eta(i, j) = eta(i, j);
  }
  if (L.has_gamma()) {
    re.gamma.resize(I, 2);
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < 2; ++j) re.gamma(i, j) = gamma(i, j);
  }
  return re;
}

VarianceComponents ParameterState::variance_components() const {
  const auto& L = *layout;
  VarianceComponents vc;
  for (std::size_t b = 0; b < L.cov_blocks().size(); ++b)
    vc.sigma.emplace_back(L.cov_blocks()[b].name, cov_matrix(static_cast<int>(b)));
  const int K = static_cast<int>(L.test_ids.size());
  if (L.has_tau()) {
    vc.tau_m.resize(K, 2);
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < 2; ++j) vc.tau_m(k, j) = tau_m(k, j);
  }
  bool any_tau_s = false;
  for (int k = 0; k < K; ++k) any_tau_s = any_tau_s || L.idx_tau_s(k, 0) >= 0;
  if (any_tau_s) {
    vc.tau_s.setConstant(K, 2, kNaN);
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < 2; ++j)
        if (L.idx_tau_s(k, j) >= 0) vc.tau_s(k, j) = tau_s(k, j);
  }
  for (int j = 0; j < 2; ++j) {
    if (L.idx_m_a(j) >= 0) vc.m_a[j] = values[L.idx_m_a(j)];
    if (L.idx_sigma_a(j) >= 0) vc.sigma_a[j] = values[L.idx_sigma_a(j)];
  }
  return vc;
}

AccuracyParams ParameterState::accuracy_params(const Layout::SeriesRef& ref) const {
  const auto& L = *layout;
  AccuracyParams a;
  a.is_continuous = L.test_continuous[ref.test];
  a.c_star = L.c_star[ref.test];
  double mu = m(ref.test, ref.group) + eps(ref.pair, ref.group);
  if (L.has_eta()) mu += eta(ref.study, ref.group);
  a.location = mu;
  if (a.is_continuous) {
    double ls = s(ref.test, ref.group) + u(ref.pair, ref.group);
    if (L.has_gamma()) ls += gamma(ref.study, ref.group);
    a.log_scale = ls;
  }
  return a;
}

// ---- densities -------------------------------------------------------------

namespace {

// Collects the effect vector governed by `block` for one pair/study; returns
// false when the unit does not contribute (e.g. binary pair for a scale
// block).
bool effect_vector(const ParameterState& st, const CovBlock& block, int unit,
                   Eigen::VectorXd& v, bool& marginal) {
  const auto& L = *st.layout;
  marginal = false;
  switch (block.governs) {
    case EffectVectors::PairFull: {
      const auto [i, k] = L.pairs[unit];
      (void)i;
      if (block.only_test >= 0 && k != block.only_test) return false;
      if (L.test_continuous[k]) {
        v.resize(4);
        v << st.eps(unit, 0), st.eps(unit, 1), st.u(unit, 0), st.u(unit, 1);
      } else {
        if (!block.binary_marginal) return false;
        marginal = true;
        v.resize(2);
        v << st.eps(unit, 0), st.eps(unit, 1);
      }
      return true;
    }
    case EffectVectors::PairLoc: {
      const int k = L.pairs[unit].second;
      if (block.only_test >= 0 && k != block.only_test) return false;
      v.resize(2);
      v << st.eps(unit, 0), st.eps(unit, 1);
      return true;
    }
    case EffectVectors::PairScale: {
      const int k = L.pairs[unit].second;
      if (block.only_test >= 0 && k != block.only_test) return false;
      if (!L.test_continuous[k]) return false;
      v.resize(2);
      v << st.u(unit, 0), st.u(unit, 1);
      return true;
    }
    case EffectVectors::StudyFull:
      v.resize(4);
      v << st.eta(unit, 0), st.eta(unit, 1), st.gamma(unit, 0), st.gamma(unit, 1);
      return true;
    case EffectVectors::StudyLoc:
      v.resize(2);
      v << st.eta(unit, 0), st.eta(unit, 1);
      return true;
    case EffectVectors::StudyScale:
      v.resize(2);
      v << st.gamma(unit, 0), st.gamma(unit, 1);
      return true;
  }
  return false;
}

bool block_is_study_level(const CovBlock& b) {
  return b.governs == EffectVectors::StudyFull || b.governs == EffectVectors::StudyLoc ||
         b.governs == EffectVectors::StudyScale;
}

}  // namespace

double random_effects_logdensity(const ParameterState& st, const ModelSpec& spec) {
  const auto& L = *st.layout;
  if (spec.variant != L.spec.variant || spec.cov != L.spec.cov)
    throw std::invalid_argument("random_effects_logdensity: spec does not match layout");

  double total = 0.0;
  Eigen::VectorXd v;
  for (std::size_t bi = 0; bi < L.cov_blocks().size(); ++bi) {
    const CovBlock& b = L.cov_blocks()[bi];
    const Eigen::MatrixXd chol = st.cov_chol_lower(static_cast<int>(bi));
    if (!chol.allFinite() || chol.diagonal().minCoeff() <= 0.0)
      throw std::domain_error("random_effects_logdensity: covariance block " + b.name +
                              " is not positive definite");
    Eigen::MatrixXd marginal_chol;
    if (b.binary_marginal) {
      const Eigen::MatrixXd sigma = chol * chol.transpose();
      Eigen::LLT<Eigen::MatrixXd> llt(sigma.topLeftCorner(2, 2));
      if (llt.info() != Eigen::Success)
        throw std::domain_error("random_effects_logdensity: marginal block not positive definite");
      marginal_chol = llt.matrixL();
    }
    const int units = block_is_study_level(b) ? static_cast<int>(L.study_ids.size())
                                              : static_cast<int>(L.pairs.size());
    for (int unit = 0; unit < units; ++unit) {
      bool marginal = false;
      if (!effect_vector(st, b, unit, v, marginal)) continue;
      total += mvn_logpdf_chol(v, marginal ? marginal_chol : chol);
    }
  }

  // Independent normal interactions under the ANOVA family; independent u
  // variances under the reduced structure of models 1-2.
  if (L.has_tau()) {
    for (std::size_t e = 0; e < L.pairs.size(); ++e) {
      const int k = L.pairs[e].second;
      for (int j = 0; j < 2; ++j) {
        const double t = st.tau_m(k, j);
        if (!(t > 0.0)) return -kInf;
        total += normal_logpdf(st.eps(static_cast<int>(e), j), 0.0, t * t);
      }
    }
  }
  for (std::size_t e = 0; e < L.pairs.size(); ++e) {
    const int k = L.pairs[e].second;
    if (L.idx_u(static_cast<int>(e), 0) < 0) continue;
    if (L.idx_tau_s(k, 0) < 0) continue;
    for (int j = 0; j < 2; ++j) {
      const double t = st.tau_s(k, j);
      if (!(t > 0.0)) return -kInf;
      total += normal_logpdf(st.u(static_cast<int>(e), j), 0.0, t * t);
    }
  }
  return total;
}

double log_prior(const ParameterState& st, const ModelSpec& spec) {
  const auto& L = *st.layout;
  if (spec.variant != L.spec.variant || spec.cov != L.spec.cov)
    throw std::invalid_argument("log_prior: spec does not match layout");
  const PriorConfig& pr = spec.priors;
  const int K = static_cast<int>(L.test_ids.size());

  double total = 0.0;
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < 2; ++j) {
      total += normal_logpdf(st.m(k, j), 0.0, pr.fixed_effect_variance);
      if (L.idx_s(k, j) >= 0)
        total += normal_logpdf(st.s(k, j), 0.0, pr.fixed_effect_variance);
    }

  for (std::size_t bi = 0; bi < L.cov_blocks().size(); ++bi) {
    const CovBlock& b = L.cov_blocks()[bi];
    const Eigen::MatrixXd sigma = st.cov_matrix(static_cast<int>(bi));
    if (!sigma.allFinite()) return -kInf;
    Eigen::MatrixXd x;
    if (spec.wishart == WishartConvention::Precision) {
      const Eigen::MatrixXd chol = st.cov_chol_lower(static_cast<int>(bi));
      const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(b.dim, b.dim);
      const Eigen::MatrixXd linv =
          chol.triangularView<Eigen::Lower>().solve(identity);
      x = linv.transpose() * linv;  // Sigma^{-1}
    } else {
      x = sigma;
    }
    total += wishart_logpdf_identity_scale(x, static_cast<double>(b.dim));
  }

  // tau_s: uniform unless the experimental hierarchical flag moves it under
  // the AnovaPlus hierarchy.
  const bool tau_s_hierarchical = spec.variant == ModelVariant::AnovaPlus &&
                                  spec.hierarchical_scale_variances &&
                                  L.idx_m_a_scale(0) >= 0;
  std::set<int> seen;  // shared tau_s indices must be counted once
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < 2; ++j) {
      const int idx = L.idx_tau_s(k, j);
      if (idx < 0 || seen.count(idx)) continue;
      seen.insert(idx);
      const double t = st.values[idx];
      if (tau_s_hierarchical) {
        const double ma = st.values[L.idx_m_a_scale(j)];
        const double sa = st.values[L.idx_sigma_a_scale(j)];
        if (!(t > 0.0) || !(sa > 0.0)) return -kInf;
        total += normal_logpdf(std::log(t), ma, sa * sa) - std::log(t);
      } else {
        if (!(t > 0.0 && t < pr.tau_upper)) return -kInf;
        total += -std::log(pr.tau_upper);
      }
    }
  }

  if (L.has_tau()) {
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < 2; ++j) {
        const double t = st.tau_m(k, j);
        if (spec.variant == ModelVariant::Anova) {
          if (!(t > 0.0 && t < pr.tau_upper)) return -kInf;
          total += -std::log(pr.tau_upper);
        } else {  // AnovaPlus: log tau_m ~ N(m_a, sigma_a^2)
          const double ma = st.values[L.idx_m_a(j)];
          const double sa = st.values[L.idx_sigma_a(j)];
          if (!(t > 0.0) || !(sa > 0.0)) return -kInf;
          total += normal_logpdf(std::log(t), ma, sa * sa) - std::log(t);
        }
      }
  }

  if (spec.variant == ModelVariant::AnovaPlus) {
    for (int j = 0; j < 2; ++j) {
      const double ma = st.values[L.idx_m_a(j)];
      const double sa = st.values[L.idx_sigma_a(j)];
      // exp(m_a) ~ U(0, upper): density upper^{-1} exp(m_a) on m_a < log upper.
      if (!(ma < std::log(pr.ma_exp_upper))) return -kInf;
      total += ma - std::log(pr.ma_exp_upper);
      if (!(sa > 0.0 && sa < pr.sigma_a_upper)) return -kInf;
      total += -std::log(pr.sigma_a_upper);
      if (L.idx_m_a_scale(j) >= 0) {
        const double mas = st.values[L.idx_m_a_scale(j)];
        const double sas = st.values[L.idx_sigma_a_scale(j)];
        if (!(mas < std::log(pr.ma_exp_upper))) return -kInf;
        total += mas - std::log(pr.ma_exp_upper);
        if (!(sas > 0.0 && sas < pr.sigma_a_upper)) return -kInf;
        total += -std::log(pr.sigma_a_upper);
      }
    }
  }
  return total;
}

double series_loglik(const Dataset& d, const ParameterState& st, int series_idx) {
  const ThresholdSeries& s = d.series[series_idx];
  const Layout::SeriesRef& ref = st.layout->series_refs[series_idx];
  const AccuracyParams a = st.accuracy_params(ref);

  std::vector<double> probs(s.thresholds.size());
  if (a.is_continuous) {
    const double inv_sigma = std::exp(-a.log_scale);
    for (std::size_t t = 0; t < probs.size(); ++t)
      probs[t] = inv_logit(a.location + ref.log_ratio[t] * inv_sigma);
  } else {
    probs.assign(probs.size(), inv_logit(a.location));
  }
  return chain_loglik(s, probs);
}

double log_posterior(const Dataset& d, const ParameterState& st, const ModelSpec& spec) {
  const auto& L = *st.layout;
  if (L.series_refs.size() != d.series.size() || L.data_fingerprint != d.fingerprint())
    throw std::invalid_argument("log_posterior: layout was built for a different dataset");

  const double prior = log_prior(st, spec);
  if (prior == -kInf) return -kInf;
  const double density = random_effects_logdensity(st, spec);
  if (density == -kInf) return -kInf;
  double ll = 0.0;
  for (std::size_t i = 0; i < d.series.size(); ++i)
    ll += series_loglik(d, st, static_cast<int>(i));
  return ll + density + prior;
}

// ---- simulation ------------------------------------------------------------

Dataset simulate_dataset(const ModelSpec& spec, const ParameterState& true_state,
                         const std::vector<DesignCell>& design, std::uint64_t seed) {
  const auto& L = *true_state.layout;
  (void)spec;
  Rng rng(seed);

  Dataset d;
  std::set<std::string> studies;
  std::set<std::string> used_tests;

  for (const auto& cell : design) {
    const int k = L.test_index(cell.test_id);
    if (k < 0) throw std::invalid_argument("simulate_dataset: unknown test " + cell.test_id);
    const int i = L.study_index(cell.study_id);
    if (i < 0) throw std::invalid_argument("simulate_dataset: unknown study " + cell.study_id);
    const int e = L.pair_index(i, k);
    if (e < 0)
      throw std::invalid_argument("simulate_dataset: study/test pair absent from layout");
    if (cell.group_size <= 0)
      throw std::invalid_argument("simulate_dataset: group_size must be > 0");

    Layout::SeriesRef ref;
    ref.test = k;
    ref.study = i;
    ref.pair = e;
    ref.group = group_index(cell.group);
    const AccuracyParams a = true_state.accuracy_params(ref);

    ThresholdSeries s;
    s.study_id = cell.study_id;
    s.test_id = cell.test_id;
    s.group = cell.group;
    s.group_size = cell.group_size;

    std::vector<double> probs;
    if (L.test_continuous[k]) {
      if (cell.thresholds.empty())
        throw std::invalid_argument("simulate_dataset: continuous test needs thresholds");
      for (std::size_t t = 1; t < cell.thresholds.size(); ++t)
        if (!(cell.thresholds[t] > cell.thresholds[t - 1]))
          throw std::invalid_argument("simulate_dataset: thresholds must be strictly ascending");
      s.thresholds = cell.thresholds;
      for (double thr : cell.thresholds) probs.push_back(positive_prob(a, thr));
    } else {
      s.thresholds = {ThresholdSeries::sentinel()};
      probs.push_back(positive_prob(a, std::nullopt));
    }

    // Sequential scheme: x_1 ~ Bin(p_1, N); x_t ~ Bin(p_t / p_{t-1}, x_{t-1}).
    long prev = rng.binomial(cell.group_size, probs[0]);
    s.positives.push_back(prev);
    for (std::size_t t = 1; t < probs.size(); ++t) {
      const double q = std::min(1.0, probs[t] / probs[t - 1]);
      prev = rng.binomial(prev, q);
      s.positives.push_back(prev);
    }

    studies.insert(cell.study_id);
    used_tests.insert(cell.test_id);
    d.series.push_back(std::move(s));
  }

  for (const auto& id : used_tests) {
    const int k = L.test_index(id);
    TestDescriptor t;
    t.test_id = id;
    t.name = id;
    t.kind = L.test_continuous[k] ? TestKind::Continuous : TestKind::Binary;
    t.c_star = L.c_star[k];
    d.tests.push_back(std::move(t));
  }
  std::sort(d.series.begin(), d.series.end(), [](const auto& a, const auto& b) {
    return std::tie(a.study_id, a.test_id, a.group) <
           std::tie(b.study_id, b.test_id, b.group);
  });
  d.studies.assign(studies.begin(), studies.end());

  std::set<std::pair<std::string, std::string>> have[2];
  for (const auto& s : d.series) have[group_index(s.group)].insert({s.study_id, s.test_id});
  for (int j = 0; j < 2; ++j)
    for (const auto& st : have[j])
      if (!have[1 - j].count(st))
        throw std::invalid_argument("simulate_dataset: design misses one disease group for study=" +
                                    st.first + " test=" + st.second);
  return d;
}

Dataset design_skeleton(const std::vector<TestDescriptor>& tests,
                        const std::vector<DesignCell>& design) {
  Dataset d;
  d.tests = tests;
  std::sort(d.tests.begin(), d.tests.end(),
            [](const auto& a, const auto& b) { return a.test_id < b.test_id; });
  std::set<std::string> studies;
  for (const auto& cell : design) {
    ThresholdSeries s;
    s.study_id = cell.study_id;
    s.test_id = cell.test_id;
    s.group = cell.group;
    s.group_size = cell.group_size;
    const auto* t = d.find_test(cell.test_id);
    if (!t) throw std::invalid_argument("design_skeleton: unknown test " + cell.test_id);
    if (t->is_continuous()) {
      s.thresholds = cell.thresholds;
    } else {
      s.thresholds = {ThresholdSeries::sentinel()};
    }
    s.positives.assign(s.thresholds.size(), 0);
    studies.insert(s.study_id);
    d.series.push_back(std::move(s));
  }
  std::sort(d.series.begin(), d.series.end(), [](const auto& a, const auto& b) {
    return std::tie(a.study_id, a.test_id, a.group) <
           std::tie(b.study_id, b.test_id, b.group);
  });
  d.studies.assign(studies.begin(), studies.end());
  return d;
}

}  // namespace dtanma
