#include "dtanma/inference.hpp"
#include "dtanma/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace dtanma {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---- SamplerConfig ----------------------------------------------------------

std::string SamplerConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "chains = " << chains << '\n'
     << "warmup = " << warmup_iters << '\n'
     << "keep = " << keep_iters << '\n'
     << "thin = " << thin << '\n'
     << "seed = " << seed << '\n'
     << "target_accept = " << target_accept << '\n'
     << "target_accept_block = " << target_accept_block << '\n'
     << "adapt_window = " << adapt_window << '\n'
     << "likelihood_off = " << (likelihood_off ? "true" : "false") << '\n';
  os << "freeze =";
  for (std::size_t i = 0; i < freeze.size(); ++i) os << (i ? "," : " ") << freeze[i];
  os << '\n';
  return os.str();
}

SamplerConfig SamplerConfig::from_text(const std::string& text) {
  SamplerConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "chains") cfg.chains = std::stoi(val);
    else if (key == "warmup") cfg.warmup_iters = std::stoi(val);
    else if (key == "keep") cfg.keep_iters = std::stoi(val);
    else if (key == "thin") cfg.thin = std::stoi(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "target_accept") cfg.target_accept = std::stod(val);
    else if (key == "target_accept_block") cfg.target_accept_block = std::stod(val);
    else if (key == "adapt_window") cfg.adapt_window = std::stoi(val);
    else if (key == "likelihood_off") cfg.likelihood_off = val == "true";
    else if (key == "freeze" && !val.empty()) {
      std::stringstream ss(val);
      std::string item;
      while (std::getline(ss, item, ',')) cfg.freeze.push_back(trim(item));
    }
  }
  return cfg;
}

std::vector<double> PosteriorSamples::pooled(int param) const {
  std::vector<double> out;
  out.reserve(total_kept());
  for (int c = 0; c < n_chains; ++c)
    for (int i = 0; i < n_kept; ++i) out.push_back(draw(c, i, param));
  return out;
}

std::vector<double> PosteriorSamples::pooled_deviance() const {
  std::vector<double> out;
  out.reserve(total_kept());
  for (int c = 0; c < n_chains; ++c)
    out.insert(out.end(), deviance[c].begin(), deviance[c].end());
  return out;
}

// ---- initial state ----------------------------------------------------------

ParameterState initial_state(const Dataset& d, const ModelSpec& spec) {
  ParameterState st = build_layout(d, spec);
  const auto& L = *st.layout;
  const int K = static_cast<int>(L.test_ids.size());

  // Pooled empirical logits at the threshold closest to c_star.
  std::vector<std::array<double, 2>> pos(K, {0.0, 0.0}), tot(K, {0.0, 0.0});
  for (std::size_t si = 0; si < d.series.size(); ++si) {
    const auto& s = d.series[si];
    const auto& ref = L.series_refs[si];
    std::size_t best = 0;
    if (L.test_continuous[ref.test]) {
      double best_dist = kInf;
      for (std::size_t t = 0; t < ref.log_ratio.size(); ++t) {
        const double dist = std::fabs(ref.log_ratio[t]);
        if (dist < best_dist) {
          best_dist = dist;
          best = t;
        }
      }
    }
    pos[ref.test][ref.group] += static_cast<double>(s.positives[best]);
    tot[ref.test][ref.group] += static_cast<double>(s.group_size);
  }
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < 2; ++j) {
      const double p = (pos[k][j] + 0.5) / (tot[k][j] + 1.0);
      st.values[L.idx_m(k, j)] = std::clamp(logit(p), -4.0, 4.0);
    }

  for (int k = 0; k < K; ++k)
    for (int j = 0; j < 2; ++j) {
      if (L.idx_tau_m(k, j) >= 0) st.values[L.idx_tau_m(k, j)] = 0.5;
      if (L.idx_tau_s(k, j) >= 0) st.values[L.idx_tau_s(k, j)] = 0.5;
    }
  for (int j = 0; j < 2; ++j) {
    if (L.idx_m_a(j) >= 0) st.values[L.idx_m_a(j)] = std::log(0.5);
    if (L.idx_sigma_a(j) >= 0) st.values[L.idx_sigma_a(j)] = 0.5;
    if (L.idx_m_a_scale(j) >= 0) st.values[L.idx_m_a_scale(j)] = std::log(0.5);
    if (L.idx_sigma_a_scale(j) >= 0) st.values[L.idx_sigma_a_scale(j)] = 0.5;
  }
  // Covariance blocks: theta = 0 is the identity matrix already.
  return st;
}

// ---- saturated model / deviance ---------------------------------------------

double saturated_loglik(const Dataset& d) {
  double total = 0.0;
  for (const auto& s : d.series) {
    const double n = static_cast<double>(s.group_size);
    const double x1 = static_cast<double>(s.positives[0]);
    total += log_choose(n, x1);
    if (x1 > 0.0) total += x1 * std::log(x1 / n);
    if (n - x1 > 0.0) total += (n - x1) * std::log((n - x1) / n);
    for (std::size_t t = 1; t < s.positives.size(); ++t) {
      const double xp = static_cast<double>(s.positives[t - 1]);
      const double xt = static_cast<double>(s.positives[t]);
      if (xp == 0.0) continue;
      const double r = xt / xp;
      total += log_choose(xp, xt);
      if (xt > 0.0) total += xt * std::log(r);
      if (xp - xt > 0.0) total += (xp - xt) * std::log1p(-r);
    }
  }
  return total;
}

double residual_deviance(const Dataset& d, const ParameterState& st, const ModelSpec& spec) {
  (void)spec;
  double ll = 0.0;
  for (std::size_t i = 0; i < d.series.size(); ++i)
    ll += series_loglik(d, st, static_cast<int>(i));
  return -2.0 * (ll - saturated_loglik(d));
}

// ---- sampler ----------------------------------------------------------------

namespace {

enum class SiteRole {
  FixedLoc,
  FixedScale,
  Eps,
  U,
  Eta,
  Gamma,
  TauM,
  TauS,
  MuA,
  SigmaA,
  MuAScale,
  SigmaAScale,
};

const char* family_name(SiteRole role) {
  switch (role) {
    case SiteRole::FixedLoc: return "m";
    case SiteRole::FixedScale: return "s";
    case SiteRole::Eps: return "eps";
    case SiteRole::U: return "u";
    case SiteRole::Eta: return "eta";
    case SiteRole::Gamma: return "gamma";
    case SiteRole::TauM: return "tau_m";
    case SiteRole::TauS: return "tau_s";
    case SiteRole::MuA: return "m_a";
    case SiteRole::SigmaA: return "sigma_a";
    case SiteRole::MuAScale: return "m_a";
    case SiteRole::SigmaAScale: return "sigma_a";
  }
  return "?";
}

struct Site {
  int index = -1;
  SiteRole role = SiteRole::FixedLoc;
  bool multiplicative = false;
  int test = -1, pair = -1, study = -1, group = -1;
  std::vector<int> series;  // affected series indexes
  int cov_block = -1;       // MVN block containing this effect, if any
  bool frozen = false;
};

struct BlockCache {
  Eigen::MatrixXd chol;
  Eigen::MatrixXd marginal_chol;  // 2x2 location marginal for binary pairs
};

class ChainRunner {
 public:
  ChainRunner(const Dataset& d, const ModelSpec& spec, const SamplerConfig& cfg,
              std::shared_ptr<const Layout> layout)
      : d_(d), spec_(spec), cfg_(cfg), layout_(std::move(layout)), rng_(0) {
    st_.layout = layout_;
    st_.values = Eigen::VectorXd::Zero(layout_->dim);
    build_sites();
    sat_ll_ = saturated_loglik(d_);
  }

  void start(int chain_index) {
    rng_ = Rng::for_chain(cfg_.seed, static_cast<std::uint64_t>(chain_index));
    ParameterState init = initial_state(d_, spec_);
    x_ = init.values;
    scalar_log_scales_.assign(sites_.size(), 0.0);
    for (std::size_t i = 0; i < sites_.size(); ++i)
      scalar_log_scales_[i] = std::log(sites_[i].multiplicative ? 0.25 : 0.5);
    block_log_scales_.assign(layout_->cov_blocks().size(), std::log(0.05));
    scalar_batch_.assign(sites_.size(), 0);
    scalar_acc_.assign(sites_.size(), 0);
    scalar_att_.assign(sites_.size(), 0);
    block_batch_.assign(layout_->cov_blocks().size(), 0);
    block_acc_.assign(layout_->cov_blocks().size(), 0);
    block_att_.assign(layout_->cov_blocks().size(), 0);
    iterations_done_ = 0;
    refresh_all_caches();
    ensure_finite_start(chain_index);
  }

  void restore(const ChainCheckpoint& cp) {
    if (cp.state.size() != layout_->dim ||
        cp.scalar_log_scales.size() != sites_.size() ||
        cp.block_log_scales.size() != layout_->cov_blocks().size())
      throw SamplingError("checkpoint does not match the model layout");
    x_ = cp.state;
    rng_.set_state(cp.rng);
    scalar_log_scales_ = cp.scalar_log_scales;
    block_log_scales_ = cp.block_log_scales;
    scalar_batch_.assign(sites_.size(), 0);
    scalar_acc_.assign(sites_.size(), 0);
    scalar_att_.assign(sites_.size(), 0);
    block_batch_.assign(layout_->cov_blocks().size(), 0);
    block_acc_.assign(layout_->cov_blocks().size(), 0);
    block_att_.assign(layout_->cov_blocks().size(), 0);
    iterations_done_ = cp.iterations_done;
    refresh_all_caches();
  }

  void run(long warmup, long record, int thin, std::vector<double>& draws_out,
           std::vector<double>& deviance_out, const ProgressFn& progress, int chain_index) {
    const long total = warmup + record * thin;
    for (long iter = 0; iter < total; ++iter) {
      const bool adapting = iter < warmup;
      sweep(adapting);
      ++iterations_done_;
      if (iter >= warmup && (iter - warmup + 1) % thin == 0) {
        draws_out.insert(draws_out.end(), x_.data(), x_.data() + x_.size());
        deviance_out.push_back(current_deviance());
      }
      if (progress && ((iter + 1) % std::max<long>(1, total / 20) == 0 || iter + 1 == total))
        progress(chain_index, iter + 1, total);
    }
  }

  ChainCheckpoint checkpoint() const {
    ChainCheckpoint cp;
    cp.state = x_;
    cp.rng = rng_.state();
    cp.scalar_log_scales = scalar_log_scales_;
    cp.block_log_scales = block_log_scales_;
    cp.iterations_done = iterations_done_;
    return cp;
  }

  const std::map<std::string, std::pair<long, long>>& accept_tallies() const {
    return accept_tally_;
  }

 private:
  // ---- construction ---------------------------------------------------------

  void build_sites() {
    const auto& L = *layout_;
    const int K = static_cast<int>(L.test_ids.size());
    const int I = static_cast<int>(L.study_ids.size());
    const int P = static_cast<int>(L.pairs.size());

    // series lookup tables
    series_by_test_group_.assign(K, {});
    series_by_study_group_.assign(I, {});
    series_by_pair_group_.assign(P, {{-1, -1}});
    for (int k = 0; k < K; ++k) series_by_test_group_[k] = {{{}, {}}};
    for (int i = 0; i < I; ++i) series_by_study_group_[i] = {{{}, {}}};
    for (int e = 0; e < P; ++e) series_by_pair_group_[e] = {{-1, -1}};
    for (std::size_t si = 0; si < L.series_refs.size(); ++si) {
      const auto& ref = L.series_refs[si];
      series_by_test_group_[ref.test][ref.group].push_back(static_cast<int>(si));
      series_by_study_group_[ref.study][ref.group].push_back(static_cast<int>(si));
      series_by_pair_group_[ref.pair][ref.group] = static_cast<int>(si);
    }

    // MVN block membership per effect family
    int eps_block = -1, u_block = -1, eta_block = -1, gamma_block = -1;
    std::vector<int> eps_block_by_test(K, -1), u_block_by_test(K, -1);
    for (std::size_t b = 0; b < L.cov_blocks().size(); ++b) {
      const CovBlock& cb = L.cov_blocks()[b];
      const int bi = static_cast<int>(b);
      switch (cb.governs) {
        case EffectVectors::PairFull:
          if (cb.only_test >= 0) {
            eps_block_by_test[cb.only_test] = bi;
            u_block_by_test[cb.only_test] = bi;
          } else {
            eps_block = bi;
            u_block = bi;
          }
          break;
        case EffectVectors::PairLoc:
          if (cb.only_test >= 0)
            eps_block_by_test[cb.only_test] = bi;
          else
            eps_block = bi;
          break;
        case EffectVectors::PairScale:
          if (cb.only_test >= 0)
            u_block_by_test[cb.only_test] = bi;
          else
            u_block = bi;
          break;
        case EffectVectors::StudyFull:
          eta_block = bi;
          gamma_block = bi;
          break;
        case EffectVectors::StudyLoc: eta_block = bi; break;
        case EffectVectors::StudyScale: gamma_block = bi; break;
      }
    }

    auto add = [&](Site s) {
      s.frozen = is_frozen(L.names[s.index]);
      sites_.push_back(std::move(s));
    };

    for (int k = 0; k < K; ++k)
      for (int j = 0; j < 2; ++j) {
        Site s;
        s.index = L.idx_m(k, j);
        s.role = SiteRole::FixedLoc;
        s.test = k;
        s.group = j;
        s.series = series_by_test_group_[k][j];
        add(s);
      }
    for (int k = 0; k < K; ++k) {
      if (L.idx_s(k, 0) < 0) continue;
      for (int j = 0; j < 2; ++j) {
        Site s;
        s.index = L.idx_s(k, j);
        s.role = SiteRole::FixedScale;
        s.test = k;
        s.group = j;
        s.series = series_by_test_group_[k][j];
        add(s);
      }
    }
    for (int e = 0; e < P; ++e) {
      const int k = L.pairs[e].second;
      for (int j = 0; j < 2; ++j) {
        Site s;
        s.index = L.idx_eps(e, j);
        s.role = SiteRole::Eps;
        s.test = k;
        s.pair = e;
        s.group = j;
        if (series_by_pair_group_[e][j] >= 0) s.series = {series_by_pair_group_[e][j]};
        s.cov_block = eps_block_by_test[k] >= 0 ? eps_block_by_test[k] : eps_block;
        add(s);
      }
    }
    for (int e = 0; e < P; ++e) {
      if (L.idx_u(e, 0) < 0) continue;
      const int k = L.pairs[e].second;
      for (int j = 0; j < 2; ++j) {
        Site s;
        s.index = L.idx_u(e, j);
        s.role = SiteRole::U;
        s.test = k;
        s.pair = e;
        s.group = j;
        if (series_by_pair_group_[e][j] >= 0) s.series = {series_by_pair_group_[e][j]};
        s.cov_block = u_block_by_test[k] >= 0 ? u_block_by_test[k] : u_block;
        add(s);
      }
    }
    if (L.has_eta()) {
      for (int i = 0; i < I; ++i)
        for (int j = 0; j < 2; ++j) {
          Site s;
          s.index = L.idx_eta(i, j);
          s.role = SiteRole::Eta;
          s.study = i;
          s.group = j;
          s.series = series_by_study_group_[i][j];
          s.cov_block = eta_block;
          add(s);
        }
    }
    if (L.has_gamma()) {
      for (int i = 0; i < I; ++i)
        for (int j = 0; j < 2; ++j) {
          Site s;
          s.index = L.idx_gamma(i, j);
          s.role = SiteRole::Gamma;
          s.study = i;
          s.group = j;
          for (int si : series_by_study_group_[i][j])
            if (L.test_continuous[L.series_refs[si].test]) s.series.push_back(si);
          s.cov_block = gamma_block;
          add(s);
        }
    }
    if (L.has_tau()) {
      for (int k = 0; k < K; ++k)
        for (int j = 0; j < 2; ++j) {
          Site s;
          s.index = L.idx_tau_m(k, j);
          s.role = SiteRole::TauM;
          s.multiplicative = true;
          s.test = k;
          s.group = j;
          add(s);
        }
    }
    std::set<int> tau_s_seen;
    for (int k = 0; k < K; ++k) {
      const int idx = L.idx_tau_s(k, 0);
      if (idx < 0 || tau_s_seen.count(idx)) continue;
      tau_s_seen.insert(idx);
      for (int j = 0; j < 2; ++j) {
        Site s;
        s.index = idx + j;
        s.role = SiteRole::TauS;
        s.multiplicative = true;
        s.test = k;  // representative; shared sites gather pairs below
        s.group = j;
        add(s);
      }
    }
    for (int j = 0; j < 2; ++j) {
      if (L.idx_m_a(j) < 0) continue;
      Site ma;
      ma.index = L.idx_m_a(j);
      ma.role = SiteRole::MuA;
      ma.group = j;
      add(ma);
    }
    for (int j = 0; j < 2; ++j) {
      if (L.idx_sigma_a(j) < 0) continue;
      Site sa;
      sa.index = L.idx_sigma_a(j);
      sa.role = SiteRole::SigmaA;
      sa.multiplicative = true;
      sa.group = j;
      add(sa);
    }
    for (int j = 0; j < 2; ++j) {
      if (L.idx_m_a_scale(j) < 0) continue;
      Site s;
      s.index = L.idx_m_a_scale(j);
      s.role = SiteRole::MuAScale;
      s.group = j;
      add(s);
    }
    for (int j = 0; j < 2; ++j) {
      if (L.idx_sigma_a_scale(j) < 0) continue;
      Site s;
      s.index = L.idx_sigma_a_scale(j);
      s.role = SiteRole::SigmaAScale;
      s.multiplicative = true;
      s.group = j;
      add(s);
    }

    std::sort(sites_.begin(), sites_.end(),
              [](const Site& a, const Site& b) { return a.index < b.index; });

    block_frozen_.clear();
    for (const auto& cb : layout_->cov_blocks()) block_frozen_.push_back(is_frozen(cb.name));
    block_conjugate_.clear();
    for (const auto& cb : layout_->cov_blocks())
      block_conjugate_.push_back(spec_.wishart == WishartConvention::Precision &&
                                 !cb.binary_marginal);
  }

  bool is_frozen(const std::string& name) const {
    for (const auto& prefix : cfg_.freeze)
      if (!prefix.empty() && name.rfind(prefix, 0) == 0) return true;
    return false;
  }

  // ---- caches ----------------------------------------------------------------

  const ParameterState& as_state() const { return st_; }

  void refresh_block_cache(int b) {
    const CovBlock& cb = layout_->cov_blocks()[b];
    const Eigen::VectorXd theta = x_.segment(cb.theta_offset, cb.theta_count());
    block_cache_[b].chol = chol_params_to_lower(theta, cb.dim);
    if (cb.binary_marginal) {
      const Eigen::MatrixXd sigma = block_cache_[b].chol * block_cache_[b].chol.transpose();
      Eigen::LLT<Eigen::MatrixXd> llt(sigma.topLeftCorner(2, 2));
      block_cache_[b].marginal_chol = llt.matrixL();
    }
  }

  void refresh_all_caches() {
    block_cache_.assign(layout_->cov_blocks().size(), {});
    for (std::size_t b = 0; b < layout_->cov_blocks().size(); ++b)
      refresh_block_cache(static_cast<int>(b));
    series_ll_.assign(d_.series.size(), 0.0);
    if (!cfg_.likelihood_off) {
      const ParameterState& st = as_state();
      for (std::size_t i = 0; i < d_.series.size(); ++i)
        series_ll_[i] = series_loglik(d_, st, static_cast<int>(i));
    }
  }

  double sum_series_ll() const {
    double s = 0.0;
    for (double v : series_ll_) s += v;
    return s;
  }

  double current_deviance() const {
    if (cfg_.likelihood_off) return 0.0;
    return -2.0 * (sum_series_ll() - sat_ll_);
  }

  // Density of the MVN effect vector of `unit` under block `b`.
  double unit_block_logpdf(int b, int unit) const {
    const CovBlock& cb = layout_->cov_blocks()[b];
    const ParameterState& st = as_state();
    Eigen::VectorXd v;
    bool marginal = false;
    if (!collect_effect_vector(st, cb, unit, v, marginal)) return 0.0;
    return mvn_logpdf_chol(v, marginal ? block_cache_[b].marginal_chol
                                       : block_cache_[b].chol);
  }

  bool collect_effect_vector(const ParameterState& st, const CovBlock& cb, int unit,
                             Eigen::VectorXd& v, bool& marginal) const {
    const auto& L = *layout_;
    marginal = false;
    switch (cb.governs) {
      case EffectVectors::PairFull: {
        const int k = L.pairs[unit].second;
        if (cb.only_test >= 0 && k != cb.only_test) return false;
        if (L.test_continuous[k]) {
          v.resize(4);
          v << st.eps(unit, 0), st.eps(unit, 1), st.u(unit, 0), st.u(unit, 1);
        } else {
          if (!cb.binary_marginal) return false;
          marginal = true;
          v.resize(2);
          v << st.eps(unit, 0), st.eps(unit, 1);
        }
        return true;
      }
      case EffectVectors::PairLoc: {
        const int k = L.pairs[unit].second;
        if (cb.only_test >= 0 && k != cb.only_test) return false;
        v.resize(2);
        v << st.eps(unit, 0), st.eps(unit, 1);
        return true;
      }
      case EffectVectors::PairScale: {
        const int k = L.pairs[unit].second;
        if (cb.only_test >= 0 && k != cb.only_test) return false;
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

  int block_unit_of(const Site& s) const {
    const CovBlock& cb = layout_->cov_blocks()[s.cov_block];
    switch (cb.governs) {
      case EffectVectors::PairFull:
      case EffectVectors::PairLoc:
      case EffectVectors::PairScale: return s.pair;
      default: return s.study;
    }
  }

  // ---- local density deltas ---------------------------------------------------

  double site_prior_or_density_logpdf(const Site& s) const {
    const auto& L = *layout_;
    const PriorConfig& pr = spec_.priors;
    const double v = x_[s.index];
    switch (s.role) {
      case SiteRole::FixedLoc:
      case SiteRole::FixedScale:
        return normal_logpdf(v, 0.0, pr.fixed_effect_variance);
      case SiteRole::Eps: {
        if (s.cov_block >= 0) return unit_block_logpdf(s.cov_block, block_unit_of(s));
        const double t = x_[L.idx_tau_m(s.test, s.group)];
        return normal_logpdf(v, 0.0, t * t);
      }
      case SiteRole::U: {
        if (s.cov_block >= 0) return unit_block_logpdf(s.cov_block, block_unit_of(s));
        const double t = x_[L.idx_tau_s(s.test, s.group)];
        return normal_logpdf(v, 0.0, t * t);
      }
      case SiteRole::Eta:
      case SiteRole::Gamma:
        return unit_block_logpdf(s.cov_block, block_unit_of(s));
      case SiteRole::TauM: {
        if (!(v > 0.0)) return -kInf;
        double lp = 0.0;
        if (spec_.variant == ModelVariant::Anova) {
          if (!(v < pr.tau_upper)) return -kInf;
          lp += -std::log(pr.tau_upper);
        } else {
          const double ma = x_[L.idx_m_a(s.group)];
          const double sa = x_[L.idx_sigma_a(s.group)];
          lp += normal_logpdf(std::log(v), ma, sa * sa) - std::log(v);
        }
        for (int si : series_by_test_group_[s.test][s.group]) {
          const auto& ref = layout_->series_refs[si];
          lp += normal_logpdf(x_[L.idx_eps(ref.pair, s.group)], 0.0, v * v);
        }
        return lp;
      }
      case SiteRole::TauS: {
        if (!(v > 0.0)) return -kInf;
        double lp = 0.0;
        const bool hierarchical =
            spec_.variant == ModelVariant::AnovaPlus && L.idx_m_a_scale(s.group) >= 0;
        if (hierarchical) {
          const double ma = x_[L.idx_m_a_scale(s.group)];
          const double sa = x_[L.idx_sigma_a_scale(s.group)];
          lp += normal_logpdf(std::log(v), ma, sa * sa) - std::log(v);
        } else {
          if (!(v < pr.tau_upper)) return -kInf;
          lp += -std::log(pr.tau_upper);
        }
        for (std::size_t e = 0; e < L.pairs.size(); ++e) {
          const int ei = static_cast<int>(e);
          if (L.idx_u(ei, 0) < 0) continue;
          if (L.idx_tau_s(L.pairs[e].second, s.group) != s.index) continue;
          lp += normal_logpdf(x_[L.idx_u(ei, s.group)], 0.0, v * v);
        }
        return lp;
      }
      case SiteRole::MuA: {
        const double ma = v;
        if (!(ma < std::log(pr.ma_exp_upper))) return -kInf;
        double lp = ma - std::log(pr.ma_exp_upper);
        const double sa = x_[L.idx_sigma_a(s.group)];
        for (int k = 0; k < static_cast<int>(L.test_ids.size()); ++k) {
          const double t = x_[L.idx_tau_m(k, s.group)];
          lp += normal_logpdf(std::log(t), ma, sa * sa);
        }
        return lp;
      }
      case SiteRole::SigmaA: {
        const double sa = v;
        if (!(sa > 0.0 && sa < pr.sigma_a_upper)) return -kInf;
        double lp = -std::log(pr.sigma_a_upper);
        const double ma = x_[L.idx_m_a(s.group)];
        for (int k = 0; k < static_cast<int>(L.test_ids.size()); ++k) {
          const double t = x_[L.idx_tau_m(k, s.group)];
          lp += normal_logpdf(std::log(t), ma, sa * sa);
        }
        return lp;
      }
      case SiteRole::MuAScale: {
        const double ma = v;
        if (!(ma < std::log(pr.ma_exp_upper))) return -kInf;
        double lp = ma - std::log(pr.ma_exp_upper);
        const double sa = x_[L.idx_sigma_a_scale(s.group)];
        std::set<int> seen;
        for (int k = 0; k < static_cast<int>(L.test_ids.size()); ++k) {
          const int idx = L.idx_tau_s(k, s.group);
          if (idx < 0 || seen.count(idx)) continue;
          seen.insert(idx);
          lp += normal_logpdf(std::log(x_[idx]), ma, sa * sa);
        }
        return lp;
      }
      case SiteRole::SigmaAScale: {
        const double sa = v;
        if (!(sa > 0.0 && sa < pr.sigma_a_upper)) return -kInf;
        double lp = -std::log(pr.sigma_a_upper);
        const double ma = x_[L.idx_m_a_scale(s.group)];
        std::set<int> seen;
        for (int k = 0; k < static_cast<int>(L.test_ids.size()); ++k) {
          const int idx = L.idx_tau_s(k, s.group);
          if (idx < 0 || seen.count(idx)) continue;
          seen.insert(idx);
          lp += normal_logpdf(std::log(x_[idx]), ma, sa * sa);
        }
        return lp;
      }
    }
    return 0.0;
  }

  // ---- updates ---------------------------------------------------------------

  void update_scalar(std::size_t site_idx, bool adapting) {
    Site& s = sites_[site_idx];
    if (s.frozen) return;
    const double step = std::exp(scalar_log_scales_[site_idx]);
    const double z = rng_.normal();
    const double u_acc = rng_.uniform();
    const double old_v = x_[s.index];
    double new_v, proposal_correction = 0.0;
    if (s.multiplicative) {
      new_v = old_v * std::exp(step * z);
      proposal_correction = step * z;  // log(new/old)
    } else {
      new_v = old_v + step * z;
    }

    const double old_term = site_prior_or_density_logpdf(s);
    std::vector<double>& scratch = scratch_ll_;
    scratch.clear();
    double delta_ll = 0.0;
    x_[s.index] = new_v;
    const double new_term = site_prior_or_density_logpdf(s);
    bool reject = new_term == -kInf;
    if (!reject && !cfg_.likelihood_off) {
      const ParameterState& st = as_state();
      for (int si : s.series) {
        const double ll = series_loglik(d_, st, si);
        scratch.push_back(ll);
        delta_ll += ll - series_ll_[si];
      }
      if (std::isnan(delta_ll)) reject = true;
    }
    bool accepted = false;
    if (!reject) {
      const double delta = delta_ll + (new_term - old_term) + proposal_correction;
      accepted = std::log(u_acc) < delta;
    }
    if (accepted) {
      if (!cfg_.likelihood_off)
        for (std::size_t i = 0; i < s.series.size(); ++i)
          series_ll_[s.series[i]] = scratch[i];
    } else {
      x_[s.index] = old_v;
    }
    tally(family_name(s.role), accepted);
    if (adapting) adapt_scalar(site_idx, accepted);
  }

  void adapt_scalar(std::size_t site_idx, bool accepted) {
    scalar_att_[site_idx] += 1;
    scalar_acc_[site_idx] += accepted ? 1 : 0;
    if (scalar_att_[site_idx] < cfg_.adapt_window) return;
    scalar_batch_[site_idx] += 1;
    const double rate =
        static_cast<double>(scalar_acc_[site_idx]) / static_cast<double>(scalar_att_[site_idx]);
    const double delta =
        std::min(0.25, 1.0 / std::sqrt(static_cast<double>(scalar_batch_[site_idx])));
    scalar_log_scales_[site_idx] += rate > cfg_.target_accept ? delta : -delta;
    scalar_log_scales_[site_idx] = std::clamp(scalar_log_scales_[site_idx], -20.0, 10.0);
    scalar_att_[site_idx] = 0;
    scalar_acc_[site_idx] = 0;
  }

  void update_block(int b, bool adapting) {
    if (block_frozen_[b]) return;
    if (block_conjugate_[b])
      conjugate_block_draw(b);
    else
      metropolis_block_update(b, adapting);
  }

  // Full conditional of the precision matrix: Wishart((I + S)^-1, dim + n).
  void conjugate_block_draw(int b) {
    const CovBlock& cb = layout_->cov_blocks()[b];
    const ParameterState& st = as_state();
    const auto& L = *layout_;
    const int units = (cb.governs == EffectVectors::StudyFull ||
                       cb.governs == EffectVectors::StudyLoc ||
                       cb.governs == EffectVectors::StudyScale)
                          ? static_cast<int>(L.study_ids.size())
                          : static_cast<int>(L.pairs.size());
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(cb.dim, cb.dim);
    long n = 0;
    Eigen::VectorXd v;
    bool marginal = false;
    for (int unit = 0; unit < units; ++unit) {
      if (!collect_effect_vector(st, cb, unit, v, marginal)) continue;
      for (int r = 0; r < cb.dim; ++r)
        for (int c = 0; c < cb.dim; ++c) scatter(r, c) += v[r] * v[c];
      ++n;
    }
    const Eigen::MatrixXd vpost =
        (Eigen::MatrixXd::Identity(cb.dim, cb.dim) + scatter).inverse();
    Eigen::LLT<Eigen::MatrixXd> llt(vpost);
    const Eigen::MatrixXd omega =
        wishart_draw(rng_, Eigen::MatrixXd(llt.matrixL()),
                     static_cast<double>(cb.dim) + static_cast<double>(n));
    const Eigen::MatrixXd sigma = omega.inverse();
    x_.segment(cb.theta_offset, cb.theta_count()) = spd_to_chol_params(sigma);
    refresh_block_cache(b);
    tally("cov", true);
  }

  // Joint random walk on the Cholesky parameters; used when the full
  // conditional is not Wishart (mixed-dimension vectors or the
  // Wishart-on-covariance convention).
  void metropolis_block_update(int b, bool adapting) {
    const CovBlock& cb = layout_->cov_blocks()[b];
    const int nt = cb.theta_count();
    const double step = std::exp(block_log_scales_[b]);
    Eigen::VectorXd z(nt);
    for (int i = 0; i < nt; ++i) z[i] = rng_.normal();
    const double u_acc = rng_.uniform();

    const Eigen::VectorXd old_theta = x_.segment(cb.theta_offset, nt);
    const double old_target = block_target(b);
    x_.segment(cb.theta_offset, nt) = old_theta + step * z;
    const BlockCache saved = block_cache_[b];
    refresh_block_cache(b);
    const double new_target = block_target(b);

    const bool accepted =
        std::isfinite(new_target) && std::log(u_acc) < new_target - old_target;
    if (!accepted) {
      x_.segment(cb.theta_offset, nt) = old_theta;
      block_cache_[b] = saved;
    }
    tally("cov", accepted);
    if (adapting) {
      block_att_[b] += 1;
      block_acc_[b] += accepted ? 1 : 0;
      if (block_att_[b] >= cfg_.adapt_window) {
        block_batch_[b] += 1;
        const double rate =
            static_cast<double>(block_acc_[b]) / static_cast<double>(block_att_[b]);
        const double delta =
            std::min(0.25, 1.0 / std::sqrt(static_cast<double>(block_batch_[b])));
        block_log_scales_[b] += rate > cfg_.target_accept_block ? delta : -delta;
        block_log_scales_[b] = std::clamp(block_log_scales_[b], -20.0, 10.0);
        block_att_[b] = 0;
        block_acc_[b] = 0;
      }
    }
  }

  // Effects density + matrix prior + parametrization Jacobian for block b.
  double block_target(int b) {
    const CovBlock& cb = layout_->cov_blocks()[b];
    const auto& L = *layout_;
    const Eigen::VectorXd theta = x_.segment(cb.theta_offset, cb.theta_count());
    if (!theta.allFinite()) return -kInf;
    if (!block_cache_[b].chol.allFinite()) return -kInf;

    const ParameterState& st = as_state();
    const int units = (cb.governs == EffectVectors::StudyFull ||
                       cb.governs == EffectVectors::StudyLoc ||
                       cb.governs == EffectVectors::StudyScale)
                          ? static_cast<int>(L.study_ids.size())
                          : static_cast<int>(L.pairs.size());
    double total = 0.0;
    Eigen::VectorXd v;
    bool marginal = false;
    for (int unit = 0; unit < units; ++unit) {
      if (!collect_effect_vector(st, cb, unit, v, marginal)) continue;
      total += mvn_logpdf_chol(v, marginal ? block_cache_[b].marginal_chol
                                           : block_cache_[b].chol);
    }

    const Eigen::MatrixXd sigma = block_cache_[b].chol * block_cache_[b].chol.transpose();
    const double nu = static_cast<double>(cb.dim);
    if (spec_.wishart == WishartConvention::Precision) {
      // Wishart(I, nu) on the precision == inverse-Wishart(I, nu) on Sigma.
      Eigen::LLT<Eigen::MatrixXd> llt(sigma);
      const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(cb.dim, cb.dim);
      const Eigen::MatrixXd sigma_inv = llt.solve(identity);
      double log_det = 0.0;
      for (int i = 0; i < cb.dim; ++i) log_det += 2.0 * std::log(block_cache_[b].chol(i, i));
      total += -0.5 * sigma_inv.trace() - 0.5 * (nu + cb.dim + 1.0) * log_det -
               0.5 * nu * cb.dim * std::log(2.0) - lmvgamma(cb.dim, 0.5 * nu);
    } else {
      total += wishart_logpdf_identity_scale(sigma, nu);
    }
    total += chol_params_log_jacobian(theta, cb.dim);
    return total;
  }

  void sweep(bool adapting) {
    for (std::size_t i = 0; i < sites_.size(); ++i) update_scalar(i, adapting);
    for (std::size_t b = 0; b < layout_->cov_blocks().size(); ++b)
      update_block(static_cast<int>(b), adapting);
  }

  void tally(const std::string& family, bool accepted) {
    auto& t = accept_tally_[family];
    t.first += accepted ? 1 : 0;
    t.second += 1;
  }

  // ---- start-up recovery ------------------------------------------------------

  void ensure_finite_start(int chain_index) {
    (void)chain_index;
    for (int attempt = 0; attempt <= 100; ++attempt) {
      const std::string problem = describe_nonfinite();
      if (problem.empty()) return;
      if (attempt == 100)
        throw SamplingError("non-finite log posterior at initialization after 100 re-draws; " +
                            problem);
      // Jitter scalar sites; leave covariance blocks at identity.
      const double scale = 0.05 * (1.0 + attempt * 0.05);
      for (const auto& s : sites_) {
        if (s.frozen) continue;
        if (s.multiplicative)
          x_[s.index] *= std::exp(scale * rng_.normal());
        else
          x_[s.index] += scale * rng_.normal();
      }
      refresh_all_caches();
    }
  }

  std::string describe_nonfinite() {
    const ParameterState& st = as_state();
    const double prior = log_prior(st, spec_);
    if (!std::isfinite(prior)) return "prior density is not finite (outside support)";
    double density;
    try {
      density = random_effects_logdensity(st, spec_);
    } catch (const std::exception& e) {
      return std::string("random-effects density error: ") + e.what();
    }
    if (!std::isfinite(density)) return "random-effects density is not finite";
    if (!cfg_.likelihood_off) {
      for (std::size_t i = 0; i < d_.series.size(); ++i) {
        if (!std::isfinite(series_ll_[i]))
          return "log-likelihood of series " + d_.series[i].location() + " is not finite";
      }
    }
    return {};
  }

  // ---- members ---------------------------------------------------------------

  const Dataset& d_;
  ModelSpec spec_;
  SamplerConfig cfg_;
  std::shared_ptr<const Layout> layout_;
  Rng rng_;
  ParameterState st_;
  Eigen::VectorXd& x_ = st_.values;

  std::vector<Site> sites_;
  std::vector<bool> block_frozen_;
  std::vector<bool> block_conjugate_;
  std::vector<BlockCache> block_cache_;
  std::vector<double> series_ll_;
  std::vector<double> scratch_ll_;
  double sat_ll_ = 0.0;

  std::vector<double> scalar_log_scales_, block_log_scales_;
  std::vector<int> scalar_acc_, scalar_att_;
  std::vector<long> scalar_batch_;
  std::vector<int> block_acc_, block_att_;
  std::vector<long> block_batch_;
  long iterations_done_ = 0;

  std::vector<std::array<std::vector<int>, 2>> series_by_test_group_;
  std::vector<std::array<std::vector<int>, 2>> series_by_study_group_;
  std::vector<std::array<int, 2>> series_by_pair_group_;

  std::map<std::string, std::pair<long, long>> accept_tally_;
};

void run_chains(const Dataset& d, const ModelSpec& spec, const SamplerConfig& cfg,
                std::shared_ptr<const Layout> layout, PosteriorSamples& out,
                const std::vector<const ChainCheckpoint*>& resume_from, long warmup,
                long record, const ProgressFn& progress) {
  const int n_chains = cfg.chains;
  std::vector<std::vector<double>> draws(n_chains), deviance(n_chains);
  std::vector<ChainCheckpoint> checkpoints(n_chains);
  std::vector<std::map<std::string, std::pair<long, long>>> tallies(n_chains);
  std::vector<std::string> errors(n_chains);

  auto work = [&](int c) {
    try {
      ChainRunner runner(d, spec, cfg, layout);
      if (resume_from[c])
        runner.restore(*resume_from[c]);
      else
        runner.start(c);
      runner.run(warmup, record, cfg.thin, draws[c], deviance[c], progress, c);
      checkpoints[c] = runner.checkpoint();
      tallies[c] = runner.accept_tallies();
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  };

  int threads = cfg.threads > 0 ? cfg.threads : n_chains;
  threads = std::min(threads, n_chains);
  if (threads <= 1) {
    for (int c = 0; c < n_chains; ++c) work(c);
  } else {
    for (int base = 0; base < n_chains; base += threads) {
      std::vector<std::thread> pool;
      for (int c = base; c < std::min(n_chains, base + threads); ++c)
        pool.emplace_back(work, c);
      for (auto& t : pool) t.join();
    }
  }
  for (int c = 0; c < n_chains; ++c)
    if (!errors[c].empty())
      throw SamplingError("chain " + std::to_string(c) + ": " + errors[c]);

  for (int c = 0; c < n_chains; ++c) {
    out.draws[c].insert(out.draws[c].end(), draws[c].begin(), draws[c].end());
    out.deviance[c].insert(out.deviance[c].end(), deviance[c].begin(), deviance[c].end());
    out.checkpoints[c] = std::move(checkpoints[c]);
  }
  std::map<std::string, std::pair<long, long>> merged;
  for (const auto& t : tallies)
    for (const auto& [k, v] : t) {
      merged[k].first += v.first;
      merged[k].second += v.second;
    }
  for (const auto& [k, v] : merged)
    out.accept_rates[k] =
        v.second == 0 ? 0.0 : static_cast<double>(v.first) / static_cast<double>(v.second);
  out.n_kept += static_cast<int>(record);
}

}  // namespace

PosteriorSamples run_mcmc(const Dataset& d, const ModelSpec& spec, const SamplerConfig& cfg,
                          const ProgressFn& progress) {
  if (cfg.chains < 1) throw std::invalid_argument("run_mcmc: chains must be >= 1");
  if (cfg.thin < 1) throw std::invalid_argument("run_mcmc: thin must be >= 1");
  if (cfg.keep_iters < 1) throw std::invalid_argument("run_mcmc: keep_iters must be >= 1");

  const ParameterState proto = build_layout(d, spec);
  PosteriorSamples out;
  out.layout = proto.layout;
  out.config = cfg;
  out.spec_hash = spec.hash();
  out.data_fingerprint = d.fingerprint();
  out.n_chains = cfg.chains;
  out.n_kept = 0;
  out.dim = proto.layout->dim;
  out.draws.resize(cfg.chains);
  out.deviance.resize(cfg.chains);
  out.checkpoints.resize(cfg.chains);

  std::vector<const ChainCheckpoint*> resume(cfg.chains, nullptr);
  run_chains(d, spec, cfg, proto.layout, out, resume, cfg.warmup_iters, cfg.keep_iters,
             progress);
  return out;
}

void extend_mcmc(const Dataset& d, const ModelSpec& spec, PosteriorSamples& samples,
                 int extra_keep, const ProgressFn& progress) {
  if (extra_keep < 1) throw std::invalid_argument("extend_mcmc: extra_keep must be >= 1");
  if (samples.spec_hash != spec.hash())
    throw std::invalid_argument("extend_mcmc: model spec does not match the container");
  if (samples.data_fingerprint != d.fingerprint())
    throw std::invalid_argument("extend_mcmc: dataset does not match the container");

  const ParameterState proto = build_layout(d, spec);
  std::vector<const ChainCheckpoint*> resume;
  for (const auto& cp : samples.checkpoints) resume.push_back(&cp);
  run_chains(d, spec, samples.config, proto.layout, samples, resume, 0, extra_keep,
             progress);
}

// ---- DIC ---------------------------------------------------------------------

DicReport dic(const PosteriorSamples& samples) {
  const std::vector<double> dev = samples.pooled_deviance();
  if (dev.size() < 100)
    throw std::invalid_argument("dic: fewer than 100 retained draws");
  DicReport r;
  r.mean_residual_deviance = mean(dev);
  r.p_v = 0.5 * sample_variance(dev);
  r.dic = r.mean_residual_deviance + r.p_v;
  return r;
}

}  // namespace dtanma
