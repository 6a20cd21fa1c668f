#include "dtanma/config.hpp"
#include "dtanma/math.hpp"

#include <fstream>
#include <sstream>

namespace dtanma {

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}
}  // namespace

Config Config::parse(std::istream& in) {
  Config cfg;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::runtime_error("config line " + std::to_string(line_no) +
                                 ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      cfg.sections_[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse(in);
}

Config Config::parse_string(const std::string& text) {
  std::istringstream is(text);
  return parse(is);
}

bool Config::has_section(const std::string& section) const {
  return sections_.count(section) > 0;
}

std::vector<std::string> Config::subsections(const std::string& prefix) const {
  std::vector<std::string> out;
  const std::string full = prefix + ".";
  for (const auto& [name, kv] : sections_)
    if (name.rfind(full, 0) == 0) out.push_back(name.substr(full.size()));
  return out;
}

std::optional<std::string> Config::get(const std::string& section,
                                       const std::string& key) const {
  const auto sit = sections_.find(section);
  if (sit == sections_.end()) return std::nullopt;
  const auto kit = sit->second.find(key);
  if (kit == sit->second.end()) return std::nullopt;
  return kit->second;
}

std::string Config::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  const auto v = get(section, key);
  return v ? *v : fallback;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  try {
    return std::stod(*v);
  } catch (const std::exception&) {
    throw std::runtime_error("config [" + section + "] " + key + ": not a number: " + *v);
  }
}

long Config::get_long(const std::string& section, const std::string& key,
                      long fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  try {
    return std::stol(*v);
  } catch (const std::exception&) {
    throw std::runtime_error("config [" + section + "] " + key + ": not an integer: " + *v);
  }
}

bool Config::get_bool(const std::string& section, const std::string& key,
                      bool fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw std::runtime_error("config [" + section + "] " + key + ": not a boolean: " + *v);
}

ModelSpec model_spec_from_config(const Config& cfg, const std::string& section) {
  ModelSpec spec;
  spec.variant = variant_from_string(cfg.get_or(section, "variant", "metareg"));
  spec.cov = covariance_from_string(cfg.get_or(section, "covariance", "full4"));
  spec.wishart = wishart_from_string(cfg.get_or(section, "wishart_convention", "precision"));
  spec.hierarchical_scale_variances =
      cfg.get_bool(section, "hierarchical_scale_variances", false);
  spec.priors.fixed_effect_variance = cfg.get_double(section, "prior_fixed_variance", 1000.0);
  spec.priors.tau_upper = cfg.get_double(section, "prior_tau_upper", 5.0);
  spec.priors.ma_exp_upper = cfg.get_double(section, "prior_ma_exp_upper", 5.0);
  spec.priors.sigma_a_upper = cfg.get_double(section, "prior_sigma_a_upper", 20.0);
  return spec;
}

SamplerConfig sampler_config_from_config(const Config& cfg, const std::string& section) {
  SamplerConfig sc;
  sc.chains = static_cast<int>(cfg.get_long(section, "chains", 3));
  sc.warmup_iters = static_cast<int>(cfg.get_long(section, "warmup", 10000));
  sc.keep_iters = static_cast<int>(cfg.get_long(section, "keep", 20000));
  sc.thin = static_cast<int>(cfg.get_long(section, "thin", 1));
  sc.seed = static_cast<std::uint64_t>(cfg.get_long(section, "seed", 1));
  sc.target_accept = cfg.get_double(section, "target_accept", 0.44);
  sc.target_accept_block = cfg.get_double(section, "target_accept_block", 0.234);
  sc.adapt_window = static_cast<int>(cfg.get_long(section, "adapt_window", 50));
  sc.threads = static_cast<int>(cfg.get_long(section, "threads", 0));
  sc.likelihood_off = cfg.get_bool(section, "likelihood_off", false);
  const auto freeze = cfg.get(section, "freeze");
  if (freeze) {
    std::stringstream ss(*freeze);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) sc.freeze.push_back(t);
    }
  }
  return sc;
}

RunConfig RunConfig::load(const std::string& path) {
  const Config cfg = Config::parse_file(path);
  RunConfig rc;
  const auto data = cfg.get("data", "path");
  if (!data) throw std::runtime_error("config: [data] path is required");
  rc.data_path = *data;
  rc.model = model_spec_from_config(cfg, "model");
  rc.sampler = sampler_config_from_config(cfg, "sampler");
  rc.outputs.dir = cfg.get_or("outputs", "dir", "out");
  rc.outputs.accuracy_table = cfg.get_bool("outputs", "accuracy_table", true);
  rc.outputs.rankings_table = cfg.get_bool("outputs", "rankings_table", true);
  rc.outputs.threshold_curves = cfg.get_bool("outputs", "threshold_curves", true);
  rc.outputs.sroc_figures = cfg.get_bool("outputs", "sroc_figures", true);
  rc.outputs.curve_grid = static_cast<int>(cfg.get_long("outputs", "curve_grid", 100));
  rc.outputs.truth_path = cfg.get_or("outputs", "truth", "");
  for (const auto& name : cfg.subsections("compare"))
    rc.compare.emplace_back(name, model_spec_from_config(cfg, "compare." + name));
  return rc;
}

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  os << "[data]\npath = " << data_path << "\n[model]\n"
     << model.to_config_text() << "[sampler]\n"
     << sampler.to_text() << "[outputs]\ndir = " << outputs.dir << '\n';
  for (const auto& [name, spec] : compare)
    os << "[compare." << name << "]\n" << spec.to_config_text();
  return os.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical_text()); }

}  // namespace dtanma
