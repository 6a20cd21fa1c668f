#pragma once

#include "dtanma/inference.hpp"
#include "dtanma/model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dtanma {

// Minimal sectioned key=value config. Lines starting with '#' or ';' are
// comments; section headers are [name] or [name.sub].
class Config {
 public:
  static Config parse(std::istream& in);
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has_section(const std::string& section) const;
  std::vector<std::string> subsections(const std::string& prefix) const;

  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long get_long(const std::string& section, const std::string& key, long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

ModelSpec model_spec_from_config(const Config& cfg, const std::string& section);
SamplerConfig sampler_config_from_config(const Config& cfg, const std::string& section);

struct OutputConfig {
  std::string dir = "out";
  bool accuracy_table = true;
  bool rankings_table = true;
  bool threshold_curves = true;
  bool sroc_figures = true;
  int curve_grid = 100;
  std::string truth_path;  // optional: enables the recovery report
};

struct RunConfig {
  std::string data_path;
  ModelSpec model;
  SamplerConfig sampler;
  OutputConfig outputs;
  std::vector<std::pair<std::string, ModelSpec>> compare;  // [compare.<name>]

  static RunConfig load(const std::string& path);
  std::uint64_t hash() const;
  std::string canonical_text() const;
};

}  // namespace dtanma
