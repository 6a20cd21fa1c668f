#pragma once

#include "dtanma/variant.hpp"

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtanma {

// j = 0 non-diseased, j = 1 diseased; used as array index throughout.
enum class DiseaseGroup : int { NonDiseased = 0, Diseased = 1 };

inline int group_index(DiseaseGroup g) { return static_cast<int>(g); }

enum class TestKind { Binary, Continuous };

struct TestDescriptor {
  std::string test_id;
  std::string name;
  TestKind kind = TestKind::Binary;
  // Reference threshold; meaningful only for continuous tests.
  double c_star = std::numeric_limits<double>::quiet_NaN();

  bool is_continuous() const { return kind == TestKind::Continuous; }
};

// One (study, test, group) cell: counts of positives at each reported
// threshold. Thresholds are strictly ascending; positives are non-increasing
// along them. Binary tests carry a single sentinel (NaN) threshold so every
// series has the same shape.
struct ThresholdSeries {
  std::string study_id;
  std::string test_id;
  DiseaseGroup group = DiseaseGroup::NonDiseased;
  long group_size = 0;
  std::vector<double> thresholds;
  std::vector<long> positives;

  static double sentinel() { return std::numeric_limits<double>::quiet_NaN(); }
  bool has_sentinel() const {
    return thresholds.size() == 1 && std::isnan(thresholds[0]);
  }
  int length() const { return static_cast<int>(thresholds.size()); }
  std::string location() const;
};

struct Dataset {
  std::vector<TestDescriptor> tests;    // sorted by test_id
  std::vector<ThresholdSeries> series;  // sorted by (study, test, group)
  std::vector<std::string> studies;     // sorted, unique

  const TestDescriptor* find_test(const std::string& test_id) const;
  std::vector<const ThresholdSeries*> series_for_test(const std::string& test_id) const;
  // Canonical text form; basis of the data fingerprint.
  std::string canonical_text() const;
  std::uint64_t fingerprint() const;
};

struct ParseError : std::runtime_error {
  ParseError(int line_number, const std::string& message)
      : std::runtime_error("line " + std::to_string(line_number) + ": " + message),
        line(line_number) {}
  int line;
};

// Co-evaluation graph: tests are nodes, an edge joins two tests evaluated in
// the same study. Components are labeled by the lowest test_id they contain.
struct NetworkGraph {
  struct Edge {
    std::string test_a, test_b, study;
  };
  std::vector<std::string> nodes;
  std::vector<Edge> edges;
  std::map<std::string, std::string> component_of;  // test -> component label
  int component_count = 0;
};

enum class Severity { Error, Warning };

struct ValidationFinding {
  Severity severity = Severity::Error;
  std::string rule;
  std::string location;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;
  bool ok() const {
    for (const auto& f : findings)
      if (f.severity == Severity::Error) return false;
    return true;
  }
  std::string to_text() const;
};

// Parses the delimited evidence file (one row per study/test/group/threshold
// cell, optional cstar:<test>=<value> directives) and checks all structural
// invariants. Throws ParseError with the offending line.
Dataset parse_dataset(std::istream& in);
Dataset parse_dataset_file(const std::string& path);

// Most commonly reported threshold, counting distinct studies; ties go to
// the smaller threshold.
double select_reference_threshold(const std::vector<const ThresholdSeries*>& series);

// Round-trips through parse_dataset: header row, one row per threshold cell,
// cstar directives for continuous tests.
std::string dataset_to_csv(const Dataset& d);

NetworkGraph build_network_graph(const Dataset& d);

// Applies the per-variant data requirements (connected network, minimum
// studies per test). Returns findings instead of aborting.
ValidationReport validate_for_model(const Dataset& d, const NetworkGraph& g,
                                    ModelVariant variant);

}  // namespace dtanma
