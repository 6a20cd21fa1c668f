#include "dtanma/dataset.hpp"
#include "dtanma/math.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace dtanma {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  if (line.find(',') != std::string::npos) {
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
  } else {
    std::stringstream ss(line);
    std::string cell;
    while (ss >> cell) cells.push_back(cell);
  }
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t\r");
    const auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? "" : c.substr(b, e - b + 1);
  }
  return cells;
}

double parse_number(const std::string& s, int line, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, "malformed " + what + " '" + s + "'");
  }
}

long parse_count(const std::string& s, int line, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, "malformed " + what + " '" + s + "'");
  }
}

struct RawRow {
  int line;
  std::string study, test, kind, group;
  std::string threshold;
  long positives;
  long group_size;
};

const std::vector<std::string> kHeader = {"study_id", "test_id",   "test_kind",
                                          "group",    "threshold", "positives",
                                          "group_size"};

}  // namespace

std::string ThresholdSeries::location() const {
  return "study=" + study_id + " test=" + test_id +
         " group=" + (group == DiseaseGroup::Diseased ? "diseased" : "nondiseased");
}

const TestDescriptor* Dataset::find_test(const std::string& test_id) const {
  for (const auto& t : tests)
    if (t.test_id == test_id) return &t;
  return nullptr;
}

std::vector<const ThresholdSeries*> Dataset::series_for_test(const std::string& test_id) const {
  std::vector<const ThresholdSeries*> out;
  for (const auto& s : series)
    if (s.test_id == test_id) out.push_back(&s);
  return out;
}

std::string Dataset::canonical_text() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& t : tests) {
    os << "test " << t.test_id << ' ' << (t.is_continuous() ? "continuous" : "binary");
    if (t.is_continuous()) os << ' ' << t.c_star;
    os << '\n';
  }
  for (const auto& s : series) {
    os << s.study_id << ' ' << s.test_id << ' ' << group_index(s.group) << ' '
       << s.group_size;
    for (int t = 0; t < s.length(); ++t) {
      os << ' ';
      if (std::isnan(s.thresholds[t]))
        os << "NA";
      else
        os << s.thresholds[t];
      os << ':' << s.positives[t];
    }
    os << '\n';
  }
  return os.str();
}

std::uint64_t Dataset::fingerprint() const { return fnv1a64(canonical_text()); }

double select_reference_threshold(const std::vector<const ThresholdSeries*>& series) {
  // Count distinct studies per threshold value; a single study reporting a
  // long threshold grid must not dominate.
  std::map<double, std::set<std::string>> studies_at;
  for (const auto* s : series) {
    for (double thr : s->thresholds) {
      if (std::isnan(thr)) continue;
      studies_at[thr].insert(s->study_id);
    }
  }
  if (studies_at.empty())
    throw std::invalid_argument("select_reference_threshold: no thresholds present");
  double best = 0.0;
  std::size_t best_count = 0;
  for (const auto& [thr, studies] : studies_at) {
    // Map iterates ascending, so on ties the smaller threshold wins.
    if (studies.size() > best_count) {
      best = thr;
      best_count = studies.size();
    }
  }
  return best;
}

Dataset parse_dataset(std::istream& in) {
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::map<std::string, double> cstar_override;
  std::vector<RawRow> rows;

  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    line = line.substr(b);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();

    if (line.rfind("cstar:", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos || eq <= 6)
        throw ParseError(line_no, "malformed cstar directive (expected cstar:<test_id>=<value>)");
      const std::string id = line.substr(6, eq - 6);
      const double v = parse_number(line.substr(eq + 1), line_no, "cstar value");
      if (!(v > 0.0)) throw ParseError(line_no, "cstar must be > 0");
      cstar_override[id] = v;
      continue;
    }

    auto cells = split_row(line);
    if (!header_seen) {
      if (cells.size() != kHeader.size())
        throw ParseError(line_no, "expected header row with " +
                                      std::to_string(kHeader.size()) + " columns");
      for (std::size_t i = 0; i < kHeader.size(); ++i)
        if (cells[i] != kHeader[i])
          throw ParseError(line_no, "unexpected header column '" + cells[i] +
                                        "' (expected '" + kHeader[i] + "')");
      header_seen = true;
      continue;
    }
    if (cells.size() != kHeader.size())
      throw ParseError(line_no, "expected " + std::to_string(kHeader.size()) +
                                    " columns, found " + std::to_string(cells.size()));
    RawRow r;
    r.line = line_no;
    r.study = cells[0];
    r.test = cells[1];
    r.kind = cells[2];
    r.group = cells[3];
    r.threshold = cells[4];
    r.positives = parse_count(cells[5], line_no, "positives");
    r.group_size = parse_count(cells[6], line_no, "group_size");
    if (r.study.empty()) throw ParseError(line_no, "empty study_id");
    if (r.test.empty()) throw ParseError(line_no, "empty test_id");
    if (r.kind != "binary" && r.kind != "continuous")
      throw ParseError(line_no, "unknown test kind '" + r.kind + "'");
    if (r.group != "diseased" && r.group != "nondiseased")
      throw ParseError(line_no, "unknown group '" + r.group + "'");
    if (r.positives < 0) throw ParseError(line_no, "positives must be >= 0");
    if (r.group_size <= 0)
      throw ParseError(line_no, "group_size must be > 0 (a zero-size arm carries no information)");
    rows.push_back(std::move(r));
  }
  if (!header_seen && !rows.empty())
    throw ParseError(1, "missing header row");

  // Test table; kind must be consistent across rows.
  std::map<std::string, TestKind> kinds;
  std::map<std::string, int> kind_line;
  for (const auto& r : rows) {
    const TestKind k = r.kind == "binary" ? TestKind::Binary : TestKind::Continuous;
    auto it = kinds.find(r.test);
    if (it == kinds.end()) {
      kinds[r.test] = k;
      kind_line[r.test] = r.line;
    } else if (it->second != k) {
      throw ParseError(r.line, "test '" + r.test + "' declared with conflicting kind (see line " +
                                   std::to_string(kind_line[r.test]) + ")");
    }
  }

  // Group rows into series keyed by (study, test, group).
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<const RawRow*>> cells_by_series;
  for (const auto& r : rows)
    cells_by_series[{r.study, r.test, r.group}].push_back(&r);

  Dataset d;
  std::set<std::string> studies;
  for (const auto& [key, series_rows] : cells_by_series) {
    ThresholdSeries s;
    s.study_id = std::get<0>(key);
    s.test_id = std::get<1>(key);
    s.group = std::get<2>(key) == "diseased" ? DiseaseGroup::Diseased
                                             : DiseaseGroup::NonDiseased;
    s.group_size = series_rows.front()->group_size;
    const TestKind kind = kinds[s.test_id];

    for (const auto* r : series_rows)
      if (r->group_size != s.group_size)
        throw ParseError(r->line, "inconsistent group_size within series " + s.location());

    std::vector<std::pair<double, const RawRow*>> entries;
    for (const auto* r : series_rows) {
      if (r->threshold == "NA") {
        if (kind == TestKind::Continuous)
          throw ParseError(r->line, "continuous test '" + s.test_id + "' requires a numeric threshold");
        entries.emplace_back(ThresholdSeries::sentinel(), r);
      } else {
        if (kind == TestKind::Binary)
          throw ParseError(r->line, "binary test '" + s.test_id + "' must use threshold NA");
        const double thr = parse_number(r->threshold, r->line, "threshold");
        if (!(thr > 0.0))
          throw ParseError(r->line, "threshold must be > 0 (log-transformable)");
        entries.emplace_back(thr, r);
      }
    }
    if (kind == TestKind::Binary && entries.size() != 1)
      throw ParseError(entries[1].second->line,
                       "binary series " + s.location() + " must have exactly one row");
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (entries[i].first == entries[i - 1].first)
        throw ParseError(entries[i].second->line,
                         "duplicate threshold in series " + s.location());
    for (const auto& [thr, r] : entries) {
      s.thresholds.push_back(thr);
      s.positives.push_back(r->positives);
    }

    if (s.positives.front() > s.group_size)
      throw ParseError(entries.front().second->line,
                       "positives exceed group_size in series " + s.location());
    for (std::size_t i = 1; i < s.positives.size(); ++i)
      if (s.positives[i] > s.positives[i - 1])
        throw ParseError(entries[i].second->line,
                         "positives increase with threshold in series " + s.location());

    studies.insert(s.study_id);
    d.series.push_back(std::move(s));
  }

  // Group pairing: both margins of the per-threshold table must exist.
  std::set<std::pair<std::string, std::string>> have[2];
  for (const auto& s : d.series)
    have[group_index(s.group)].insert({s.study_id, s.test_id});
  for (int j = 0; j < 2; ++j)
    for (const auto& [study, test] : have[j])
      if (!have[1 - j].count({study, test}))
        throw ParseError(0, "missing " + std::string(j == 0 ? "diseased" : "nondiseased") +
                                " series for study=" + study + " test=" + test);

  for (const auto& [id, kind] : kinds) {
    TestDescriptor t;
    t.test_id = id;
    t.name = id;
    t.kind = kind;
    if (kind == TestKind::Continuous) {
      auto it = cstar_override.find(id);
      if (it != cstar_override.end()) {
        t.c_star = it->second;
      } else {
        std::vector<const ThresholdSeries*> sv;
        for (const auto& s : d.series)
          if (s.test_id == id) sv.push_back(&s);
        t.c_star = select_reference_threshold(sv);
      }
    }
    d.tests.push_back(std::move(t));
  }
  for (const auto& [id, v] : cstar_override)
    if (!kinds.count(id))
      throw ParseError(0, "cstar directive references unknown test '" + id + "'");

  std::sort(d.tests.begin(), d.tests.end(),
            [](const auto& a, const auto& b) { return a.test_id < b.test_id; });
  std::sort(d.series.begin(), d.series.end(), [](const auto& a, const auto& b) {
    return std::tie(a.study_id, a.test_id, a.group) <
           std::tie(b.study_id, b.test_id, b.group);
  });
  d.studies.assign(studies.begin(), studies.end());
  return d;
}

Dataset parse_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file: " + path);
  return parse_dataset(in);
}

std::string dataset_to_csv(const Dataset& d) {
  // Shortest exact decimal form for thresholds.
  auto shortest = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::ostringstream os;
  for (const auto& t : d.tests)
    if (t.is_continuous()) os << "cstar:" << t.test_id << '=' << shortest(t.c_star) << '\n';
  os << "study_id,test_id,test_kind,group,threshold,positives,group_size\n";
  for (const auto& s : d.series) {
    const auto* t = d.find_test(s.test_id);
    for (int i = 0; i < s.length(); ++i) {
      os << s.study_id << ',' << s.test_id << ','
         << (t->is_continuous() ? "continuous" : "binary") << ','
         << (s.group == DiseaseGroup::Diseased ? "diseased" : "nondiseased") << ',';
      if (std::isnan(s.thresholds[i]))
        os << "NA";
      else
        os << shortest(s.thresholds[i]);
      os << ',' << s.positives[i] << ',' << s.group_size << '\n';
    }
  }
  return os.str();
}

NetworkGraph build_network_graph(const Dataset& d) {
  NetworkGraph g;
  for (const auto& t : d.tests) g.nodes.push_back(t.test_id);

  // Union-find over test ids.
  std::map<std::string, std::string> parent;
  for (const auto& n : g.nodes) parent[n] = n;
  std::function<std::string(const std::string&)> find = [&](const std::string& x) {
    std::string r = x;
    while (parent[r] != r) r = parent[r];
    std::string c = x;
    while (parent[c] != r) {
      std::string next = parent[c];
      parent[c] = r;
      c = next;
    }
    return r;
  };

  std::map<std::string, std::set<std::string>> tests_in_study;
  for (const auto& s : d.series) tests_in_study[s.study_id].insert(s.test_id);
  for (const auto& [study, tests] : tests_in_study) {
    for (auto it = tests.begin(); it != tests.end(); ++it) {
      auto jt = it;
      for (++jt; jt != tests.end(); ++jt) {
        g.edges.push_back({*it, *jt, study});
        const std::string ra = find(*it), rb = find(*jt);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }

  std::map<std::string, std::string> label;  // root -> lowest test_id
  for (const auto& n : g.nodes) {
    const std::string r = find(n);
    auto it = label.find(r);
    if (it == label.end() || n < it->second) label[r] = n;
  }
  for (const auto& n : g.nodes) g.component_of[n] = label[find(n)];
  std::set<std::string> distinct;
  for (const auto& [n, c] : g.component_of) distinct.insert(c);
  g.component_count = static_cast<int>(distinct.size());
  return g;
}

std::string ValidationReport::to_text() const {
  std::ostringstream os;
  for (const auto& f : findings)
    os << (f.severity == Severity::Error ? "error" : "warning") << '\t' << f.rule
       << '\t' << f.location << '\t' << f.message << '\n';
  return os.str();
}

ValidationReport validate_for_model(const Dataset& d, const NetworkGraph& g,
                                    ModelVariant variant) {
  ValidationReport report;
  std::map<std::string, std::set<std::string>> studies_per_test;
  for (const auto& s : d.series) studies_per_test[s.test_id].insert(s.study_id);

  const bool needs_connected =
      variant == ModelVariant::Anova || variant == ModelVariant::AnovaPlus;
  const bool rejects_one_study_tests =
      variant == ModelVariant::Independent || variant == ModelVariant::Anova;

  if (needs_connected && g.component_count != 1) {
    report.findings.push_back(
        {Severity::Error, "connected-network", "network",
         to_string(variant) + " requires a single connected component; found " +
             std::to_string(g.component_count)});
  }
  if (rejects_one_study_tests) {
    for (const auto& [test, studies] : studies_per_test) {
      if (studies.size() < 2) {
        report.findings.push_back(
            {Severity::Error, "one-study-test", "test=" + test,
             to_string(variant) + " cannot estimate a test-specific variance from " +
                 std::to_string(studies.size()) + " study"});
      }
    }
  }
  if (d.series.empty()) {
    report.findings.push_back(
        {Severity::Error, "empty-dataset", "dataset", "no series present"});
  }
  return report;
}

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Independent: return "independent";
    case ModelVariant::MetaRegression: return "metareg";
    case ModelVariant::Anova: return "anova";
    case ModelVariant::AnovaPlus: return "anovaplus";
  }
  return "?";
}

std::string to_string(CovarianceStructure c) {
  switch (c) {
    case CovarianceStructure::Full4: return "full4";
    case CovarianceStructure::BlockDiag22: return "blockdiag22";
    case CovarianceStructure::Reduced2: return "reduced2";
  }
  return "?";
}

std::string to_string(WishartConvention w) {
  return w == WishartConvention::Precision ? "precision" : "covariance";
}

ModelVariant variant_from_string(const std::string& s) {
  if (s == "independent") return ModelVariant::Independent;
  if (s == "metareg") return ModelVariant::MetaRegression;
  if (s == "anova") return ModelVariant::Anova;
  if (s == "anovaplus") return ModelVariant::AnovaPlus;
  throw std::invalid_argument("unknown model variant '" + s + "'");
}

CovarianceStructure covariance_from_string(const std::string& s) {
  if (s == "full4") return CovarianceStructure::Full4;
  if (s == "blockdiag22") return CovarianceStructure::BlockDiag22;
  if (s == "reduced2") return CovarianceStructure::Reduced2;
  throw std::invalid_argument("unknown covariance structure '" + s + "'");
}

WishartConvention wishart_from_string(const std::string& s) {
  if (s == "precision") return WishartConvention::Precision;
  if (s == "covariance") return WishartConvention::Covariance;
  throw std::invalid_argument("unknown wishart convention '" + s + "'");
}

}  // namespace dtanma
