// Command line front end: validate / fit / compare / summarize / simulate.

#include "dtanma/config.hpp"
#include "dtanma/container.hpp"
#include "dtanma/dataset.hpp"
#include "dtanma/figures.hpp"
#include "dtanma/inference.hpp"
#include "dtanma/math.hpp"
#include "dtanma/model.hpp"
#include "dtanma/rng.hpp"
#include "dtanma/summaries.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

namespace fs = std::filesystem;
using namespace dtanma;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitParse = 2;
constexpr int kExitSampling = 3;

struct CommonOpts {
  std::string config_path;
  long seed_override = -1;
  int threads = 0;
  std::string out_override;
  bool quiet = false;
};

RunConfig load_run_config(const CommonOpts& opts) {
  RunConfig rc = RunConfig::load(opts.config_path);
  if (opts.seed_override >= 0) rc.sampler.seed = static_cast<std::uint64_t>(opts.seed_override);
  if (opts.threads > 0) rc.sampler.threads = opts.threads;
  if (!opts.out_override.empty()) rc.outputs.dir = opts.out_override;
  return rc;
}

ProgressFn make_progress(bool quiet) {
  if (quiet) return nullptr;
  static std::mutex mu;
  return [](int chain, long done, long total) {
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << "[chain " << chain << "] " << done << '/' << total << '\n';
  };
}

struct FitArtifacts {
  std::vector<std::string> files;
  DicReport dic_report;
  bool dic_valid = false;
};

void write_manifest(const fs::path& dir, const RunConfig& rc, std::uint64_t data_fp,
                    std::vector<std::string> files) {
  std::ostringstream os;
  os << "version " << kVersion << '\n'
     << "config_hash " << rc.hash() << '\n'
     << "data_fingerprint " << data_fp << '\n'
     << "seed " << rc.sampler.seed << '\n';
  std::sort(files.begin(), files.end());
  for (const auto& f : files) os << "artifact " << f << '\n';
  write_text_file((dir / "manifest.txt").string(), os.str());
}

void write_recovery_report(const fs::path& dir, const PosteriorSamples& samples,
                           const std::string& truth_path, FitArtifacts& art) {
  std::ifstream in(truth_path);
  if (!in) throw std::runtime_error("cannot open truth file: " + truth_path);
  const Layout& L = *samples.layout;
  std::ostringstream os;
  os << "test\tgroup\ttrue_m\tmedian\tlower95\tupper95\tcovered\n";
  std::string line;
  std::getline(in, line);  // header
  int covered = 0, total = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string test, cell;
    std::getline(ss, test, ',');
    std::getline(ss, cell, ',');
    const int group = std::stoi(cell);
    std::getline(ss, cell, ',');
    const double true_m = std::stod(cell);
    const int k = L.test_index(test);
    if (k < 0) continue;
    auto draws = samples.pooled(L.idx_m(k, group));
    const double med = quantile(draws, 0.5);
    const double lo = quantile(draws, 0.025);
    const double hi = quantile(draws, 0.975);
    const bool c = true_m >= lo && true_m <= hi;
    covered += c ? 1 : 0;
    ++total;
    os << test << '\t' << group << '\t' << true_m << '\t' << med << '\t' << lo << '\t' << hi
       << '\t' << (c ? 1 : 0) << '\n';
  }
  if (total > 0)
    os << "coverage\t" << covered << '/' << total << '\t'
       << static_cast<double>(covered) / total << '\n';
  write_text_file((dir / "recovery.txt").string(), os.str());
  art.files.push_back("recovery.txt");
}

FitArtifacts run_fit_pipeline(const Dataset& d, const RunConfig& rc, const ModelSpec& spec,
                              const fs::path& dir, const std::string& prefix, bool quiet) {
  FitArtifacts art;
  fs::create_directories(dir);

  const PosteriorSamples samples = run_mcmc(d, spec, rc.sampler, make_progress(quiet));

  const std::string container_name = prefix + "posterior.bin";
  save_posterior((dir / container_name).string(), samples);
  art.files.push_back(container_name);
  art.files.push_back(container_name + ".idx");

  const FitDiagnostics diag = diagnostics(samples);
  write_text_file((dir / (prefix + "diagnostics.txt")).string(), diag.to_text());
  art.files.push_back(prefix + "diagnostics.txt");

  art.dic_report = dic(samples);
  art.dic_valid = true;
  {
    std::ostringstream os;
    os.precision(10);
    os << "residual_deviance " << art.dic_report.mean_residual_deviance << '\n'
       << "pV " << art.dic_report.p_v << '\n'
       << "DIC " << art.dic_report.dic << '\n';
    write_text_file((dir / (prefix + "dic.txt")).string(), os.str());
    art.files.push_back(prefix + "dic.txt");
  }

  const Layout& L = *samples.layout;
  if (rc.outputs.accuracy_table) {
    std::vector<AccuracySummary> rows;
    for (std::size_t k = 0; k < L.test_ids.size(); ++k) {
      if (L.test_continuous[k])
        rows.push_back(pooled_accuracy(samples, L.test_ids[k], L.c_star[k]));
      else
        rows.push_back(pooled_accuracy(samples, L.test_ids[k], std::nullopt));
    }
    write_text_file((dir / (prefix + "accuracy.csv")).string(), accuracy_table_csv(rows));
    art.files.push_back(prefix + "accuracy.csv");
  }
  if (rc.outputs.rankings_table && L.test_ids.size() >= 2) {
    std::vector<std::optional<double>> thresholds(L.test_ids.size(), std::nullopt);
    const RankingReport rep = rankings(samples, L.test_ids, thresholds);
    write_text_file((dir / (prefix + "rankings.csv")).string(), rankings_csv(rep));
    art.files.push_back(prefix + "rankings.csv");
  }
  if (rc.outputs.threshold_curves) {
    for (std::size_t k = 0; k < L.test_ids.size(); ++k) {
      if (!L.test_continuous[k]) continue;
      const ThresholdCurve curve =
          threshold_curve(samples, L.test_ids[k], rc.outputs.curve_grid);
      const std::string name = prefix + "curve_" + L.test_ids[k] + ".svg";
      write_text_file((dir / name).string(), threshold_curve_svg(curve));
      art.files.push_back(name);
    }
  }
  if (rc.outputs.sroc_figures) {
    for (std::size_t k = 0; k < L.test_ids.size(); ++k) {
      const SrocCurve curve = sroc_curve(samples, L.test_ids[k]);
      const AccuracySummary pooled =
          L.test_continuous[k] ? pooled_accuracy(samples, L.test_ids[k], L.c_star[k])
                               : pooled_accuracy(samples, L.test_ids[k], std::nullopt);
      const std::string name = prefix + "sroc_" + L.test_ids[k] + ".svg";
      write_text_file((dir / name).string(), sroc_svg(curve, pooled));
      art.files.push_back(name);
    }
  }
  if (!rc.outputs.truth_path.empty())
    write_recovery_report(dir, samples, rc.outputs.truth_path, art);
  return art;
}

// ---- subcommands -----------------------------------------------------------

int cmd_validate(const std::string& data_path, const std::string& variant_name) {
  Dataset d;
  try {
    d = parse_dataset_file(data_path);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  }
  const ModelVariant variant = variant_from_string(variant_name);
  const NetworkGraph g = build_network_graph(d);
  const ValidationReport report = validate_for_model(d, g, variant);
  std::cout << "tests " << d.tests.size() << ", studies " << d.studies.size() << ", series "
            << d.series.size() << ", components " << g.component_count << '\n';
  std::cout << report.to_text();
  if (report.ok()) {
    std::cout << "ok: dataset satisfies the " << to_string(variant) << " requirements\n";
    return kExitOk;
  }
  return kExitValidation;
}

int cmd_fit(const CommonOpts& opts, bool resume, int extra_iters) {
  const RunConfig rc = load_run_config(opts);
  Dataset d;
  try {
    d = parse_dataset_file(rc.data_path);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  }
  const NetworkGraph g = build_network_graph(d);
  const ValidationReport report = validate_for_model(d, g, rc.model.variant);
  const fs::path dir(rc.outputs.dir);
  fs::create_directories(dir);
  write_text_file((dir / "validation.txt").string(), report.to_text());
  if (!report.ok()) {
    std::cerr << report.to_text();
    std::cerr << "validation failed; aborting before sampling\n";
    return kExitValidation;
  }

  try {
    if (resume) {
      const std::string container = (dir / "posterior.bin").string();
      PosteriorSamples samples = load_posterior(container);
      const int extra = extra_iters > 0 ? extra_iters : rc.sampler.keep_iters;
      extend_mcmc(d, rc.model, samples, extra, make_progress(opts.quiet));
      save_posterior(container, samples);
      const FitDiagnostics diag = diagnostics(samples);
      write_text_file((dir / "diagnostics.txt").string(), diag.to_text());
      const DicReport r = dic(samples);
      std::ostringstream os;
      os.precision(10);
      os << "residual_deviance " << r.mean_residual_deviance << '\n'
         << "pV " << r.p_v << '\n'
         << "DIC " << r.dic << '\n';
      write_text_file((dir / "dic.txt").string(), os.str());
      std::cout << "extended container by " << extra << " retained draws per chain\n";
      return kExitOk;
    }
    FitArtifacts art = run_fit_pipeline(d, rc, rc.model, dir, "", opts.quiet);
    art.files.push_back("validation.txt");
    write_manifest(dir, rc, d.fingerprint(), art.files);
    std::cout.precision(10);
    std::cout << "residual_deviance " << art.dic_report.mean_residual_deviance << "\npV "
              << art.dic_report.p_v << "\nDIC " << art.dic_report.dic << '\n';
    return kExitOk;
  } catch (const SamplingError& e) {
    write_text_file((dir / "failure_marker.txt").string(),
                    std::string("sampling failed: ") + e.what() + '\n');
    std::cerr << "sampling failed: " << e.what() << '\n';
    return kExitSampling;
  }
}

int cmd_compare(const CommonOpts& opts) {
  const RunConfig rc = load_run_config(opts);
  if (rc.compare.size() < 2) {
    std::cerr << "compare requires at least 2 [compare.<name>] blocks\n";
    return kExitParse;
  }
  Dataset d;
  try {
    d = parse_dataset_file(rc.data_path);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  }
  const fs::path dir(rc.outputs.dir);
  fs::create_directories(dir);

  struct Row {
    std::string name;
    bool ok = false;
    std::string error;
    DicReport dic;
  };
  std::vector<Row> rows;
  std::vector<std::string> files;
  const NetworkGraph g = build_network_graph(d);
  for (const auto& [name, spec] : rc.compare) {
    Row row;
    row.name = name;
    const ValidationReport report = validate_for_model(d, g, spec.variant);
    if (!report.ok()) {
      row.error = "validation failed";
    } else {
      try {
        const FitArtifacts art =
            run_fit_pipeline(d, rc, spec, dir, name + "_", opts.quiet);
        row.dic = art.dic_report;
        row.ok = true;
        files.insert(files.end(), art.files.begin(), art.files.end());
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
    rows.push_back(std::move(row));
  }

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.ok != b.ok) return a.ok;
    return a.dic.dic < b.dic.dic;
  });
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : rows)
    if (r.ok) best = std::min(best, r.dic.dic);

  std::ostringstream os;
  os.precision(10);
  os << "model,residual_deviance,pV,DIC,best\n";
  for (const auto& r : rows) {
    if (r.ok)
      os << r.name << ',' << r.dic.mean_residual_deviance << ',' << r.dic.p_v << ','
         << r.dic.dic << ',' << (r.dic.dic == best ? "*" : "") << '\n';
    else
      os << r.name << ",FAILED,FAILED,FAILED, (" << r.error << ")\n";
  }
  write_text_file((dir / "compare.csv").string(), os.str());
  files.push_back("compare.csv");
  write_manifest(dir, rc, d.fingerprint(), files);
  std::cout << os.str();
  return kExitOk;
}

int cmd_summarize(const std::string& container_path, const std::string& out_dir,
                  const std::vector<std::string>& tests, int grid) {
  const PosteriorSamples samples = load_posterior(container_path);
  const Layout& L = *samples.layout;
  const fs::path dir(out_dir);
  fs::create_directories(dir);

  std::vector<std::string> selected = tests;
  if (selected.empty()) selected = L.test_ids;

  std::vector<AccuracySummary> rows;
  for (const auto& id : selected) {
    const int k = L.test_index(id);
    if (k < 0) {
      std::cerr << "unknown test '" << id << "'\n";
      return kExitParse;
    }
    rows.push_back(L.test_continuous[k] ? pooled_accuracy(samples, id, L.c_star[k])
                                        : pooled_accuracy(samples, id, std::nullopt));
  }
  write_text_file((dir / "accuracy.csv").string(), accuracy_table_csv(rows));
  if (selected.size() >= 2) {
    std::vector<std::optional<double>> thresholds(selected.size(), std::nullopt);
    write_text_file((dir / "rankings.csv").string(),
                    rankings_csv(rankings(samples, selected, thresholds)));
  }
  for (const auto& id : selected) {
    const int k = L.test_index(id);
    if (L.test_continuous[k])
      write_text_file((dir / ("curve_" + id + ".svg")).string(),
                      threshold_curve_svg(threshold_curve(samples, id, grid)));
    const AccuracySummary pooled = rows[static_cast<std::size_t>(
        std::find(selected.begin(), selected.end(), id) - selected.begin())];
    write_text_file((dir / ("sroc_" + id + ".svg")).string(),
                    sroc_svg(sroc_curve(samples, id), pooled));
  }
  std::cout << "wrote summaries for " << selected.size() << " tests to " << out_dir << '\n';
  return kExitOk;
}

// Synthetic-network generator. Shapes are controlled by [simulate]; test
// declarations live in [tests]; true fixed effects are drawn from the ranges
// in [truth].
int cmd_simulate(const std::string& config_path) {
  const Config cfg = Config::parse_file(config_path);
  if (!cfg.has_section("simulate") || !cfg.has_section("tests")) {
    std::cerr << "simulate config needs [simulate] and [tests] sections\n";
    return kExitParse;
  }
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_long("simulate", "seed", 1));
  const long n_studies = cfg.get_long("simulate", "studies", 20);
  const std::string out = cfg.get_or("simulate", "out", "simulated.csv");
  const std::string truth_out = cfg.get_or("simulate", "truth_out", "");
  const double anchor_prob = cfg.get_double("simulate", "anchor_prob", 0.6);
  const long min_extra = cfg.get_long("simulate", "min_extra_tests", 1);
  const long max_extra = cfg.get_long("simulate", "max_extra_tests", 3);
  const long gs_min = cfg.get_long("simulate", "group_size_min", 30);
  const long gs_max = cfg.get_long("simulate", "group_size_max", 300);
  const long thr_min = cfg.get_long("simulate", "min_thresholds", 1);
  const long thr_max = cfg.get_long("simulate", "max_thresholds", 6);

  std::vector<TestDescriptor> tests;
  for (const auto& [id, value] : cfg.sections().at("tests")) {
    TestDescriptor t;
    t.test_id = id;
    t.name = id;
    if (value.rfind("continuous", 0) == 0) {
      t.kind = TestKind::Continuous;
      const auto comma = value.find(',');
      if (comma == std::string::npos) {
        std::cerr << "test " << id << ": continuous tests need a reference threshold\n";
        return kExitParse;
      }
      t.c_star = std::stod(value.substr(comma + 1));
    } else if (value == "binary") {
      t.kind = TestKind::Binary;
    } else {
      std::cerr << "test " << id << ": unknown kind '" << value << "'\n";
      return kExitParse;
    }
    tests.push_back(std::move(t));
  }
  if (tests.empty()) {
    std::cerr << "no tests declared\n";
    return kExitParse;
  }
  std::sort(tests.begin(), tests.end(),
            [](const auto& a, const auto& b) { return a.test_id < b.test_id; });
  const std::string anchor = cfg.get_or("simulate", "anchor_test", tests.front().test_id);

  Rng rng(seed);
  auto rint = [&](long lo, long hi) {
    return lo + static_cast<long>(rng.uniform() * static_cast<double>(hi - lo + 1));
  };

  // Study -> test assignments; anchor-centered so the network is connected.
  const int K = static_cast<int>(tests.size());
  std::vector<std::vector<int>> assigned(n_studies);
  int anchor_idx = 0;
  for (int k = 0; k < K; ++k)
    if (tests[k].test_id == anchor) anchor_idx = k;
  for (long i = 0; i < n_studies; ++i) {
    std::set<int> chosen;
    if (rng.uniform() < anchor_prob) chosen.insert(anchor_idx);
    const long extras = rint(min_extra, max_extra);
    for (long e = 0; e < extras; ++e) chosen.insert(static_cast<int>(rint(0, K - 1)));
    if (chosen.empty()) chosen.insert(anchor_idx);
    assigned[i].assign(chosen.begin(), chosen.end());
  }
  // Every test must appear somewhere; every test must touch the anchor once.
  std::vector<long> first_study(K, -1);
  for (long i = 0; i < n_studies; ++i)
    for (int k : assigned[i])
      if (first_study[k] < 0) first_study[k] = i;
  for (int k = 0; k < K; ++k) {
    if (first_study[k] < 0) {
      const long i = rint(0, n_studies - 1);
      assigned[i].push_back(k);
      std::sort(assigned[i].begin(), assigned[i].end());
      first_study[k] = i;
    }
  }
  for (int k = 0; k < K; ++k) {
    if (k == anchor_idx) continue;
    bool linked = false;
    for (long i = 0; i < n_studies && !linked; ++i) {
      const auto& a = assigned[i];
      if (std::count(a.begin(), a.end(), k) && std::count(a.begin(), a.end(), anchor_idx))
        linked = true;
    }
    if (!linked) {
      auto& a = assigned[first_study[k]];
      if (!std::count(a.begin(), a.end(), anchor_idx)) {
        a.push_back(anchor_idx);
        std::sort(a.begin(), a.end());
      }
    }
  }

  // Threshold sets: candidates around c_star, rounded so values repeat
  // across studies; the reference threshold itself appears often.
  auto round3 = [](double v) {
    const double mag = std::pow(10.0, std::floor(std::log10(v)) - 2.0);
    return std::round(v / mag) * mag;
  };

  std::vector<DesignCell> design;
  auto study_id = [&](long i) {
    std::ostringstream os;
    os << 's' << std::setw(3) << std::setfill('0') << i + 1;
    return os.str();
  };
  for (long i = 0; i < n_studies; ++i) {
    for (int k : assigned[i]) {
      std::vector<double> thresholds;
      if (tests[k].is_continuous()) {
        const long count = rint(thr_min, thr_max);
        std::set<double> vals;
        if (rng.uniform() < 0.7) vals.insert(tests[k].c_star);
        while (static_cast<long>(vals.size()) < count)
          vals.insert(round3(tests[k].c_star * std::exp(rng.uniform(-1.3, 1.3))));
        thresholds.assign(vals.begin(), vals.end());
      }
      for (int j = 0; j < 2; ++j) {
        DesignCell cell;
        cell.study_id = study_id(i);
        cell.test_id = tests[k].test_id;
        cell.group = j == 0 ? DiseaseGroup::NonDiseased : DiseaseGroup::Diseased;
        cell.thresholds = thresholds;
        cell.group_size = rint(gs_min, gs_max);
        design.push_back(std::move(cell));
      }
    }
  }

  // True state on the most permissive study-effect layout.
  ModelSpec spec;
  spec.variant = ModelVariant::AnovaPlus;
  spec.cov = CovarianceStructure::Reduced2;
  const Dataset skeleton = design_skeleton(tests, design);
  ParameterState truth = build_layout(skeleton, spec);
  const Layout& L = *truth.layout;

  const double sens_mu = cfg.get_double("truth", "sens_logit_mean", 0.9);
  const double sens_sd = cfg.get_double("truth", "sens_logit_sd", 0.6);
  const double fpf_mu = cfg.get_double("truth", "fpf_logit_mean", -2.2);
  const double fpf_sd = cfg.get_double("truth", "fpf_logit_sd", 0.5);
  const double scale_sd = cfg.get_double("truth", "scale_sd", 0.25);
  const double tau = cfg.get_double("truth", "tau", 0.35);
  const double eta_sd = cfg.get_double("truth", "eta_sd", 0.3);
  const double u_sd = cfg.get_double("truth", "u_sd", 0.15);

  std::ostringstream truth_csv;
  truth_csv.precision(10);
  truth_csv << "test,group,m,s\n";
  for (int k = 0; k < K; ++k) {
    const double m0 = rng.normal(fpf_mu, fpf_sd);
    const double m1 = rng.normal(sens_mu, sens_sd);
    truth.values[L.idx_m(k, 0)] = m0;
    truth.values[L.idx_m(k, 1)] = m1;
    double s0 = 0.0, s1 = 0.0;
    if (L.idx_s(k, 0) >= 0) {
      s0 = rng.normal(0.0, scale_sd);
      s1 = rng.normal(0.0, scale_sd);
      truth.values[L.idx_s(k, 0)] = s0;
      truth.values[L.idx_s(k, 1)] = s1;
    }
    truth_csv << tests[k].test_id << ",0," << m0 << ',' << s0 << '\n';
    truth_csv << tests[k].test_id << ",1," << m1 << ',' << s1 << '\n';
    for (int j = 0; j < 2; ++j) {
      if (L.idx_tau_m(k, j) >= 0) truth.values[L.idx_tau_m(k, j)] = tau;
      if (L.idx_tau_s(k, j) >= 0) truth.values[L.idx_tau_s(k, j)] = u_sd;
    }
  }
  for (std::size_t e = 0; e < L.pairs.size(); ++e)
    for (int j = 0; j < 2; ++j) {
      truth.values[L.idx_eps(static_cast<int>(e), j)] = rng.normal(0.0, tau);
      if (L.idx_u(static_cast<int>(e), j) >= 0)
        truth.values[L.idx_u(static_cast<int>(e), j)] = rng.normal(0.0, u_sd);
    }
  for (std::size_t i = 0; i < L.study_ids.size(); ++i)
    for (int j = 0; j < 2; ++j)
      truth.values[L.idx_eta(static_cast<int>(i), j)] = rng.normal(0.0, eta_sd);

  const Dataset simulated = simulate_dataset(spec, truth, design, seed ^ 0x5f3759df9e3779b9ULL);
  write_text_file(out, dataset_to_csv(simulated));
  if (!truth_out.empty()) write_text_file(truth_out, truth_csv.str());

  const NetworkGraph g = build_network_graph(simulated);
  std::cout << "wrote " << out << ": " << simulated.studies.size() << " studies, "
            << simulated.tests.size() << " tests, " << simulated.series.size()
            << " series, " << g.component_count << " component(s)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian network meta-analysis of diagnostic test accuracy with "
               "multi-threshold data"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // validate
  auto* validate = app.add_subcommand("validate", "check a dataset against a model variant");
  std::string data_path, variant_name = "metareg";
  validate->add_option("data", data_path, "evidence file")->required();
  validate->add_option("--variant", variant_name,
                       "independent | metareg | anova | anovaplus");

  // fit
  auto* fit = app.add_subcommand("fit", "fit one model and write all artifacts");
  CommonOpts fit_opts;
  bool resume = false;
  int extra_iters = 0;
  fit->add_option("--config", fit_opts.config_path, "run config")->required();
  fit->add_option("--seed", fit_opts.seed_override, "override sampler seed");
  fit->add_option("--threads", fit_opts.threads, "worker threads for chains");
  fit->add_option("--out", fit_opts.out_override, "override output directory");
  fit->add_flag("--quiet", fit_opts.quiet, "suppress progress output");
  fit->add_flag("--resume", resume, "extend the existing posterior container");
  fit->add_option("--extra-iters", extra_iters, "retained draws to append with --resume");

  // compare
  auto* compare = app.add_subcommand("compare", "fit the [compare.*] specs and rank by DIC");
  CommonOpts cmp_opts;
  compare->add_option("--config", cmp_opts.config_path, "run config")->required();
  compare->add_option("--seed", cmp_opts.seed_override, "override sampler seed");
  compare->add_option("--threads", cmp_opts.threads, "worker threads for chains");
  compare->add_option("--out", cmp_opts.out_override, "override output directory");
  compare->add_flag("--quiet", cmp_opts.quiet, "suppress progress output");

  // summarize
  auto* summarize = app.add_subcommand("summarize", "tables and figures from a container");
  std::string container_path, sum_out = "out";
  std::vector<std::string> sum_tests;
  int sum_grid = 100;
  summarize->add_option("--container", container_path, "posterior container")->required();
  summarize->add_option("--out", sum_out, "output directory");
  summarize->add_option("--tests", sum_tests, "subset of test ids")->delimiter(',');
  summarize->add_option("--grid", sum_grid, "threshold grid size");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic evidence network");
  std::string sim_config;
  simulate->add_option("--config", sim_config, "simulation config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(data_path, variant_name);
    if (fit->parsed()) return cmd_fit(fit_opts, resume, extra_iters);
    if (compare->parsed()) return cmd_compare(cmp_opts);
    if (summarize->parsed())
      return cmd_summarize(container_path, sum_out, sum_tests, sum_grid);
    if (simulate->parsed()) return cmd_simulate(sim_config);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const SamplingError& e) {
    std::cerr << "sampling failed: " << e.what() << '\n';
    return kExitSampling;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitParse;
  }
  return kExitOk;
}
