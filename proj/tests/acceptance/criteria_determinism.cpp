// Criterion 6: identical config and seed give byte-identical posterior
// containers across repeated runs and across thread counts 1 and 8.

#include "acceptance.hpp"

#include "dtanma/container.hpp"
#include "dtanma/dataset.hpp"
#include "dtanma/inference.hpp"

#include <filesystem>
#include <fstream>

namespace {

using namespace dtanma;

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

bool run(std::ostream& out) {
  const Dataset d = parse_dataset_file(acceptance::data_path("prostate_synth.csv"));
  ModelSpec spec;
  spec.variant = ModelVariant::MetaRegression;
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.warmup_iters = 300;
  cfg.keep_iters = 300;
  cfg.seed = 20250810;

  const auto dir = std::filesystem::temp_directory_path() / "dtanma_acceptance_c6";
  std::filesystem::create_directories(dir);

  cfg.threads = 1;
  save_posterior((dir / "a.bin").string(), run_mcmc(d, spec, cfg));
  cfg.threads = 8;
  save_posterior((dir / "b.bin").string(), run_mcmc(d, spec, cfg));
  save_posterior((dir / "c.bin").string(), run_mcmc(d, spec, cfg));

  const std::string a = file_bytes((dir / "a.bin").string());
  const std::string b = file_bytes((dir / "b.bin").string());
  const std::string c = file_bytes((dir / "c.bin").string());
  std::filesystem::remove_all(dir);

  out << "container bytes=" << a.size();
  if (a.empty()) return false;
  if (a != b) {
    out << "; threads 1 vs 8 differ";
    return false;
  }
  if (b != c) {
    out << "; repeated runs differ";
    return false;
  }
  out << ", identical across runs and thread counts";
  return true;
}

const acceptance::Register reg(6, "byte-identical containers across runs and threads", run);

}  // namespace
