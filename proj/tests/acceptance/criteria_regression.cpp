// Criterion 5 (replacement path): the review datasets behind the published
// tables are not bundled, so this criterion pins frozen-seed regression
// baselines on the bundled synthetic analogs of both networks (130 studies /
// 28 tests and 37 studies / 4 tests) instead, alongside structural checks
// of the network shapes.

#include "acceptance.hpp"

#include "dtanma/dataset.hpp"
#include "dtanma/inference.hpp"

#include <cmath>

namespace {

using namespace dtanma;

// Frozen after the first verified run; any numeric drift in the likelihood,
// priors, sampler, or rng shows up here.
constexpr double kHccDbar = 1118.5744551012203;
constexpr double kHccPv = 757.9457882882075;
constexpr double kHccDic = 1876.5202433894278;
constexpr double kProstateDbar = 300.8638423444055;
constexpr double kProstatePv = 187.68212568135567;
constexpr double kProstateDic = 488.54596802576117;
constexpr bool kBaselinesFrozen = true;

bool close(double a, double b, double rel) {
  return std::fabs(a - b) <= rel * std::max(1.0, std::fabs(b));
}

bool run(std::ostream& out) {
  const Dataset hcc = parse_dataset_file(acceptance::data_path("hcc_synth.csv"));
  const Dataset prostate = parse_dataset_file(acceptance::data_path("prostate_synth.csv"));

  // Shape checks: match the published network shapes.
  const NetworkGraph gh = build_network_graph(hcc);
  const NetworkGraph gp = build_network_graph(prostate);
  int hcc_cont = 0, prostate_cont = 0;
  for (const auto& t : hcc.tests) hcc_cont += t.is_continuous() ? 1 : 0;
  for (const auto& t : prostate.tests) prostate_cont += t.is_continuous() ? 1 : 0;
  if (hcc.studies.size() != 130 || hcc.tests.size() != 28 || hcc_cont != 4 ||
      gh.component_count != 1) {
    out << "hcc-analog shape wrong";
    return false;
  }
  if (prostate.studies.size() != 37 || prostate.tests.size() != 4 || prostate_cont != 3 ||
      gp.component_count != 1) {
    out << "prostate-analog shape wrong";
    return false;
  }
  if (!validate_for_model(hcc, gh, ModelVariant::AnovaPlus).ok() ||
      !validate_for_model(prostate, gp, ModelVariant::MetaRegression).ok()) {
    out << "bundled dataset fails validation";
    return false;
  }

  // Fixed-seed fits; frozen DIC decomposition.
  ModelSpec v1;  // hierarchical-variance variant with the reduced structure
  v1.variant = ModelVariant::AnovaPlus;
  v1.cov = CovarianceStructure::Reduced2;
  SamplerConfig hcc_cfg;
  hcc_cfg.chains = 1;
  hcc_cfg.warmup_iters = 800;
  hcc_cfg.keep_iters = 800;
  hcc_cfg.seed = 2027;
  const DicReport hcc_dic = dic(run_mcmc(hcc, v1, hcc_cfg));

  ModelSpec metareg;
  metareg.variant = ModelVariant::MetaRegression;
  SamplerConfig pr_cfg;
  pr_cfg.chains = 2;
  pr_cfg.warmup_iters = 1000;
  pr_cfg.keep_iters = 1000;
  pr_cfg.seed = 2027;
  const DicReport pr_dic = dic(run_mcmc(prostate, metareg, pr_cfg));

  out.precision(17);
  out << "hcc: Dbar=" << hcc_dic.mean_residual_deviance << " pV=" << hcc_dic.p_v
      << " DIC=" << hcc_dic.dic << "; prostate: Dbar=" << pr_dic.mean_residual_deviance
      << " pV=" << pr_dic.p_v << " DIC=" << pr_dic.dic;

  if (!kBaselinesFrozen) return false;  // refuse to pass until values are pinned
  const double rel = 1e-9;
  return close(hcc_dic.mean_residual_deviance, kHccDbar, rel) &&
         close(hcc_dic.p_v, kHccPv, rel) && close(hcc_dic.dic, kHccDic, rel) &&
         close(pr_dic.mean_residual_deviance, kProstateDbar, rel) &&
         close(pr_dic.p_v, kProstatePv, rel) && close(pr_dic.dic, kProstateDic, rel);
}

const acceptance::Register reg(5, "frozen-seed baselines on the bundled synthetic analogs",
                               run);

}  // namespace
