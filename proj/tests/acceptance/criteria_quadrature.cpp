// Criterion 4: on the two-parameter reduction (one binary test, one study,
// random effects and covariance frozen) the MCMC marginals must match the
// posterior obtained by 2-D numerical quadrature: KS distance < 0.02 at 50k
// retained draws.

#include "acceptance.hpp"
#include "fixtures.hpp"

#include "dtanma/inference.hpp"
#include "dtanma/math.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace {

using namespace dtanma;

// Marginal cdf from a tensor-grid quadrature of the unnormalized posterior.
struct GridCdf {
  std::vector<double> grid, cdf;
  double operator()(double x) const {
    if (x <= grid.front()) return 0.0;
    if (x >= grid.back()) return 1.0;
    const auto it = std::upper_bound(grid.begin(), grid.end(), x);
    const std::size_t b = static_cast<std::size_t>(it - grid.begin());
    const double w = (x - grid[b - 1]) / (grid[b] - grid[b - 1]);
    return cdf[b - 1] + w * (cdf[b] - cdf[b - 1]);
  }
};

double ks(std::vector<double> draws, const GridCdf& cdf) {
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double d = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = cdf(draws[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

bool run(std::ostream& out) {
  const Dataset d = fixtures::minimal_binary();  // diseased 14/20, healthy 4/20
  ModelSpec spec;
  spec.variant = ModelVariant::MetaRegression;

  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.warmup_iters = 2000;
  cfg.keep_iters = 25000;  // 50k retained draws pooled
  cfg.seed = 424242;
  cfg.freeze = {"eps[", "Sigma"};
  const PosteriorSamples s = run_mcmc(d, spec, cfg);

  // 2-D quadrature over (m_0, m_1) of likelihood x prior; the frozen
  // coordinates contribute constants only.
  const int grid_n = 1201;
  const double lo = -9.0, hi = 9.0;
  std::vector<double> grid(grid_n);
  for (int i = 0; i < grid_n; ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / (grid_n - 1);
  auto loglik = [](double m, long x, long n) {
    const double p = inv_logit(m);
    return x * std::log(p) + (n - x) * std::log1p(-p) + normal_logpdf(m, 0.0, 1000.0);
  };
  Eigen::MatrixXd joint(grid_n, grid_n);
  double max_lp = -1e300;
  std::vector<double> l0(grid_n), l1(grid_n);
  for (int i = 0; i < grid_n; ++i) {
    l0[i] = loglik(grid[i], 4, 20);   // nondiseased margin
    l1[i] = loglik(grid[i], 14, 20);  // diseased margin
  }
  for (int i = 0; i < grid_n; ++i)
    for (int j = 0; j < grid_n; ++j) {
      joint(i, j) = l0[i] + l1[j];
      max_lp = std::max(max_lp, joint(i, j));
    }
  Eigen::MatrixXd w = (joint.array() - max_lp).exp();

  auto marginal_cdf = [&](bool over_rows) {
    GridCdf g;
    g.grid = grid;
    std::vector<double> mass(grid_n, 0.0);
    for (int i = 0; i < grid_n; ++i)
      for (int j = 0; j < grid_n; ++j) mass[over_rows ? i : j] += w(i, j);
    double total = 0.0;
    for (double m : mass) total += m;
    g.cdf.resize(grid_n);
    double acc = 0.0;
    for (int i = 0; i < grid_n; ++i) {
      // midpoint allocation keeps the cdf consistent with point masses
      acc += mass[i];
      g.cdf[i] = (acc - 0.5 * mass[i]) / total;
    }
    return g;
  };
  const GridCdf cdf0 = marginal_cdf(true);
  const GridCdf cdf1 = marginal_cdf(false);

  const Layout& L = *s.layout;
  const double ks0 = ks(s.pooled(L.idx_m(0, 0)), cdf0);
  const double ks1 = ks(s.pooled(L.idx_m(0, 1)), cdf1);
  out << "draws=" << s.total_kept() << " KS(fpf)=" << ks0 << " KS(sens)=" << ks1;
  return ks0 < 0.02 && ks1 < 0.02;
}

const acceptance::Register reg(4, "MCMC marginals vs 2-D quadrature on the reduction", run);

}  // namespace
