#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>
#include <vector>

namespace dtanma {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// ---- scalar helpers -------------------------------------------------------

// Numerically stable inverse logit. Saturates to the open unit interval so
// downstream log() calls stay finite.
double inv_logit(double x);
double logit(double p);

// log(1 - exp(a)) for a < 0; -inf at a == 0.
double log1mexp(double a);

// log of binomial coefficient C(n, k) via lgamma.
double log_choose(double n, double k);

// Standard normal quantile (Wichura's AS 241, double precision).
double normal_quantile(double p);

double normal_logpdf(double x, double mean, double var);

// Type-7 (linear interpolation) quantile of an unsorted sample.
double quantile(std::vector<double> values, double p);

double mean(const std::vector<double>& values);
double sample_variance(const std::vector<double>& values);

// One-sample Kolmogorov-Smirnov statistic against a cdf given as callable.
double ks_statistic(std::vector<double> values, double (*cdf)(double));

// FNV-1a, used for config hashes and data fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);

// ---- small-matrix helpers -------------------------------------------------

// log N(v | 0, Sigma) given the lower Cholesky factor of Sigma.
double mvn_logpdf_chol(const Eigen::VectorXd& v, const Eigen::MatrixXd& chol_lower);

// log Wishart(X | scale = I, dof) for an SPD matrix X.
double wishart_logpdf_identity_scale(const Eigen::MatrixXd& x, double dof);

// log multivariate gamma function.
double lmvgamma(int dim, double a);

// Draw from Wishart(scale, dof) via Bartlett decomposition; `chol_scale` is
// the lower Cholesky factor of the scale matrix.
class Rng;
Eigen::MatrixXd wishart_draw(Rng& rng, const Eigen::MatrixXd& chol_scale, double dof);

// Pack/unpack an SPD matrix to the unconstrained (log-diagonal Cholesky)
// vector: first d entries are log L(i,i), then L(i,j), i > j, row by row.
Eigen::VectorXd spd_to_chol_params(const Eigen::MatrixXd& spd);
Eigen::MatrixXd chol_params_to_lower(const Eigen::VectorXd& params, int dim);
Eigen::MatrixXd chol_params_to_spd(const Eigen::VectorXd& params, int dim);
int chol_param_count(int dim);

// log |d Sigma / d params| for the parametrization above.
double chol_params_log_jacobian(const Eigen::VectorXd& params, int dim);

}  // namespace dtanma
