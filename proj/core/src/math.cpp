#include "dtanma/math.hpp"
#include "dtanma/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dtanma {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
// Largest double below 1.
const double kOneMinus = std::nextafter(1.0, 0.0);
}  // namespace

double inv_logit(double x) {
  double p;
  if (x >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    p = e / (1.0 + e);
  }
  if (p < 1e-300) p = 1e-300;
  if (p > kOneMinus) p = kOneMinus;
  return p;
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("logit: p outside (0,1)");
  return std::log(p) - std::log1p(-p);
}

double log1mexp(double a) {
  if (a > 0.0) throw std::invalid_argument("log1mexp: argument must be <= 0");
  if (a == 0.0) return -kInf;
  if (a > -0.6931471805599453) return std::log(-std::expm1(a));
  return std::log1p(-std::exp(a));
}

double log_choose(double n, double k) {
  if (k < 0.0 || k > n) return -kInf;
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// AS 241 algorithm PPND16.
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
  const double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double normal_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean: empty sample");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sample_variance(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("sample_variance: need >= 2 values");
  const double m = mean(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return s / (static_cast<double>(values.size()) - 1.0);
}

double ks_statistic(std::vector<double> values, double (*cdf)(double)) {
  if (values.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double f = cdf(values[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- small-matrix helpers -------------------------------------------------

double mvn_logpdf_chol(const Eigen::VectorXd& v, const Eigen::MatrixXd& chol_lower) {
  const auto d = v.size();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) log_det += std::log(chol_lower(i, i));
  const Eigen::VectorXd z =
      chol_lower.triangularView<Eigen::Lower>().solve(v);
  return -0.5 * static_cast<double>(d) * kLog2Pi - log_det - 0.5 * z.squaredNorm();
}

double lmvgamma(int dim, double a) {
  double s = 0.25 * static_cast<double>(dim * (dim - 1)) * std::log(M_PI);
  for (int i = 0; i < dim; ++i) s += std::lgamma(a - 0.5 * static_cast<double>(i));
  return s;
}

double wishart_logpdf_identity_scale(const Eigen::MatrixXd& x, double dof) {
  const int d = static_cast<int>(x.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(x);
  if (llt.info() != Eigen::Success) return -kInf;
  double log_det = 0.0;
  for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return 0.5 * (dof - d - 1.0) * log_det - 0.5 * x.trace() -
         0.5 * dof * d * std::log(2.0) - lmvgamma(d, 0.5 * dof);
}

Eigen::MatrixXd wishart_draw(Rng& rng, const Eigen::MatrixXd& chol_scale, double dof) {
  const int d = static_cast<int>(chol_scale.rows());
  if (dof < static_cast<double>(d)) throw std::invalid_argument("wishart_draw: dof < dim");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(dof - static_cast<double>(i)));
    for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd la = chol_scale * a;
  return la * la.transpose();
}

int chol_param_count(int dim) { return dim * (dim + 1) / 2; }

Eigen::VectorXd spd_to_chol_params(const Eigen::MatrixXd& spd) {
  const int d = static_cast<int>(spd.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(spd);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("spd_to_chol_params: matrix not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  Eigen::VectorXd params(chol_param_count(d));
  for (int i = 0; i < d; ++i) params[i] = std::log(l(i, i));
  int k = d;
  for (int i = 1; i < d; ++i)
    for (int j = 0; j < i; ++j) params[k++] = l(i, j);
  return params;
}

Eigen::MatrixXd chol_params_to_lower(const Eigen::VectorXd& params, int dim) {
  if (params.size() != chol_param_count(dim))
    throw std::invalid_argument("chol_params_to_lower: size mismatch");
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) l(i, i) = std::exp(params[i]);
  int k = dim;
  for (int i = 1; i < dim; ++i)
    for (int j = 0; j < i; ++j) l(i, j) = params[k++];
  return l;
}

Eigen::MatrixXd chol_params_to_spd(const Eigen::VectorXd& params, int dim) {
  const Eigen::MatrixXd l = chol_params_to_lower(params, dim);
  return l * l.transpose();
}

double chol_params_log_jacobian(const Eigen::VectorXd& params, int dim) {
  // |d Sigma / d L| = 2^d prod L_ii^(d-i+1) (1-indexed), times prod L_ii for
  // the log-diagonal chain rule.
  double s = static_cast<double>(dim) * std::log(2.0);
  for (int i = 0; i < dim; ++i)
    s += static_cast<double>(dim - i + 1) * params[i];
  return s;
}

}  // namespace dtanma
