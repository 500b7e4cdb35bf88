#pragma once
// Test-only reference implementations.  These stay independent of the library
// code paths they check: conjugate moments via explicit dense algebra and
// matrix inverses, distribution functions via textbook series/continued
// fractions, and a plain Kolmogorov-Smirnov statistic.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

// Regularized lower incomplete gamma P(a, x), series + continued fraction.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p domain");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1.0 - a;
  double c = 1e308;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

// Gamma(shape, rate) CDF.
inline double gamma_cdf(double x, double shape, double rate) {
  if (x <= 0.0) return 0.0;
  return gamma_p(shape, rate * x);
}

// Inverse Gaussian IG(mu, lambda) CDF.
inline double inverse_gaussian_cdf(double x, double mu, double lambda) {
  if (x <= 0.0) return 0.0;
  const double s = std::sqrt(lambda / x);
  return std_normal_cdf(s * (x / mu - 1.0)) +
         std::exp(2.0 * lambda / mu) * std_normal_cdf(-s * (x / mu + 1.0));
}

// N(mean, 1) truncated to > 0 (positive = true) or <= 0.
inline double truncated_normal_cdf(double x, double mean, bool positive) {
  if (positive) {
    if (x <= 0.0) return 0.0;
    const double tail = std_normal_cdf(mean);  // P(X > 0)
    return (std_normal_cdf(x - mean) - std_normal_cdf(-mean)) / tail;
  }
  if (x > 0.0) return 1.0;
  return std_normal_cdf(x - mean) / std_normal_cdf(-mean);
}

// Two-sided KS statistic of draws against cdf.
template <typename Cdf>
double ks_statistic(std::vector<double> draws, Cdf&& cdf) {
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double d = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = cdf(draws[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(f - static_cast<double>(i + 1) / n));
  }
  return d;
}

// critical value at significance alpha for large n
inline double ks_critical(double alpha, std::size_t n) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Conjugate normal moments computed the long way: mean = (P0 + X'X/s2)^{-1}
// (P0 m0 + X'y/s2), explicit inverse, no factorizations shared with the
// library.
struct DenseNormalPosterior {
  Eigen::MatrixXd covariance;
  Eigen::VectorXd mean;
};

inline DenseNormalPosterior conjugate_normal(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             double noise_var,
                                             const Eigen::MatrixXd& prior_precision,
                                             const Eigen::VectorXd& prior_mean) {
  const Eigen::MatrixXd precision = prior_precision + x.transpose() * x / noise_var;
  DenseNormalPosterior post;
  post.covariance = precision.inverse();
  post.mean = post.covariance * (prior_precision * prior_mean + x.transpose() * y / noise_var);
  return post;
}

}  // namespace oracle
