#pragma once
// Seedable RNG streams and the distribution primitives used by the sampler.
// All draws are produced from explicit algorithms (no std::<distribution>), so a
// given (seed, stream) pair yields a bit-identical sequence on every platform.

#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/Dense>

#include "pslfm/errors.hpp"

namespace pslfm {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256++ seeded from (seed, stream).
// Mixing rule: the four state words are consecutive splitmix64 outputs of
// seed ^ (stream + 1) * 0x9e3779b97f4a7c15.  Distinct streams from one master
// seed are independent for practical purposes; identical pairs replay exactly.
class RngHandle {
 public:
  explicit RngHandle(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    for (auto& w : state_) w = splitmix64(x);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on the open interval (0,1); never returns an exact 0 or 1.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_[4];
};

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

// Standard normal quantile, Wichura's AS 241 (PPND16).  |error| < 1e-15 on
// (0,1); saturates to +/-inf at the exact endpoints.
inline double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
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
  return (q < 0.0) ? -val : val;
}

inline double draw_normal(RngHandle& rng) { return normal_quantile(rng.uniform01()); }

// Draw from N(mean, precision^{-1}) via one Cholesky factorization.
inline Eigen::VectorXd draw_mvnormal(const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& precision, RngHandle& rng) {
  const Eigen::Index k = mean.size();
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(precision, Eigen::EigenvaluesOnly);
    throw NumericalError("precision matrix is not positive definite",
                         es.eigenvalues().minCoeff());
  }
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i) z[i] = draw_normal(rng);
  return mean + llt.matrixU().solve(z);
}

// Draw from N(precision^{-1} b, precision^{-1}); the canonical form every
// conjugate normal update reduces to.  Reuses a single factorization for the
// mean solve and the noise transform.
inline Eigen::VectorXd draw_mvnormal_canonical(const Eigen::VectorXd& b,
                                               const Eigen::MatrixXd& precision,
                                               RngHandle& rng) {
  const Eigen::Index k = b.size();
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(precision, Eigen::EigenvaluesOnly);
    throw NumericalError("precision matrix is not positive definite",
                         es.eigenvalues().minCoeff());
  }
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i) z[i] = draw_normal(rng);
  return llt.solve(b) + llt.matrixU().solve(z);
}

enum class TruncationSide { positive, negative };

namespace detail {

// Standard normal conditioned on z > a, for a >= 0 far in the tail.
// Exponential-rejection scheme of Robert (1995).
inline double tail_normal_above(double a, RngHandle& rng) {
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a - std::log(rng.uniform01()) / alpha;
    const double d = z - alpha;
    if (std::log(rng.uniform01()) <= -0.5 * d * d) return z;
  }
}

// z ~ N(0,1) | z > a.  Inverse CDF while the truncation point is moderate.
inline double std_normal_above(double a, RngHandle& rng) {
  if (a <= 5.0) {
    const double tail = normal_cdf(-a);  // P(z > a)
    const double p = 1.0 - (1.0 - rng.uniform01()) * tail;
    const double z = normal_quantile(p);
    return (z > a) ? z : a;  // guard against quantile rounding at the boundary
  }
  return tail_normal_above(a, rng);
}

}  // namespace detail

// Draw from N(mean, 1) conditioned on > 0 (positive) or <= 0 (negative).
inline double draw_truncated_normal(double mean, TruncationSide side, RngHandle& rng) {
  if (side == TruncationSide::positive) return mean + detail::std_normal_above(-mean, rng);
  return -(-mean + detail::std_normal_above(mean, rng));
}

// Inverse Gaussian IG(mu, lambda) via the Michael-Schucany-Haas transform,
// written in a cancellation-free form so the output stays strictly positive.
inline double draw_inverse_gaussian(double mu, double lambda, RngHandle& rng) {
  if (!(mu > 0.0) || !(lambda > 0.0))
    throw DomainError("inverse Gaussian requires mu > 0 and lambda > 0");
  const double nu = draw_normal(rng);
  const double w = mu * nu * nu;
  const double s = w + std::sqrt(w * (w + 4.0 * lambda));
  double x;
  if (s <= 0.0) {
    x = mu;  // nu == 0
  } else {
    x = 4.0 * lambda * mu * w / (s * s);
    if (!(x > 0.0)) x = std::numeric_limits<double>::min();
  }
  if (rng.uniform01() <= mu / (mu + x)) return x;
  return mu * mu / x;
}

// Gamma(shape, rate) with mean shape/rate, Marsaglia-Tsang squeeze.
inline double draw_gamma(double shape, double rate, RngHandle& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw DomainError("gamma requires shape > 0 and rate > 0");
  if (shape < 1.0) {
    const double boost = std::pow(rng.uniform01(), 1.0 / shape);
    return draw_gamma(shape + 1.0, rate, rng) * boost;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = draw_normal(rng);
    const double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    const double v = t * t * t;
    const double u = rng.uniform01();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v / rate;
  }
}

}  // namespace pslfm
