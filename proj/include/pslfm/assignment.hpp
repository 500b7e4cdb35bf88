#pragma once
// Treatment-assignment stage: probit model on covariates plus rotated factor
// loadings, propensity scores, and the stratified design expansion used by
// the outcome stage.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pslfm/errors.hpp"
#include "pslfm/panel.hpp"
#include "pslfm/rng.hpp"

namespace pslfm {

struct AssignmentParams {
  Eigen::VectorXd lambda_z;          // p
  Eigen::VectorXd lambda_gamma;      // r
  Eigen::VectorXd latent_utilities;  // N, sign matches ever-treated after each update

  static AssignmentParams zeros(int p, int r, int n) {
    AssignmentParams a;
    a.lambda_z = Eigen::VectorXd::Zero(p);
    a.lambda_gamma = Eigen::VectorXd::Zero(r);
    a.latent_utilities = Eigen::VectorXd::Zero(n);
    return a;
  }
};

struct NormalPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  static NormalPrior weakly_informative(int dim, double variance = 25.0) {
    return {Eigen::VectorXd::Zero(dim),
            Eigen::MatrixXd::Identity(dim, dim) * variance};
  }
};

struct StrataSpec {
  std::vector<double> thresholds;  // strictly increasing, interior to (0,1)

  int n_strata() const { return static_cast<int>(thresholds.size()) + 1; }

  void validate() const {
    double prev = 0.0;
    for (double q : thresholds) {
      if (!(q > 0.0 && q < 1.0)) throw DomainError("strata thresholds must lie in (0,1)");
      if (!(q > prev)) throw DomainError("strata thresholds must be strictly increasing");
      prev = q;
    }
  }
};

// Half-open intervals [q_{s-1}, q_s): a score equal to a threshold belongs to
// the stratum above it.  Returns 1..k.
inline int stratum_of(double score, const StrataSpec& spec) {
  int s = 1;
  for (double q : spec.thresholds)
    if (score >= q) ++s;
  return s;
}

enum class PsDesignKind { stratified, continuous };

// Expanded outcome-stage design g(Z_i, ps_i).
// stratified: row i is e_{stratum_i} (x) Z_i, dimension k*p
// continuous: row i is (Z_i', score_i), dimension p+1
struct PropensityState {
  Eigen::VectorXd scores;   // N
  Eigen::VectorXi stratum;  // N, in 1..k
  Eigen::MatrixXd design;   // N x design_dim
  PsDesignKind kind = PsDesignKind::stratified;
  int n_strata = 1;
  int block_dim = 0;  // p: covariate count per stratum block

  int design_dim() const { return static_cast<int>(design.cols()); }
};

// Linear index of the treatment-assignment model for one unit.  The DGP and
// the propensity computation share this expression so recomputed scores match
// stored ones exactly.
template <typename ZRow, typename GRow>
double assignment_index(const ZRow& z, const Eigen::VectorXd& lambda_z, const GRow& loadings,
                        const Eigen::VectorXd& lambda_gamma) {
  double v = z.dot(lambda_z);
  if (lambda_gamma.size() > 0) v += loadings.dot(lambda_gamma);
  return v;
}

inline Eigen::VectorXd compute_propensity(const PanelDataset& data,
                                          const Eigen::MatrixXd& rotated_loadings,
                                          const AssignmentParams& params) {
  const int n = data.n_units;
  Eigen::VectorXd scores(n);
  for (int i = 0; i < n; ++i)
    scores[i] = normal_cdf(assignment_index(data.covariates.row(i), params.lambda_z,
                                            rotated_loadings.row(i), params.lambda_gamma));
  return scores;
}

struct GaussianMoments {
  Eigen::MatrixXd precision;
  Eigen::VectorXd shift;  // conditional mean = precision^{-1} shift
};

// Conditional for (lambda_z, lambda_gamma) given latent utilities; conditions
// only on the assignment model (the approximate-Bayesian cut).
inline GaussianMoments assignment_coef_moments(const PanelDataset& data,
                                               const Eigen::MatrixXd& rotated_loadings,
                                               const Eigen::VectorXd& utilities,
                                               const NormalPrior& prior) {
  const int n = data.n_units;
  const int p = data.n_covariates();
  const int r = static_cast<int>(rotated_loadings.cols());
  const int dim = p + r;
  Eigen::MatrixXd prior_precision =
      prior.covariance.llt().solve(Eigen::MatrixXd::Identity(dim, dim));
  GaussianMoments mom;
  mom.precision = prior_precision;
  mom.shift = prior_precision * prior.mean;
  Eigen::VectorXd x(dim);
  for (int i = 0; i < n; ++i) {
    x.head(p) = data.covariates.row(i);
    if (r > 0) x.tail(r) = rotated_loadings.row(i);
    mom.precision.selfadjointView<Eigen::Lower>().rankUpdate(x);
    mom.shift += x * utilities[i];
  }
  mom.precision = Eigen::MatrixXd(mom.precision.selfadjointView<Eigen::Lower>());
  return mom;
}

// One Albert-Chib sweep: redraw latent utilities (truncated to the side the
// treatment group implies), then the coefficient block from its conjugate
// normal conditional.
inline void update_assignment_coefs(const PanelDataset& data,
                                    const Eigen::MatrixXd& rotated_loadings,
                                    AssignmentParams& params, const NormalPrior& prior,
                                    RngHandle& rng) {
  const int n = data.n_units;
  const int p = data.n_covariates();
  const int r = static_cast<int>(rotated_loadings.cols());
  for (int i = 0; i < n; ++i) {
    const double mean = assignment_index(data.covariates.row(i), params.lambda_z,
                                         rotated_loadings.row(i), params.lambda_gamma);
    const auto side =
        data.ever_treated[i] ? TruncationSide::positive : TruncationSide::negative;
    params.latent_utilities[i] = draw_truncated_normal(mean, side, rng);
  }
  const GaussianMoments mom =
      assignment_coef_moments(data, rotated_loadings, params.latent_utilities, prior);
  Eigen::VectorXd lambda;
  try {
    lambda = draw_mvnormal_canonical(mom.shift, mom.precision, rng);
  } catch (const NumericalError& e) {
    throw NumericalError("assignment design is collinear", e.smallest_pivot);
  }
  params.lambda_z = lambda.head(p);
  params.lambda_gamma = lambda.tail(r);
}

inline PropensityState build_strata_design(const PanelDataset& data,
                                           const Eigen::VectorXd& scores,
                                           const StrataSpec& spec,
                                           PsDesignKind kind = PsDesignKind::stratified) {
  spec.validate();
  const int n = data.n_units;
  const int p = data.n_covariates();
  PropensityState state;
  state.scores = scores;
  state.kind = kind;
  state.block_dim = p;
  state.stratum.resize(n);
  if (kind == PsDesignKind::continuous) {
    state.n_strata = 1;
    state.stratum.setOnes();
    state.design.resize(n, p + 1);
    state.design.leftCols(p) = data.covariates;
    state.design.col(p) = scores;
    return state;
  }
  const int k = spec.n_strata();
  state.n_strata = k;
  state.design = Eigen::MatrixXd::Zero(n, k * p);
  for (int i = 0; i < n; ++i) {
    const int s = stratum_of(scores[i], spec);
    state.stratum[i] = s;
    state.design.block(i, (s - 1) * p, 1, p) = data.covariates.row(i);
  }
  return state;
}

struct PositivityReport {
  double eps = 0.01;
  int n_low = 0;                      // scores below eps
  int n_high = 0;                     // scores above 1 - eps
  std::vector<int> stratum_treated;   // per stratum 1..k
  std::vector<int> stratum_control;
  std::vector<std::string> warnings;
};

// Overlap diagnostics; warns, never aborts.
inline PositivityReport positivity_report(const PanelDataset& data,
                                          const PropensityState& state, double eps = 0.01) {
  PositivityReport report;
  report.eps = eps;
  const int k = state.n_strata;
  report.stratum_treated.assign(k, 0);
  report.stratum_control.assign(k, 0);
  for (int i = 0; i < data.n_units; ++i) {
    if (state.scores.size() > i) {
      if (state.scores[i] < eps) ++report.n_low;
      if (state.scores[i] > 1.0 - eps) ++report.n_high;
    }
    const int s = state.stratum[i] - 1;
    if (data.ever_treated[i])
      ++report.stratum_treated[s];
    else
      ++report.stratum_control[s];
  }
  if (report.n_low > 0)
    report.warnings.push_back(std::to_string(report.n_low) + " unit(s) with score < " +
                              std::to_string(eps));
  if (report.n_high > 0)
    report.warnings.push_back(std::to_string(report.n_high) + " unit(s) with score > 1-" +
                              std::to_string(eps));
  return report;
}

}  // namespace pslfm
