#pragma once
// Conditional-posterior updates of the outcome model: joint coefficient block,
// loadings, time effects, shrinkage hierarchy, error variance, and
// counterfactual imputation.  Only likelihood cells (untreated, unmasked)
// ever enter a sum here; treated cells appear solely in impute_counterfactuals.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pslfm/assignment.hpp"
#include "pslfm/errors.hpp"
#include "pslfm/panel.hpp"
#include "pslfm/rng.hpp"

namespace pslfm {

struct OutcomeParams {
  Eigen::VectorXd beta;         // design_dim
  Eigen::VectorXd omega_xi;     // design_dim, scales of the time random effects
  Eigen::VectorXd omega_gamma;  // r, scales of the loadings
  Eigen::MatrixXd xi_tilde;     // T x design_dim, normalized time effects
  Eigen::MatrixXd gamma_tilde;  // N x r, normalized loadings
  Eigen::MatrixXd factors;      // T x r
  double sigma2 = 1.0;

  int design_dim() const { return static_cast<int>(beta.size()); }
  int n_factors() const { return static_cast<int>(omega_gamma.size()); }

  static OutcomeParams zeros(int design_dim, int r, int n_units, int n_periods) {
    OutcomeParams p;
    p.beta = Eigen::VectorXd::Zero(design_dim);
    p.omega_xi = Eigen::VectorXd::Zero(design_dim);
    p.omega_gamma = Eigen::VectorXd::Zero(r);
    p.xi_tilde = Eigen::MatrixXd::Zero(n_periods, design_dim);
    p.gamma_tilde = Eigen::MatrixXd::Zero(n_units, r);
    p.factors = Eigen::MatrixXd::Zero(n_periods, r);
    p.sigma2 = 1.0;
    return p;
  }
};

struct ShrinkageHyper {
  double a1 = 0.001, a2 = 0.001;  // kappa_beta^2
  double c1 = 0.001, c2 = 0.001;  // kappa_xi^2
  double k1 = 0.001, k2 = 0.001;  // kappa_gamma^2
  double e1 = 0.001, e2 = 0.001;  // sigma^{-2}
};

struct ShrinkageState {
  Eigen::VectorXd tau2_beta;   // design_dim
  Eigen::VectorXd tau2_xi;     // design_dim
  Eigen::VectorXd tau2_gamma;  // r
  double kappa2_beta = 1.0, kappa2_xi = 1.0, kappa2_gamma = 1.0;
  ShrinkageHyper hyper;

  static ShrinkageState ones(int design_dim, int r, ShrinkageHyper h = {}) {
    ShrinkageState s;
    s.tau2_beta = Eigen::VectorXd::Ones(design_dim);
    s.tau2_xi = Eigen::VectorXd::Ones(design_dim);
    s.tau2_gamma = Eigen::VectorXd::Ones(r);
    s.hyper = h;
    return s;
  }
};

// Which leading periods of each unit enter the likelihood.  Without placebo
// masking this is exactly the untreated prefix t < A_i; placebo masking
// additionally drops the last `placebo_periods` pre-treatment periods of
// every eventually-treated unit.
struct CellMask {
  Eigen::VectorXi obs_len;
  int placebo_periods = 0;

  long n_obs() const { return obs_len.cast<long>().sum(); }

  static CellMask from_treatment(const PanelDataset& data, int placebo_periods = 0) {
    CellMask m;
    m.placebo_periods = placebo_periods;
    m.obs_len.resize(data.n_units);
    for (int i = 0; i < data.n_units; ++i) {
      int len = data.control_periods(i);
      if (data.ever_treated[i]) len -= placebo_periods;
      if (len < 1)
        throw PreconditionError("placebo window leaves unit " + std::to_string(i + 1) +
                                " with no likelihood cells");
      m.obs_len[i] = len;
    }
    return m;
  }
};

namespace detail {

// z_tilde_i' v without materializing the sparse design row.
inline double design_dot(const PropensityState& design, const PanelDataset& data, int i,
                         const Eigen::VectorXd& v) {
  if (design.kind == PsDesignKind::stratified) {
    const int p = design.block_dim;
    const int base = (design.stratum[i] - 1) * p;
    double s = 0.0;
    for (int j = 0; j < p; ++j) s += data.covariates(i, j) * v[base + j];
    return s;
  }
  return design.design.row(i).dot(v);
}

// z_tilde_i' (w (.) row_t of m): the time-random-effect contribution.
inline double design_dot_scaled(const PropensityState& design, const PanelDataset& data, int i,
                                const Eigen::VectorXd& w, const Eigen::MatrixXd& m, int t) {
  if (design.kind == PsDesignKind::stratified) {
    const int p = design.block_dim;
    const int base = (design.stratum[i] - 1) * p;
    double s = 0.0;
    for (int j = 0; j < p; ++j) s += data.covariates(i, j) * w[base + j] * m(t, base + j);
    return s;
  }
  const int mz = design.design_dim();
  double s = 0.0;
  for (int j = 0; j < mz; ++j) s += design.design(i, j) * w[j] * m(t, j);
  return s;
}

inline double factor_term(const OutcomeParams& params, int i, int t) {
  double s = 0.0;
  for (int l = 0; l < params.n_factors(); ++l)
    s += params.omega_gamma[l] * params.gamma_tilde(i, l) * params.factors(t, l);
  return s;
}

}  // namespace detail

// Full fitted mean of the outcome model for cell (i, t).
inline double fitted_mean(const PanelDataset& data, const PropensityState& design,
                          const OutcomeParams& params, int i, int t) {
  return detail::design_dot(design, data, i, params.beta) +
         detail::design_dot_scaled(design, data, i, params.omega_xi, params.xi_tilde, t) +
         detail::factor_term(params, i, t);
}

// ---------------------------------------------------------------------------
// Joint (beta, omega_xi, omega_gamma) block
// ---------------------------------------------------------------------------

// Conditional moments of the stacked coefficient vector given everything else:
// precision = sigma^{-2} sum z z' + Diag(1/tau^2), shift = sigma^{-2} sum z y,
// with regressor z_it = (z_tilde_i, z_tilde_i (.) xi_t, gamma_i (.) f_t) over
// likelihood cells.
inline GaussianMoments coef_joint_moments(const PanelDataset& data, const CellMask& mask,
                                          const PropensityState& design,
                                          const OutcomeParams& params,
                                          const ShrinkageState& shrink) {
  const int mz = design.design_dim();
  const int r = params.n_factors();
  const int m = 2 * mz + r;
  const double inv_s2 = 1.0 / params.sigma2;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);

  if (design.kind == PsDesignKind::stratified) {
    // the design row has one active block; accumulate in compact form per
    // stratum and scatter once at the end
    const int p = design.block_dim;
    const int k = design.n_strata;
    const int q = 2 * p + r;
    std::vector<Eigen::MatrixXd> acc_s(k, Eigen::MatrixXd::Zero(q, q));
    std::vector<Eigen::VectorXd> b_s(k, Eigen::VectorXd::Zero(q));
    Eigen::VectorXd c(q);
    for (int t = 0; t < data.n_periods; ++t) {
      for (int i = 0; i < data.n_units; ++i) {
        if (mask.obs_len[i] <= t) continue;
        const int s = design.stratum[i] - 1;
        const int base = s * p;
        for (int j = 0; j < p; ++j) {
          c[j] = data.covariates(i, j);
          c[p + j] = data.covariates(i, j) * params.xi_tilde(t, base + j);
        }
        for (int l = 0; l < r; ++l)
          c[2 * p + l] = params.gamma_tilde(i, l) * params.factors(t, l);
        acc_s[s].selfadjointView<Eigen::Lower>().rankUpdate(c);
        b_s[s] += c * data.outcome(i, t);
      }
    }
    for (int s = 0; s < k; ++s) {
      auto target = [&](int j) {
        if (j < p) return s * p + j;
        if (j < 2 * p) return mz + s * p + (j - p);
        return 2 * mz + (j - 2 * p);
      };
      for (int cj = 0; cj < q; ++cj) {
        b[target(cj)] += b_s[s][cj];
        for (int ci = cj; ci < q; ++ci) acc(target(ci), target(cj)) += acc_s[s](ci, cj);
      }
    }
  } else {
    Eigen::VectorXd z(m);
    for (int t = 0; t < data.n_periods; ++t) {
      for (int i = 0; i < data.n_units; ++i) {
        if (mask.obs_len[i] <= t) continue;
        for (int j = 0; j < mz; ++j) {
          z[j] = design.design(i, j);
          z[mz + j] = design.design(i, j) * params.xi_tilde(t, j);
        }
        for (int l = 0; l < r; ++l)
          z[2 * mz + l] = params.gamma_tilde(i, l) * params.factors(t, l);
        acc.selfadjointView<Eigen::Lower>().rankUpdate(z);
        b += z * data.outcome(i, t);
      }
    }
  }

  GaussianMoments mom;
  mom.precision = Eigen::MatrixXd(acc.selfadjointView<Eigen::Lower>()) * inv_s2;
  for (int j = 0; j < mz; ++j) mom.precision(j, j) += 1.0 / shrink.tau2_beta[j];
  for (int j = 0; j < mz; ++j) mom.precision(mz + j, mz + j) += 1.0 / shrink.tau2_xi[j];
  for (int l = 0; l < r; ++l) mom.precision(2 * mz + l, 2 * mz + l) += 1.0 / shrink.tau2_gamma[l];
  mom.shift = b * inv_s2;
  return mom;
}

inline void update_coefs_joint(const PanelDataset& data, const CellMask& mask,
                               const PropensityState& design, OutcomeParams& params,
                               const ShrinkageState& shrink, RngHandle& rng) {
  const GaussianMoments mom = coef_joint_moments(data, mask, design, params, shrink);
  Eigen::VectorXd theta;
  try {
    theta = draw_mvnormal_canonical(mom.shift, mom.precision, rng);
  } catch (const NumericalError& e) {
    throw NumericalError("coefficient block precision is singular", e.smallest_pivot);
  }
  const int mz = design.design_dim();
  const int r = params.n_factors();
  params.beta = theta.head(mz);
  params.omega_xi = theta.segment(mz, mz);
  params.omega_gamma = theta.tail(r);
}

// ---------------------------------------------------------------------------
// Loadings (outcome model only: the approximate-Bayesian cut)
// ---------------------------------------------------------------------------

namespace detail {

inline GaussianMoments loading_moments_with(const Eigen::MatrixXd& scaled_factors,
                                            const PanelDataset& data, const CellMask& mask,
                                            const PropensityState& design,
                                            const OutcomeParams& params, int unit) {
  const int r = params.n_factors();
  const double inv_s2 = 1.0 / params.sigma2;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(r, r);
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(r);
  Eigen::VectorXd f(r);
  for (int t = 0; t < mask.obs_len[unit]; ++t) {
    f = scaled_factors.row(t);
    const double resid =
        data.outcome(unit, t) - design_dot(design, data, unit, params.beta) -
        design_dot_scaled(design, data, unit, params.omega_xi, params.xi_tilde, t);
    acc.selfadjointView<Eigen::Lower>().rankUpdate(f);
    shift += f * resid;
  }
  GaussianMoments mom;
  mom.precision = Eigen::MatrixXd(acc.selfadjointView<Eigen::Lower>()) * inv_s2 +
                  Eigen::MatrixXd::Identity(r, r);
  mom.shift = shift * inv_s2;
  return mom;
}

}  // namespace detail

inline GaussianMoments loading_moments(const PanelDataset& data, const CellMask& mask,
                                       const PropensityState& design,
                                       const OutcomeParams& params, int unit) {
  const Eigen::MatrixXd scaled_factors =
      params.factors * params.omega_gamma.asDiagonal();
  return detail::loading_moments_with(scaled_factors, data, mask, design, params, unit);
}

inline void update_loadings(const PanelDataset& data, const CellMask& mask,
                            const PropensityState& design, OutcomeParams& params,
                            RngHandle& rng) {
  if (params.n_factors() == 0) return;
  const Eigen::MatrixXd scaled_factors =
      params.factors * params.omega_gamma.asDiagonal();
  for (int i = 0; i < data.n_units; ++i) {
    const GaussianMoments mom =
        detail::loading_moments_with(scaled_factors, data, mask, design, params, i);
    params.gamma_tilde.row(i) = draw_mvnormal_canonical(mom.shift, mom.precision, rng);
  }
}

// ---------------------------------------------------------------------------
// Time effects (xi_t, f_t) per period
// ---------------------------------------------------------------------------

inline GaussianMoments time_effect_moments(const PanelDataset& data, const CellMask& mask,
                                           const PropensityState& design,
                                           const OutcomeParams& params, int period) {
  const int mz = design.design_dim();
  const int r = params.n_factors();
  const int w = mz + r;
  const double inv_s2 = 1.0 / params.sigma2;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(w, w);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(w);

  if (design.kind == PsDesignKind::stratified) {
    const int p = design.block_dim;
    const int k = design.n_strata;
    const int q = p + r;
    std::vector<Eigen::MatrixXd> acc_s(k, Eigen::MatrixXd::Zero(q, q));
    std::vector<Eigen::VectorXd> b_s(k, Eigen::VectorXd::Zero(q));
    Eigen::VectorXd a(q);
    for (int i = 0; i < data.n_units; ++i) {
      if (mask.obs_len[i] <= period) continue;
      const int s = design.stratum[i] - 1;
      const int base = s * p;
      for (int j = 0; j < p; ++j) a[j] = data.covariates(i, j) * params.omega_xi[base + j];
      for (int l = 0; l < r; ++l) a[p + l] = params.omega_gamma[l] * params.gamma_tilde(i, l);
      const double u = data.outcome(i, period) - detail::design_dot(design, data, i, params.beta);
      acc_s[s].selfadjointView<Eigen::Lower>().rankUpdate(a);
      b_s[s] += a * u;
    }
    for (int s = 0; s < k; ++s) {
      auto target = [&](int j) { return (j < p) ? s * p + j : mz + (j - p); };
      for (int cj = 0; cj < q; ++cj) {
        b[target(cj)] += b_s[s][cj];
        for (int ci = cj; ci < q; ++ci) acc(target(ci), target(cj)) += acc_s[s](ci, cj);
      }
    }
  } else {
    Eigen::VectorXd a(w);
    for (int i = 0; i < data.n_units; ++i) {
      if (mask.obs_len[i] <= period) continue;
      for (int j = 0; j < mz; ++j) a[j] = design.design(i, j) * params.omega_xi[j];
      for (int l = 0; l < r; ++l) a[mz + l] = params.omega_gamma[l] * params.gamma_tilde(i, l);
      const double u = data.outcome(i, period) - detail::design_dot(design, data, i, params.beta);
      acc.selfadjointView<Eigen::Lower>().rankUpdate(a);
      b += a * u;
    }
  }

  GaussianMoments mom;
  mom.precision = Eigen::MatrixXd(acc.selfadjointView<Eigen::Lower>()) * inv_s2 +
                  Eigen::MatrixXd::Identity(w, w);
  mom.shift = b * inv_s2;
  return mom;
}

inline void update_time_effects(const PanelDataset& data, const CellMask& mask,
                                const PropensityState& design, OutcomeParams& params,
                                RngHandle& rng) {
  const int mz = design.design_dim();
  const int r = params.n_factors();
  for (int t = 0; t < data.n_periods; ++t) {
    const GaussianMoments mom = time_effect_moments(data, mask, design, params, t);
    const Eigen::VectorXd psi = draw_mvnormal_canonical(mom.shift, mom.precision, rng);
    params.xi_tilde.row(t) = psi.head(mz);
    if (r > 0) params.factors.row(t) = psi.tail(r);
  }
}

// ---------------------------------------------------------------------------
// Shrinkage hierarchy
// ---------------------------------------------------------------------------

struct IgParams {
  double mean;
  double shape;
};

// tau^{-2} | coef, kappa^2 ~ IG(sqrt(kappa^2/coef^2), kappa^2); coefficients
// shrunk (numerically) to zero are floored so the mean stays finite.
inline IgParams local_shrinkage_params(double coef, double kappa2) {
  const double floored = std::max(std::fabs(coef), 1e-10);
  return {std::sqrt(kappa2) / floored, kappa2};
}

inline void update_local_shrinkage(const OutcomeParams& params, ShrinkageState& shrink,
                                   RngHandle& rng) {
  auto redraw = [&rng](double coef, double kappa2) {
    const IgParams ig = local_shrinkage_params(coef, kappa2);
    const double tau2 = 1.0 / draw_inverse_gaussian(ig.mean, ig.shape, rng);
    // keep scales finite; a runaway draw would poison the kappa^2 rate and the
    // prior precision of empty design blocks
    return std::clamp(tau2, 1e-12, 1e8);
  };
  for (int j = 0; j < params.design_dim(); ++j)
    shrink.tau2_beta[j] = redraw(params.beta[j], shrink.kappa2_beta);
  for (int j = 0; j < params.design_dim(); ++j)
    shrink.tau2_xi[j] = redraw(params.omega_xi[j], shrink.kappa2_xi);
  for (int l = 0; l < params.n_factors(); ++l)
    shrink.tau2_gamma[l] = redraw(params.omega_gamma[l], shrink.kappa2_gamma);
}

struct GammaParams {
  double shape;
  double rate;
};

inline GammaParams global_shrinkage_params(int dim, double tau2_sum, double h1, double h2) {
  return {dim + h1, 0.5 * tau2_sum + h2};
}

// The shape uses the actual coefficient count of the expanded design.
inline void update_global_shrinkage(ShrinkageState& shrink, int n_design_coefs, int n_factors,
                                    RngHandle& rng) {
  const auto& h = shrink.hyper;
  GammaParams g = global_shrinkage_params(n_design_coefs, shrink.tau2_beta.sum(), h.a1, h.a2);
  shrink.kappa2_beta = draw_gamma(g.shape, g.rate, rng);
  g = global_shrinkage_params(n_design_coefs, shrink.tau2_xi.sum(), h.c1, h.c2);
  shrink.kappa2_xi = draw_gamma(g.shape, g.rate, rng);
  if (n_factors > 0) {
    g = global_shrinkage_params(n_factors, shrink.tau2_gamma.sum(), h.k1, h.k2);
    shrink.kappa2_gamma = draw_gamma(g.shape, g.rate, rng);
  }
}

// ---------------------------------------------------------------------------
// Error variance
// ---------------------------------------------------------------------------

// sigma^{-2} ~ Gamma(N_obs/2 + e1, residual_ss/2 + e2) over likelihood cells.
inline GammaParams sigma2_posterior_params(const PanelDataset& data, const CellMask& mask,
                                           const PropensityState& design,
                                           const OutcomeParams& params,
                                           const ShrinkageHyper& hyper) {
  double ss = 0.0;
  for (int i = 0; i < data.n_units; ++i) {
    for (int t = 0; t < mask.obs_len[i]; ++t) {
      const double resid = data.outcome(i, t) - fitted_mean(data, design, params, i, t);
      ss += resid * resid;
    }
  }
  return {0.5 * static_cast<double>(mask.n_obs()) + hyper.e1, 0.5 * ss + hyper.e2};
}

inline void update_sigma2(const PanelDataset& data, const CellMask& mask,
                          const PropensityState& design, OutcomeParams& params,
                          const ShrinkageHyper& hyper, RngHandle& rng) {
  const GammaParams g = sigma2_posterior_params(data, mask, design, params, hyper);
  params.sigma2 = 1.0 / draw_gamma(g.shape, g.rate, rng);
}

// ---------------------------------------------------------------------------
// Counterfactual imputation
// ---------------------------------------------------------------------------

struct ImputedCells {
  std::vector<std::pair<int, int>> cells;  // (unit, period), unit-major order
  std::vector<char> is_treated;            // 0 for placebo-masked cells
  Eigen::VectorXd y0;
  Eigen::VectorXd delta;  // observed y minus imputed y0
};

inline ImputedCells impute_counterfactuals(const PanelDataset& data, const CellMask& mask,
                                           const PropensityState& design,
                                           const OutcomeParams& params, RngHandle& rng) {
  ImputedCells out;
  for (int i = 0; i < data.n_units; ++i)
    for (int t = mask.obs_len[i]; t < data.n_periods; ++t) {
      out.cells.emplace_back(i, t);
      out.is_treated.push_back(data.treatment(i, t) == 1 ? 1 : 0);
    }
  const int m = static_cast<int>(out.cells.size());
  out.y0.resize(m);
  out.delta.resize(m);
  const double sd = std::sqrt(params.sigma2);
  for (int c = 0; c < m; ++c) {
    const auto [i, t] = out.cells[c];
    out.y0[c] = fitted_mean(data, design, params, i, t) + sd * draw_normal(rng);
    out.delta[c] = data.outcome(i, t) - out.y0[c];
  }
  return out;
}

}  // namespace pslfm
