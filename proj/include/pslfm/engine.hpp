#pragma once
// Sampler orchestration: sweep ordering, burn-in/thinning, the model variants,
// estimand extraction, chain pooling, and convergence diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "pslfm/assignment.hpp"
#include "pslfm/errors.hpp"
#include "pslfm/outcome.hpp"
#include "pslfm/panel.hpp"
#include "pslfm/parallel.hpp"
#include "pslfm/rng.hpp"
#include "pslfm/rotation.hpp"

namespace pslfm {

struct McmcSchedule {
  int n_iter = 5000;
  int burn_in = 2500;
  int thin = 5;
  int n_chains = 2;
  std::uint64_t seed = 0;
  bool track_dynamic = true;      // per-horizon effects (off for Monte Carlo studies)
  bool track_coefs = true;        // coefficient traces
  bool track_delta_cells = false; // per-cell effect draws (memory-heavy)

  int n_keep() const { return (n_iter - burn_in) / thin; }

  void validate() const {
    if (n_iter <= 0 || thin <= 0 || n_chains <= 0 || burn_in < 0 || burn_in >= n_iter)
      throw PreconditionError("invalid MCMC schedule");
  }
};

enum class VariantKind { PSLFM, DMLFM, Oracle };

struct ModelVariant {
  VariantKind kind = VariantKind::PSLFM;
  int r_max = 5;
  StrataSpec strata{{0.3, 0.6}};
  PsDesignKind design_kind = PsDesignKind::stratified;
  std::optional<Eigen::VectorXd> oracle_scores;  // required for Oracle
  int oracle_r = 0;                              // required for Oracle
  double lambda_prior_var = 25.0;                // weakly informative by default
  ShrinkageHyper hyper;

  void validate(int n_units) const {
    strata.validate();
    if (r_max < 0) throw PreconditionError("r_max must be non-negative");
    if (kind == VariantKind::Oracle) {
      if (!oracle_scores || oracle_scores->size() != n_units)
        throw PreconditionError("Oracle variant needs one known score per unit");
      if (oracle_r <= 0) throw PreconditionError("Oracle variant needs the true factor count");
    }
  }
};

struct PosteriorDraws {
  Eigen::VectorXd att_overall;             // one entry per retained draw
  Eigen::MatrixXd att_dynamic;             // draws x horizons
  std::vector<int> horizons;               // event-time offsets, ascending
  std::vector<int> horizon_counts;         // cells contributing per horizon
  Eigen::MatrixXd propensity;              // draws x N (0x0 when absent)
  Eigen::MatrixXd placebo;                 // draws x placebo offsets (-s..-1)
  Eigen::VectorXd placebo_att;             // pooled over all masked cells
  int n_placebo_cells = 0;
  std::vector<std::string> coef_names;
  Eigen::MatrixXd coefs;                   // draws x coefficients
  std::vector<std::pair<int, int>> delta_cell_index;
  Eigen::MatrixXd delta_cells;             // draws x imputed cells (opt-in)
  bool few_draws_warning = false;
  int rotation_tie_count = 0;
};

// Chain failures carry the sweep index and step name.
struct ChainError : std::runtime_error {
  int sweep;
  std::string step;
  ChainError(int sweep_idx, const std::string& step_name, const std::string& what)
      : std::runtime_error("sweep " + std::to_string(sweep_idx) + ", step '" + step_name +
                           "': " + what),
        sweep(sweep_idx),
        step(step_name) {}
};

namespace detail {

// Warm start: factors/loadings from the SVD of the likelihood-cell outcome
// matrix (excluded cells filled with the unit's pre-treatment mean), scales at
// 0.1, sigma^2 at the sample variance of likelihood cells.
inline void initialize_state(const PanelDataset& data, const CellMask& mask, int r,
                             OutcomeParams& params) {
  const int n = data.n_units;
  const int t_max = data.n_periods;
  Eigen::MatrixXd filled(n, t_max);
  double grand = 0.0;
  long n_obs = 0;
  for (int i = 0; i < n; ++i) {
    double pre_mean = 0.0;
    for (int t = 0; t < mask.obs_len[i]; ++t) pre_mean += data.outcome(i, t);
    pre_mean /= std::max(1, mask.obs_len[i]);
    for (int t = 0; t < t_max; ++t)
      filled(i, t) = (t < mask.obs_len[i]) ? data.outcome(i, t) : pre_mean;
    for (int t = 0; t < mask.obs_len[i]; ++t) {
      grand += data.outcome(i, t);
      ++n_obs;
    }
  }
  grand /= std::max<long>(1, n_obs);

  double var = 0.0;
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < mask.obs_len[i]; ++t) {
      const double d = data.outcome(i, t) - grand;
      var += d * d;
    }
  params.sigma2 = (n_obs > 1) ? var / static_cast<double>(n_obs - 1) : 1.0;
  if (!(params.sigma2 > 0.0)) params.sigma2 = 1.0;

  params.omega_xi.setConstant(0.1);
  if (r == 0) return;
  params.omega_gamma.setConstant(0.1);

  filled.array() -= grand;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(filled, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const int r_top = std::min<int>(r, static_cast<int>(svd.singularValues().size()));
  const double sqrt_t = std::sqrt(static_cast<double>(t_max));
  for (int j = 0; j < r_top; ++j) {
    params.factors.col(j) = sqrt_t * svd.matrixV().col(j);
    params.gamma_tilde.col(j) =
        svd.matrixU().col(j) * (svd.singularValues()[j] / sqrt_t) / params.omega_gamma[j];
  }
}

}  // namespace detail

// One chain of the approximately-Bayesian sampler.  Per sweep: rotation ->
// assignment update + propensity -> design rebuild -> joint coefficient draw
// -> loadings -> time effects -> error variance -> shrinkage hyperparameters
// -> counterfactual imputation -> estimand accumulation.  The assignment
// stage is skipped under Oracle (known scores) and absent under DM-LFM.
inline PosteriorDraws run_chain(const PanelDataset& data, const ModelVariant& variant,
                                const McmcSchedule& schedule, RngHandle rng,
                                int placebo_periods = 0) {
  schedule.validate();
  variant.validate(data.n_units);
  if (placebo_periods < 0) throw PreconditionError("placebo period count must be >= 0");

  const int n = data.n_units;
  const int t_max = data.n_periods;
  const int p = data.n_covariates();
  const CellMask mask = CellMask::from_treatment(data, placebo_periods);

  const bool pslfm = variant.kind == VariantKind::PSLFM;
  const bool oracle = variant.kind == VariantKind::Oracle;
  const int r = oracle ? variant.oracle_r : variant.r_max;

  // Fixed design for the variants without a modeled assignment stage.
  PropensityState design;
  if (oracle) {
    design = build_strata_design(data, *variant.oracle_scores, variant.strata,
                                 variant.design_kind);
  } else if (variant.kind == VariantKind::DMLFM) {
    design = build_strata_design(data, Eigen::VectorXd::Constant(n, 0.5), StrataSpec{});
  } else {
    const int mz = (variant.design_kind == PsDesignKind::continuous)
                       ? p + 1
                       : variant.strata.n_strata() * p;
    design.design.resize(n, mz);  // dimensions only; rebuilt every sweep
    design.stratum = Eigen::VectorXi::Ones(n);
    design.block_dim = p;
    design.n_strata = (variant.design_kind == PsDesignKind::continuous)
                          ? 1
                          : variant.strata.n_strata();
    design.kind = variant.design_kind;
  }
  const int mz = design.design_dim();

  OutcomeParams params = OutcomeParams::zeros(mz, r, n, t_max);
  ShrinkageState shrink = ShrinkageState::ones(mz, r, variant.hyper);
  detail::initialize_state(data, mask, r, params);
  AssignmentParams asg = AssignmentParams::zeros(p, r, n);
  const NormalPrior lambda_prior =
      NormalPrior::weakly_informative(p + r, variant.lambda_prior_var);

  // imputed-cell bookkeeping (fixed across sweeps)
  std::vector<std::pair<int, int>> cells;
  std::vector<int> att_cells;  // indices into `cells` with D_it = 1
  for (int i = 0; i < n; ++i)
    for (int t = mask.obs_len[i]; t < t_max; ++t) {
      if (data.treatment(i, t) == 1) att_cells.push_back(static_cast<int>(cells.size()));
      cells.emplace_back(i, t);
    }
  const int n_cells = static_cast<int>(cells.size());

  // horizon groups: r >= 0 from imputed treated cells, r < 0 from pre-gaps
  int max_pre = 0, max_post = -1;
  for (int i = 0; i < n; ++i)
    if (data.ever_treated[i]) {
      max_pre = std::max(max_pre, data.adoption_time[i] - 1);
      max_post = std::max(max_post, t_max - data.adoption_time[i]);
    }
  std::vector<int> horizons;
  if (schedule.track_dynamic && max_post >= 0)
    for (int h = -max_pre; h <= max_post; ++h) horizons.push_back(h);
  std::vector<std::vector<int>> horizon_cells(horizons.size());         // into `cells`
  std::vector<std::vector<std::pair<int, int>>> horizon_pre(horizons.size());
  for (std::size_t hi = 0; hi < horizons.size(); ++hi) {
    const int h = horizons[hi];
    for (int i = 0; i < n; ++i) {
      if (!data.ever_treated[i]) continue;
      const int t = data.adoption_time[i] - 1 + h;  // 0-based period
      if (t < 0 || t >= t_max) continue;
      if (h >= 0) continue;  // filled from att cells below
      horizon_pre[hi].emplace_back(i, t);
    }
  }
  for (int c : att_cells) {
    const auto [i, t] = cells[c];
    const int h = t - (data.adoption_time[i] - 1);
    if (!horizons.empty()) horizon_cells[h + max_pre].push_back(c);
  }

  // placebo offsets -s..-1
  std::vector<std::vector<int>> placebo_cells(placebo_periods);
  int n_placebo_cells = 0;
  for (int c = 0; c < n_cells; ++c) {
    const auto [i, t] = cells[c];
    if (data.treatment(i, t) == 1) continue;
    const int offset = t - (data.adoption_time[i] - 1);  // in [-s, -1]
    placebo_cells[offset + placebo_periods].push_back(c);
    ++n_placebo_cells;
  }

  const int n_keep = schedule.n_keep();
  PosteriorDraws out;
  out.att_overall.resize(n_keep);
  out.horizons = horizons;
  out.horizon_counts.assign(horizons.size(), 0);
  for (std::size_t hi = 0; hi < horizons.size(); ++hi)
    out.horizon_counts[hi] = static_cast<int>(
        horizons[hi] >= 0 ? horizon_cells[hi].size() : horizon_pre[hi].size());
  out.att_dynamic.resize(n_keep, static_cast<int>(horizons.size()));
  out.n_placebo_cells = n_placebo_cells;
  if (placebo_periods > 0) {
    out.placebo.resize(n_keep, placebo_periods);
    out.placebo_att.resize(n_keep);
  }
  if (pslfm || oracle) out.propensity.resize(n_keep, n);
  if (schedule.track_coefs) {
    for (int j = 0; j < mz; ++j) out.coef_names.push_back("beta[" + std::to_string(j) + "]");
    for (int j = 0; j < mz; ++j)
      out.coef_names.push_back("omega_xi[" + std::to_string(j) + "]");
    for (int l = 0; l < r; ++l)
      out.coef_names.push_back("omega_gamma[" + std::to_string(l) + "]");
    out.coef_names.push_back("sigma2");
    if (pslfm) {
      for (int j = 0; j < p; ++j)
        out.coef_names.push_back("lambda_z[" + std::to_string(j) + "]");
      for (int l = 0; l < r; ++l)
        out.coef_names.push_back("lambda_gamma[" + std::to_string(l) + "]");
    }
    out.coefs.resize(n_keep, static_cast<int>(out.coef_names.size()));
  }
  if (schedule.track_delta_cells) {
    out.delta_cell_index = cells;
    out.delta_cells.resize(n_keep, n_cells);
  }
  out.few_draws_warning = n_keep < 100;

  Eigen::VectorXd scores;
  int kept = 0;
  std::string step = "init";
  for (int it = 0; it < schedule.n_iter; ++it) {
    try {
      if (pslfm) {
        step = "rotation";
        const RotationResult rot =
            rotate_to_normalization({params.gamma_tilde, params.factors, params.omega_gamma});
        if (rot.eigenvalue_tie) ++out.rotation_tie_count;
        step = "assignment";
        update_assignment_coefs(data, rot.loadings, asg, lambda_prior, rng);
        scores = compute_propensity(data, rot.loadings, asg);
        step = "strata design";
        design = build_strata_design(data, scores, variant.strata, variant.design_kind);
      }
      step = "coefficients";
      update_coefs_joint(data, mask, design, params, shrink, rng);
      step = "loadings";
      update_loadings(data, mask, design, params, rng);
      step = "time effects";
      update_time_effects(data, mask, design, params, rng);
      step = "sigma2";
      update_sigma2(data, mask, design, params, variant.hyper, rng);
      step = "shrinkage";
      update_local_shrinkage(params, shrink, rng);
      update_global_shrinkage(shrink, mz, r, rng);
      step = "imputation";
      const ImputedCells imp = impute_counterfactuals(data, mask, design, params, rng);

      step = "accumulation";
      const bool keep_draw =
          it >= schedule.burn_in && ((it - schedule.burn_in + 1) % schedule.thin) == 0;
      if (keep_draw && kept < n_keep) {
        double att_sum = 0.0;
        for (int c : att_cells) att_sum += imp.delta[c];
        out.att_overall[kept] = att_cells.empty() ? 0.0 : att_sum / att_cells.size();
        for (std::size_t hi = 0; hi < horizons.size(); ++hi) {
          double s = 0.0;
          int cnt = 0;
          if (horizons[hi] >= 0) {
            for (int c : horizon_cells[hi]) s += imp.delta[c];
            cnt = static_cast<int>(horizon_cells[hi].size());
          } else {
            // pre-treatment gap: observed outcome minus the fitted mean
            for (const auto& [i, t] : horizon_pre[hi])
              s += data.outcome(i, t) - fitted_mean(data, design, params, i, t);
            cnt = static_cast<int>(horizon_pre[hi].size());
          }
          out.att_dynamic(kept, static_cast<int>(hi)) = cnt ? s / cnt : 0.0;
        }
        if (placebo_periods > 0) {
          double pooled = 0.0;
          for (int off = 0; off < placebo_periods; ++off) {
            double s = 0.0;
            for (int c : placebo_cells[off]) {
              s += imp.delta[c];
              pooled += imp.delta[c];
            }
            out.placebo(kept, off) =
                placebo_cells[off].empty() ? 0.0 : s / placebo_cells[off].size();
          }
          out.placebo_att[kept] = n_placebo_cells ? pooled / n_placebo_cells : 0.0;
        }
        if (pslfm) out.propensity.row(kept) = scores;
        if (oracle) out.propensity.row(kept) = *variant.oracle_scores;
        if (schedule.track_coefs) {
          int col = 0;
          for (int j = 0; j < mz; ++j) out.coefs(kept, col++) = params.beta[j];
          for (int j = 0; j < mz; ++j) out.coefs(kept, col++) = params.omega_xi[j];
          for (int l = 0; l < r; ++l) out.coefs(kept, col++) = params.omega_gamma[l];
          out.coefs(kept, col++) = params.sigma2;
          if (pslfm) {
            for (int j = 0; j < p; ++j) out.coefs(kept, col++) = asg.lambda_z[j];
            for (int l = 0; l < r; ++l) out.coefs(kept, col++) = asg.lambda_gamma[l];
          }
        }
        if (schedule.track_delta_cells) out.delta_cells.row(kept) = imp.delta;
        ++kept;
      }
    } catch (const ChainError&) {
      throw;
    } catch (const std::exception& e) {
      throw ChainError(it, step, e.what());
    }
  }
  return out;
}

// Placebo re-fit: masks the last `placebo_periods` pre-treatment periods of
// every treated unit out of all likelihood sums and imputes them as
// pseudo-treated cells.
inline PosteriorDraws placebo_fit(const PanelDataset& data, const ModelVariant& variant,
                                  const McmcSchedule& schedule, int placebo_periods,
                                  RngHandle rng) {
  return run_chain(data, variant, schedule, rng, placebo_periods);
}

// ---------------------------------------------------------------------------
// Pooling, summaries, diagnostics
// ---------------------------------------------------------------------------

inline PosteriorDraws pool_chains(const std::vector<PosteriorDraws>& chains) {
  if (chains.empty()) throw PreconditionError("no chains to pool");
  PosteriorDraws out = chains.front();
  long total = 0;
  for (const auto& c : chains) total += c.att_overall.size();
  auto stack_vec = [&](auto getter) {
    Eigen::VectorXd v(total);
    long at = 0;
    for (const auto& c : chains) {
      const auto& src = getter(c);
      v.segment(at, src.size()) = src;
      at += src.size();
    }
    return v;
  };
  auto stack_mat = [&](auto getter) {
    const auto& first = getter(chains.front());
    Eigen::MatrixXd m(total, first.cols());
    long at = 0;
    for (const auto& c : chains) {
      const auto& src = getter(c);
      m.middleRows(at, src.rows()) = src;
      at += src.rows();
    }
    return m;
  };
  out.att_overall = stack_vec([](const PosteriorDraws& c) -> const Eigen::VectorXd& {
    return c.att_overall;
  });
  out.att_dynamic = stack_mat([](const PosteriorDraws& c) -> const Eigen::MatrixXd& {
    return c.att_dynamic;
  });
  if (out.propensity.size() > 0)
    out.propensity = stack_mat([](const PosteriorDraws& c) -> const Eigen::MatrixXd& {
      return c.propensity;
    });
  if (out.placebo_att.size() > 0) {
    out.placebo = stack_mat([](const PosteriorDraws& c) -> const Eigen::MatrixXd& {
      return c.placebo;
    });
    out.placebo_att = stack_vec([](const PosteriorDraws& c) -> const Eigen::VectorXd& {
      return c.placebo_att;
    });
  }
  if (out.coefs.size() > 0)
    out.coefs = stack_mat([](const PosteriorDraws& c) -> const Eigen::MatrixXd& {
      return c.coefs;
    });
  if (out.delta_cells.size() > 0)
    out.delta_cells = stack_mat([](const PosteriorDraws& c) -> const Eigen::MatrixXd& {
      return c.delta_cells;
    });
  for (const auto& c : chains)
    if (&c != &chains.front()) out.rotation_tie_count += c.rotation_tie_count;
  return out;
}

// Linear-interpolation quantile on a copy of the draws.
inline double quantile(const Eigen::VectorXd& draws, double prob) {
  std::vector<double> v(draws.data(), draws.data() + draws.size());
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

struct EstimandSummary {
  std::string name;
  bool is_dynamic = false;
  int horizon = 0;
  double mean = 0.0, sd = 0.0, lower = 0.0, upper = 0.0;
};

struct AttSummary {
  std::vector<EstimandSummary> rows;
  std::vector<int> omitted_horizons;  // horizons with no contributing cells
};

inline EstimandSummary summarize_trace(const std::string& name, const Eigen::VectorXd& draws,
                                       double level) {
  EstimandSummary s;
  s.name = name;
  const long n = draws.size();
  s.mean = draws.mean();
  if (n > 1) {
    const double ss = (draws.array() - s.mean).square().sum();
    s.sd = std::sqrt(ss / static_cast<double>(n - 1));
  }
  const double tail = 0.5 * (1.0 - level);
  s.lower = quantile(draws, tail);
  s.upper = quantile(draws, 1.0 - tail);
  return s;
}

// Posterior mean/sd and equal-tailed credible interval for the overall effect
// and every tracked horizon.
inline AttSummary summarize_att(const PosteriorDraws& draws, double level) {
  if (draws.att_overall.size() == 0) throw PreconditionError("no retained draws");
  if (!(level > 0.0 && level < 1.0)) throw PreconditionError("level must be in (0,1)");
  AttSummary out;
  out.rows.push_back(summarize_trace("att", draws.att_overall, level));
  for (std::size_t hi = 0; hi < draws.horizons.size(); ++hi) {
    if (draws.horizon_counts[hi] == 0) {
      out.omitted_horizons.push_back(draws.horizons[hi]);
      continue;
    }
    EstimandSummary s = summarize_trace(
        "att[" + std::to_string(draws.horizons[hi]) + "]",
        draws.att_dynamic.col(static_cast<int>(hi)), level);
    s.is_dynamic = true;
    s.horizon = draws.horizons[hi];
    out.rows.push_back(s);
  }
  return out;
}

struct TraceDiagnostic {
  std::string name;
  double rhat = 0.0;
  double ess = 0.0;
  bool flagged = false;     // rhat > 1.1
  bool degenerate = false;  // constant traces, rhat undefined
};

struct DiagnosticsReport {
  std::vector<TraceDiagnostic> traces;
  bool any_flagged = false;
};

namespace detail {

inline TraceDiagnostic split_rhat_ess(const std::string& name,
                                      const std::vector<Eigen::VectorXd>& chain_traces) {
  TraceDiagnostic d;
  d.name = name;
  long min_len = chain_traces.front().size();
  for (const auto& c : chain_traces) min_len = std::min<long>(min_len, c.size());
  const long n = min_len / 2;
  if (n < 2) {
    d.degenerate = true;
    d.rhat = std::numeric_limits<double>::quiet_NaN();
    return d;
  }
  std::vector<Eigen::VectorXd> seqs;
  for (const auto& c : chain_traces) {
    seqs.push_back(c.head(n));
    seqs.push_back(c.tail(n));
  }
  const int m = static_cast<int>(seqs.size());
  Eigen::VectorXd means(m), vars(m);
  for (int j = 0; j < m; ++j) {
    means[j] = seqs[j].mean();
    vars[j] = (seqs[j].array() - means[j]).square().sum() / static_cast<double>(n - 1);
  }
  const double grand = means.mean();
  const double w = vars.mean();
  const double b =
      static_cast<double>(n) * (means.array() - grand).square().sum() / (m - 1.0);
  const double var_plus = (n - 1.0) / n * w + b / n;
  if (!(w > 0.0) || !(var_plus > 0.0)) {
    d.degenerate = true;
    d.rhat = std::numeric_limits<double>::quiet_NaN();
    return d;
  }
  d.rhat = std::sqrt(var_plus / w);
  d.flagged = d.rhat > 1.1;

  // combined-chain autocorrelations, Geyer initial-positive truncation
  double tau = 1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (long lag = 1; lag + 1 < n; lag += 2) {
    double rho_pair = 0.0;
    for (int half = 0; half < 2; ++half) {
      const long l = lag + half;
      double acov = 0.0;
      for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (long i = 0; i + l < n; ++i)
          s += (seqs[j][i] - means[j]) * (seqs[j][i + l] - means[j]);
        acov += s / static_cast<double>(n);
      }
      acov /= m;
      rho_pair += 1.0 - (w - acov) / var_plus;
    }
    if (rho_pair < 0.0) break;
    rho_pair = std::min(rho_pair, prev_pair);  // enforce monotone decay
    prev_pair = rho_pair;
    tau += 2.0 * rho_pair;
  }
  d.ess = std::min(static_cast<double>(m) * n / tau, static_cast<double>(m) * n);
  return d;
}

}  // namespace detail

// Effective sample size and split R-hat per scalar estimand trace; flags
// any trace with R-hat > 1.1.
inline DiagnosticsReport diagnostics(const std::vector<PosteriorDraws>& chains,
                                     bool include_coefs = true) {
  if (chains.empty()) throw PreconditionError("diagnostics needs at least one chain");
  long total = 0;
  for (const auto& c : chains) total += c.att_overall.size();
  if (chains.size() < 2 && total < 200)
    throw PreconditionError("diagnostics needs >= 2 chains or >= 200 retained draws");

  DiagnosticsReport report;
  auto add = [&](const std::string& name, auto getter) {
    std::vector<Eigen::VectorXd> traces;
    for (const auto& c : chains) traces.push_back(getter(c));
    report.traces.push_back(detail::split_rhat_ess(name, traces));
    report.any_flagged |= report.traces.back().flagged;
  };
  add("att", [](const PosteriorDraws& c) { return c.att_overall; });
  const auto& first = chains.front();
  for (std::size_t hi = 0; hi < first.horizons.size(); ++hi) {
    if (first.horizon_counts[hi] == 0) continue;
    add("att[" + std::to_string(first.horizons[hi]) + "]",
        [hi](const PosteriorDraws& c) { return Eigen::VectorXd(c.att_dynamic.col(hi)); });
  }
  if (first.placebo_att.size() > 0)
    add("placebo_att", [](const PosteriorDraws& c) { return c.placebo_att; });
  if (include_coefs && first.coefs.size() > 0)
    for (std::size_t j = 0; j < first.coef_names.size(); ++j)
      add(first.coef_names[j],
          [j](const PosteriorDraws& c) { return Eigen::VectorXd(c.coefs.col(j)); });
  return report;
}

// Multi-chain fit: chains run in parallel on their own RNG streams
// (stream = chain index + 1) and are pooled in chain order.
struct FitResult {
  std::vector<PosteriorDraws> chains;
  PosteriorDraws pooled;
};

inline FitResult run_fit(const PanelDataset& data, const ModelVariant& variant,
                         const McmcSchedule& schedule, int placebo_periods = 0,
                         int n_threads = -1) {
  FitResult result;
  result.chains.resize(schedule.n_chains);
  parallel_for(
      schedule.n_chains,
      [&](int c) {
        result.chains[c] = run_chain(data, variant, schedule,
                                     RngHandle(schedule.seed, c + 1), placebo_periods);
      },
      n_threads);
  result.pooled = pool_chains(result.chains);
  return result;
}

}  // namespace pslfm
