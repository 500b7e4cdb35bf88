#pragma once
// Data-generating process for the Monte Carlo evaluation and the replication
// harness producing bias / RMSE / sampling-SD / coverage summaries.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pslfm/csv.hpp"
#include "pslfm/engine.hpp"
#include "pslfm/errors.hpp"
#include "pslfm/panel.hpp"
#include "pslfm/rng.hpp"

namespace pslfm {

// Stratum-specific coefficient path: level_g + amp_g * sin(2*pi*t/T + phase_g),
// applied to every generated covariate.  The sinusoidal part is heterogeneous
// across the first two strata and absent from the third.
struct GroupTrend {
  std::vector<double> levels{1.0, 2.0, 3.0};
  std::vector<double> phases{0.0, 2.0943951023931953, 4.1887902047863905};  // 0, 2pi/3, 4pi/3
  std::vector<double> amplitudes{1.0, 1.0, 0.4};
};

struct DgpSpec {
  int n_units = 200;
  int n_periods = 50;
  int early_adopt_t = 45;
  int late_adopt_t = 48;
  StrataSpec thresholds{{0.3, 0.6}};
  Eigen::VectorXd lambda_z_true = Eigen::VectorXd::Ones(2);      // on generated covariates
  Eigen::VectorXd lambda_gamma_true = Eigen::VectorXd::Ones(2);  // on true loadings
  int n_factors_true = 2;
  double noise_sd = 1.0;
  double effect = 0.0;
  GroupTrend group_trend;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_units < 2 || n_periods < 2) throw DomainError("simulation needs N >= 2, T >= 2");
    if (!(early_adopt_t > 1 && early_adopt_t < late_adopt_t && late_adopt_t <= n_periods))
      throw DomainError("adoption periods must satisfy 1 < early < late <= T");
    thresholds.validate();
    if (lambda_gamma_true.size() != n_factors_true)
      throw DomainError("lambda_gamma_true must have one entry per true factor");
    const std::size_t k = static_cast<std::size_t>(thresholds.n_strata());
    if (group_trend.levels.size() < k || group_trend.phases.size() < k ||
        group_trend.amplitudes.size() < k)
      throw DomainError("group trend needs a level, phase, and amplitude per stratum");
  }
};

struct DgpTruth {
  Eigen::VectorXd scores;    // true propensity scores
  Eigen::VectorXi strata;    // stratum of each unit under the true scores
  Eigen::MatrixXd loadings;  // N x r_true
  Eigen::MatrixXd factors;   // T x r_true
  double att_true = 0.0;
};

// Draw a dataset.  RNG consumption order (fixed for reproducibility): per unit
// its covariates, loadings, and assignment noise; then the adopter shuffle;
// then factors (period-major); then outcome noise (unit-major).
inline std::pair<PanelDataset, DgpTruth> generate_dataset(const DgpSpec& spec, RngHandle& rng) {
  spec.validate();
  const int n = spec.n_units;
  const int t_max = spec.n_periods;
  const int nz = static_cast<int>(spec.lambda_z_true.size());
  const int r = spec.n_factors_true;

  PanelDataset data;
  data.n_units = n;
  data.n_periods = t_max;
  data.covariates = Eigen::MatrixXd::Ones(n, nz + 1);  // leading constant column
  DgpTruth truth;
  truth.loadings.resize(n, r);
  truth.scores.resize(n);
  truth.strata.resize(n);
  truth.att_true = spec.effect;

  // assignment model with a zero intercept on the constant column
  Eigen::VectorXd lambda_ext = Eigen::VectorXd::Zero(nz + 1);
  lambda_ext.tail(nz) = spec.lambda_z_true;

  std::vector<int> treated;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < nz; ++j) data.covariates(i, j + 1) = draw_normal(rng);
    for (int l = 0; l < r; ++l) truth.loadings(i, l) = draw_normal(rng);
    const double nu = draw_normal(rng);
    const double index = assignment_index(data.covariates.row(i), lambda_ext,
                                          truth.loadings.row(i), spec.lambda_gamma_true);
    truth.scores[i] = normal_cdf(index);
    truth.strata[i] = stratum_of(truth.scores[i], spec.thresholds);
    if (index + nu >= 0.0) treated.push_back(i);
  }
  if (treated.empty() || static_cast<int>(treated.size()) == n)
    throw DomainError("degenerate treatment draw: all units in one group");

  // random half of the treated adopt early, the rest late
  for (int i = static_cast<int>(treated.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform01() * (i + 1));
    std::swap(treated[i], treated[std::min(j, i)]);
  }
  const int n_early = static_cast<int>(treated.size()) / 2;
  data.adoption_time = Eigen::VectorXi::Constant(n, t_max + 1);
  for (std::size_t m = 0; m < treated.size(); ++m)
    data.adoption_time[treated[m]] =
        (static_cast<int>(m) < n_early) ? spec.early_adopt_t : spec.late_adopt_t;

  truth.factors.resize(t_max, r);
  for (int t = 0; t < t_max; ++t)
    for (int l = 0; l < r; ++l) truth.factors(t, l) = draw_normal(rng);

  data.treatment.resize(n, t_max);
  data.outcome.resize(n, t_max);
  data.ever_treated.resize(n);
  for (int i = 0; i < n; ++i) {
    data.ever_treated[i] = data.adoption_time[i] <= t_max ? 1 : 0;
    const int g = truth.strata[i] - 1;
    double z_sum = 0.0;
    for (int j = 0; j < nz; ++j) z_sum += data.covariates(i, j + 1);
    for (int t = 0; t < t_max; ++t) {
      const int d = (t + 1 >= data.adoption_time[i]) ? 1 : 0;
      data.treatment(i, t) = d;
      const double coef =
          spec.group_trend.levels[g] +
          spec.group_trend.amplitudes[g] *
              std::sin(2.0 * M_PI * (t + 1) / t_max + spec.group_trend.phases[g]);
      double y0 = z_sum * coef;
      for (int l = 0; l < r; ++l) y0 += truth.loadings(i, l) * truth.factors(t, l);
      y0 += spec.noise_sd * draw_normal(rng);
      data.outcome(i, t) = y0 + spec.effect * d;
    }
  }
  validate_staggered(data);
  return {std::move(data), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Replication harness
// ---------------------------------------------------------------------------

// Stream layout under one master seed: replication j draws its dataset from
// stream 256*(j+1) and chain c of its fit from stream 256*(j+1)+1+c.
inline std::uint64_t dataset_stream(int rep) { return 256ull * (rep + 1); }
inline std::uint64_t chain_stream(int rep, int chain) {
  return 256ull * (rep + 1) + 1 + chain;
}

struct RepEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct RepOutcome {
  int rep = 0;
  double point = 0.0, lower = 0.0, upper = 0.0, truth = 0.0;
  bool covered = false;
  bool failed = false;
  std::string error;
};

struct McStudyResult {
  std::vector<RepOutcome> replications;
  int n_failed = 0;
  int n_used = 0;
  double bias = 0.0, rmse = 0.0, sampling_sd = 0.0, coverage = 0.0;
};

// point estimate + interval for one simulated dataset
using RepEstimator =
    std::function<RepEstimate(const PanelDataset&, const DgpTruth&, int rep)>;

namespace detail {

// bias, rmse, population sampling SD and coverage over non-failed reps, in
// replication order (deterministic accumulation)
inline void finalize_study(McStudyResult& res) {
  double sum_err = 0.0, sum_sq = 0.0, sum_pt = 0.0, sum_pt_sq = 0.0;
  int n = 0, n_cov = 0;
  for (const auto& rep : res.replications) {
    if (rep.failed) continue;
    const double err = rep.point - rep.truth;
    sum_err += err;
    sum_sq += err * err;
    sum_pt += rep.point;
    sum_pt_sq += rep.point * rep.point;
    if (rep.covered) ++n_cov;
    ++n;
  }
  res.n_used = n;
  if (n == 0) return;
  res.bias = sum_err / n;
  res.rmse = std::sqrt(sum_sq / n);
  const double mean_pt = sum_pt / n;
  res.sampling_sd = std::sqrt(std::max(0.0, sum_pt_sq / n - mean_pt * mean_pt));
  res.coverage = static_cast<double>(n_cov) / n;
}

}  // namespace detail

inline McStudyResult run_study_with(const DgpSpec& spec, const RepEstimator& estimator,
                                    int n_reps, std::uint64_t master_seed,
                                    int n_threads = -1) {
  if (n_reps < 2) throw PreconditionError("a study needs at least 2 replications");
  McStudyResult res;
  res.replications.resize(n_reps);
  parallel_for(
      n_reps,
      [&](int rep) {
        RepOutcome& out = res.replications[rep];
        out.rep = rep;
        out.truth = spec.effect;
        try {
          RngHandle data_rng(master_seed, dataset_stream(rep));
          const auto [data, truth] = generate_dataset(spec, data_rng);
          const RepEstimate est = estimator(data, truth, rep);
          out.point = est.point;
          out.lower = est.lower;
          out.upper = est.upper;
          out.covered = est.lower <= out.truth && out.truth <= est.upper;
        } catch (const std::exception& e) {
          out.failed = true;
          out.error = e.what();
        }
      },
      n_threads);
  for (const auto& rep : res.replications)
    if (rep.failed) ++res.n_failed;
  if (res.n_failed * 20 > n_reps)
    throw DomainError("study aborted: " + std::to_string(res.n_failed) + " of " +
                      std::to_string(n_reps) + " replications failed (> 5%)");
  detail::finalize_study(res);
  return res;
}

// Fit-based estimator: posterior mean of the overall effect with an
// equal-tailed interval, chains seeded from (master seed, rep, chain).
inline RepEstimator model_estimator(const ModelVariant& base, const McmcSchedule& schedule,
                                    std::uint64_t master_seed, double level = 0.95) {
  return [base, schedule, master_seed, level](const PanelDataset& data, const DgpTruth& truth,
                                              int rep) {
    ModelVariant variant = base;
    if (variant.kind == VariantKind::Oracle) {
      variant.oracle_scores = truth.scores;
      if (variant.oracle_r <= 0) variant.oracle_r = static_cast<int>(truth.loadings.cols());
    }
    McmcSchedule sched = schedule;
    sched.track_dynamic = false;
    sched.track_coefs = false;
    std::vector<PosteriorDraws> chains(sched.n_chains);
    for (int c = 0; c < sched.n_chains; ++c)
      chains[c] =
          run_chain(data, variant, sched, RngHandle(master_seed, chain_stream(rep, c)));
    const PosteriorDraws pooled = pool_chains(chains);
    const EstimandSummary s = summarize_trace("att", pooled.att_overall, level);
    return RepEstimate{s.mean, s.lower, s.upper};
  };
}

inline McStudyResult run_study(const DgpSpec& spec, const ModelVariant& variant,
                               const McmcSchedule& schedule, int n_reps,
                               std::uint64_t master_seed, double level = 0.95,
                               int n_threads = -1) {
  return run_study_with(spec, model_estimator(variant, schedule, master_seed, level), n_reps,
                        master_seed, n_threads);
}

// ---------------------------------------------------------------------------
// Propensity recovery
// ---------------------------------------------------------------------------

struct PropensityRecovery {
  double correlation = 0.0;
  double rmse_ps = 0.0;
  bool degenerate = false;  // zero-variance scores, correlation undefined
};

inline PropensityRecovery propensity_recovery_check(const PanelDataset& data,
                                                    const DgpTruth& truth,
                                                    const PosteriorDraws& draws) {
  if (draws.propensity.size() == 0)
    throw PreconditionError("posterior draws carry no propensity trace");
  const Eigen::VectorXd est = draws.propensity.colwise().mean();
  PropensityRecovery out;
  out.rmse_ps = std::sqrt((est - truth.scores).squaredNorm() / data.n_units);
  const Eigen::VectorXd ce = est.array() - est.mean();
  const Eigen::VectorXd ct = truth.scores.array() - truth.scores.mean();
  const double denom = std::sqrt(ce.squaredNorm() * ct.squaredNorm());
  if (denom <= 0.0) {
    out.degenerate = true;
    out.correlation = std::numeric_limits<double>::quiet_NaN();
  } else {
    out.correlation = ce.dot(ct) / denom;
  }
  return out;
}

// Posterior-mean scores from a probit on observed covariates only (no
// loadings): the comparison baseline for propensity recovery.
inline Eigen::VectorXd covariates_only_scores(const PanelDataset& data, int n_iter,
                                              int burn_in, std::uint64_t seed,
                                              double prior_var = 25.0) {
  const int n = data.n_units;
  const int p = data.n_covariates();
  RngHandle rng(seed, 0);
  AssignmentParams asg = AssignmentParams::zeros(p, 0, n);
  const Eigen::MatrixXd no_loadings(n, 0);
  const NormalPrior prior = NormalPrior::weakly_informative(p, prior_var);
  Eigen::VectorXd mean_scores = Eigen::VectorXd::Zero(n);
  int kept = 0;
  for (int it = 0; it < n_iter; ++it) {
    update_assignment_coefs(data, no_loadings, asg, prior, rng);
    if (it >= burn_in) {
      mean_scores += compute_propensity(data, no_loadings, asg);
      ++kept;
    }
  }
  if (kept == 0) throw PreconditionError("probit baseline kept no draws");
  return mean_scores / kept;
}

// ---------------------------------------------------------------------------
// Study CSV export / ingestion
// ---------------------------------------------------------------------------

// One row per replication plus aggregate footer rows.
inline void write_study_csv(const McStudyResult& res, const std::string& path) {
  CsvWriter out(path);
  out.row({"rep", "point", "lower", "upper", "truth", "covered", "failed"});
  for (const auto& rep : res.replications)
    out.row({std::to_string(rep.rep + 1), fmt_g17(rep.point), fmt_g17(rep.lower),
             fmt_g17(rep.upper), fmt_g17(rep.truth), rep.covered ? "1" : "0",
             rep.failed ? "1" : "0"});
  out.row({"bias", fmt_g17(res.bias), "", "", "", "", ""});
  out.row({"rmse", fmt_g17(res.rmse), "", "", "", "", ""});
  out.row({"sampling_sd", fmt_g17(res.sampling_sd), "", "", "", "", ""});
  out.row({"coverage", fmt_g17(res.coverage), "", "", "", "", ""});
  out.close();
}

// Ingest externally produced per-replication estimates (same schema as
// write_study_csv; footer rows are recomputed, not read).
inline McStudyResult load_study_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int rep_col = table.require_column("rep");
  const int point_col = table.require_column("point");
  const int lower_col = table.require_column("lower");
  const int upper_col = table.require_column("upper");
  const int truth_col = table.require_column("truth");
  const int failed_col = table.column("failed");
  McStudyResult res;
  for (const auto& row : table.rows) {
    char* end = nullptr;
    const long rep_id = std::strtol(row[rep_col].c_str(), &end, 10);
    if (end == row[rep_col].c_str() || *end != '\0') continue;  // aggregate footer
    RepOutcome out;
    out.rep = static_cast<int>(rep_id - 1);
    out.point = parse_double(row[point_col], "point");
    out.lower = parse_double(row[lower_col], "lower");
    out.upper = parse_double(row[upper_col], "upper");
    out.truth = parse_double(row[truth_col], "truth");
    out.failed = failed_col >= 0 && row[failed_col] == "1";
    out.covered = out.lower <= out.truth && out.truth <= out.upper;
    res.replications.push_back(out);
  }
  for (const auto& rep : res.replications)
    if (rep.failed) ++res.n_failed;
  detail::finalize_study(res);
  return res;
}

}  // namespace pslfm
