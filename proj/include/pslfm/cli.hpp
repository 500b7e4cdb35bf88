#pragma once
// Command implementations behind the pslfm binary: simulate, fit, montecarlo,
// summarize.  Key-value config file with flag overrides; all outputs are CSV
// or plain text and are byte-identical across runs with the same seed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pslfm/csv.hpp"
#include "pslfm/engine.hpp"
#include "pslfm/errors.hpp"
#include "pslfm/panel.hpp"
#include "pslfm/simulation.hpp"

namespace pslfm {

struct RunConfig {
  std::string command;
  // I/O
  std::string dataset;
  std::string out = ".";
  std::uint64_t seed = 20260811;
  int verbosity = 1;
  // model variant
  std::string variant = "pslfm";  // pslfm | dmlfm | oracle; montecarlo: comma list
  std::vector<double> thresholds{0.3, 0.6};
  int rmax = 5;
  std::string ps_design = "strata";  // strata | continuous
  double lambda_prior_var = 25.0;
  std::string oracle_scores;  // CSV with a true_score column, unit order
  int oracle_r = 0;
  // MCMC schedule
  int iters = 5000;
  int burnin = 2500;
  int thin = 5;
  int chains = 2;
  double level = 0.95;
  int placebo = 0;
  // DGP
  int units = 200;
  int periods = 50;
  int early_adopt = 45;
  int late_adopt = 48;
  double effect = 0.0;
  double noise_sd = 1.0;
  // montecarlo
  int reps = 100;
  // summarize
  std::vector<std::string> fit_dirs;
  int bins = 20;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(s);
  while (std::getline(ss, field, ','))
    if (!field.empty()) out.push_back(field);
  return out;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& f : split_list(s)) out.push_back(parse_double(f, "list value"));
  return out;
}

// Plain `key = value` lines; '#' starts a comment.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos)
      throw SchemaError("config line " + std::to_string(line_no) + " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "dataset") cfg.dataset = value;
    else if (key == "out") cfg.out = value;
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "verbosity") cfg.verbosity = std::stoi(value);
    else if (key == "variant") cfg.variant = value;
    else if (key == "thresholds") cfg.thresholds = parse_double_list(value);
    else if (key == "rmax") cfg.rmax = std::stoi(value);
    else if (key == "ps_design") cfg.ps_design = value;
    else if (key == "lambda_prior_var") cfg.lambda_prior_var = parse_double(value, key);
    else if (key == "oracle_scores") cfg.oracle_scores = value;
    else if (key == "oracle_r") cfg.oracle_r = std::stoi(value);
    else if (key == "iters") cfg.iters = std::stoi(value);
    else if (key == "burnin") cfg.burnin = std::stoi(value);
    else if (key == "thin") cfg.thin = std::stoi(value);
    else if (key == "chains") cfg.chains = std::stoi(value);
    else if (key == "level") cfg.level = parse_double(value, key);
    else if (key == "placebo") cfg.placebo = std::stoi(value);
    else if (key == "units") cfg.units = std::stoi(value);
    else if (key == "periods") cfg.periods = std::stoi(value);
    else if (key == "early_adopt") cfg.early_adopt = std::stoi(value);
    else if (key == "late_adopt") cfg.late_adopt = std::stoi(value);
    else if (key == "effect") cfg.effect = parse_double(value, key);
    else if (key == "noise_sd") cfg.noise_sd = parse_double(value, key);
    else if (key == "reps") cfg.reps = std::stoi(value);
    else if (key == "fits") cfg.fit_dirs = split_list(value);
    else if (key == "bins") cfg.bins = std::stoi(value);
    else throw SchemaError("unknown config key '" + key + "'");
  }
}

namespace detail {

inline VariantKind parse_variant(const std::string& name) {
  if (name == "pslfm") return VariantKind::PSLFM;
  if (name == "dmlfm") return VariantKind::DMLFM;
  if (name == "oracle") return VariantKind::Oracle;
  throw DomainError("unknown variant '" + name + "' (expected pslfm|dmlfm|oracle)");
}

inline std::string variant_label(VariantKind kind) {
  switch (kind) {
    case VariantKind::PSLFM: return "PS-LFM";
    case VariantKind::DMLFM: return "DM-LFM";
    case VariantKind::Oracle: return "Oracle";
  }
  return "?";
}

inline PsDesignKind parse_design(const std::string& name) {
  if (name == "strata") return PsDesignKind::stratified;
  if (name == "continuous") return PsDesignKind::continuous;
  throw DomainError("unknown ps_design '" + name + "' (expected strata|continuous)");
}

inline ModelVariant variant_from_config(const RunConfig& cfg, const std::string& name) {
  ModelVariant v;
  v.kind = parse_variant(name);
  v.r_max = cfg.rmax;
  v.strata = StrataSpec{cfg.thresholds};
  v.design_kind = parse_design(cfg.ps_design);
  v.lambda_prior_var = cfg.lambda_prior_var;
  v.oracle_r = cfg.oracle_r;
  return v;
}

inline McmcSchedule schedule_from_config(const RunConfig& cfg) {
  McmcSchedule s;
  s.n_iter = cfg.iters;
  s.burn_in = cfg.burnin;
  s.thin = cfg.thin;
  s.n_chains = cfg.chains;
  s.seed = cfg.seed;
  return s;
}

inline DgpSpec dgp_from_config(const RunConfig& cfg) {
  DgpSpec spec;
  spec.n_units = cfg.units;
  spec.n_periods = cfg.periods;
  spec.early_adopt_t = cfg.early_adopt;
  spec.late_adopt_t = cfg.late_adopt;
  spec.thresholds = StrataSpec{cfg.thresholds};
  spec.effect = cfg.effect;
  spec.noise_sd = cfg.noise_sd;
  spec.seed = cfg.seed;
  return spec;
}

inline std::string out_path(const RunConfig& cfg, const std::string& file) {
  std::filesystem::create_directories(cfg.out);
  return (std::filesystem::path(cfg.out) / file).string();
}

// Any column that is not unit/time/y/d is treated as a covariate.
inline ColumnMap auto_column_map(const std::string& path) {
  const CsvTable table = read_csv(path);
  ColumnMap map;
  for (const auto& name : table.header)
    if (name != map.unit && name != map.time && name != map.outcome && name != map.treatment)
      map.covariates.push_back(name);
  return map;
}

inline Eigen::VectorXd load_scores_csv(const std::string& path, int n_units) {
  const CsvTable table = read_csv(path);
  const int col = table.require_column("true_score");
  if (static_cast<int>(table.rows.size()) != n_units)
    throw SchemaError("score file has " + std::to_string(table.rows.size()) +
                      " rows, expected " + std::to_string(n_units));
  Eigen::VectorXd scores(n_units);
  for (int i = 0; i < n_units; ++i) scores[i] = parse_double(table.rows[i][col], "true_score");
  return scores;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate: write a synthetic panel plus the generating truth
// ---------------------------------------------------------------------------

inline void cmd_simulate(const RunConfig& cfg) {
  const DgpSpec spec = detail::dgp_from_config(cfg);
  RngHandle rng(cfg.seed, 0);
  const auto [data, truth] = generate_dataset(spec, rng);
  write_panel_csv(data, detail::out_path(cfg, "panel.csv"), /*skip_leading_constant=*/true);
  CsvWriter tr(detail::out_path(cfg, "truth.csv"));
  tr.row({"unit", "true_score", "stratum", "att_true"});
  for (int i = 0; i < data.n_units; ++i)
    tr.row({std::to_string(i + 1), fmt_g17(truth.scores[i]),
            std::to_string(truth.strata[i]), fmt_g17(truth.att_true)});
  tr.close();
  if (cfg.verbosity > 0)
    std::cout << "simulate: wrote panel.csv (" << data.n_units * data.n_periods
              << " rows) and truth.csv to " << cfg.out << "\n";
}

// ---------------------------------------------------------------------------
// fit: run the sampler on a dataset and write posterior summaries
// ---------------------------------------------------------------------------

inline void cmd_fit(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw PreconditionError("fit needs a dataset path");
  const ColumnMap map = detail::auto_column_map(cfg.dataset);
  const PanelDataset data = load_panel_csv(cfg.dataset, map);
  const ValidationReport vr = validate_staggered(data);

  ModelVariant variant = detail::variant_from_config(cfg, cfg.variant);
  if (variant.kind == VariantKind::Oracle) {
    if (cfg.oracle_scores.empty())
      throw PreconditionError("oracle variant needs --oracle-scores");
    variant.oracle_scores = detail::load_scores_csv(cfg.oracle_scores, data.n_units);
    if (variant.oracle_r <= 0)
      throw PreconditionError("oracle variant needs --oracle-r");
  }
  const McmcSchedule sched = detail::schedule_from_config(cfg);
  const FitResult fit = run_fit(data, variant, sched, cfg.placebo);
  const AttSummary att = summarize_att(fit.pooled, cfg.level);
  const std::string label = detail::variant_label(variant.kind);

  CsvWriter est(detail::out_path(cfg, "estimands.csv"));
  est.row({"variant", "estimand", "horizon", "mean", "sd", "lower", "upper"});
  for (const auto& row : att.rows)
    est.row({label, row.is_dynamic ? "att_r" : "att",
             row.is_dynamic ? std::to_string(row.horizon) : "", fmt_g17(row.mean),
             fmt_g17(row.sd), fmt_g17(row.lower), fmt_g17(row.upper)});
  est.close();

  if (fit.pooled.propensity.size() > 0) {
    CsvWriter ps(detail::out_path(cfg, "propensity.csv"));
    ps.row({"unit", "mean", "sd"});
    const Eigen::VectorXd mean = fit.pooled.propensity.colwise().mean();
    for (int i = 0; i < data.n_units; ++i) {
      const double sd = std::sqrt(
          (fit.pooled.propensity.col(i).array() - mean[i]).square().sum() /
          std::max<long>(1, fit.pooled.propensity.rows() - 1));
      ps.row({std::to_string(i + 1), fmt_g17(mean[i]), fmt_g17(sd)});
    }
    ps.close();
  }

  if (fit.pooled.coefs.size() > 0) {
    CsvWriter co(detail::out_path(cfg, "coefficients.csv"));
    co.row({"name", "mean", "sd", "lower", "upper"});
    for (std::size_t j = 0; j < fit.pooled.coef_names.size(); ++j) {
      const EstimandSummary s = summarize_trace(
          fit.pooled.coef_names[j], fit.pooled.coefs.col(static_cast<int>(j)), cfg.level);
      co.row({s.name, fmt_g17(s.mean), fmt_g17(s.sd), fmt_g17(s.lower), fmt_g17(s.upper)});
    }
    co.close();
  }

  if (cfg.placebo > 0) {
    CsvWriter pl(detail::out_path(cfg, "placebo.csv"));
    pl.row({"offset", "mean", "sd", "lower", "upper"});
    for (int off = 0; off < cfg.placebo; ++off) {
      const EstimandSummary s = summarize_trace(
          "placebo", fit.pooled.placebo.col(off), cfg.level);
      pl.row({std::to_string(off - cfg.placebo), fmt_g17(s.mean), fmt_g17(s.sd),
              fmt_g17(s.lower), fmt_g17(s.upper)});
    }
    const EstimandSummary pooled = summarize_trace("placebo", fit.pooled.placebo_att, cfg.level);
    pl.row({"pooled", fmt_g17(pooled.mean), fmt_g17(pooled.sd), fmt_g17(pooled.lower),
            fmt_g17(pooled.upper)});
    pl.close();
  }

  // diagnostics: convergence stats, overlap, structural notes
  const DiagnosticsReport diag = diagnostics(fit.chains);
  std::ofstream dg(detail::out_path(cfg, "diagnostics.txt"));
  if (!dg) throw IoError("cannot write diagnostics.txt");
  dg << "variant " << label << ", chains " << sched.n_chains << ", iters " << sched.n_iter
     << ", burnin " << sched.burn_in << ", thin " << sched.thin << ", seed " << sched.seed
     << "\n";
  dg << "treated units " << vr.n_treated_units << ", control units " << vr.n_control_units
     << ", first adoption period " << vr.t0_earliest_adoption << "\n";
  if (fit.pooled.few_draws_warning)
    dg << "warning: fewer than 100 retained draws per chain\n";
  if (fit.pooled.rotation_tie_count > 0)
    dg << "note: rotation eigenvalue ties in " << fit.pooled.rotation_tie_count
       << " sweeps (broken by column index)\n";
  for (int h : att.omitted_horizons)
    dg << "notice: horizon " << h << " omitted (no contributing cells)\n";
  if (fit.pooled.propensity.size() > 0) {
    const Eigen::VectorXd mean_scores = fit.pooled.propensity.colwise().mean();
    const PropensityState ps_state =
        build_strata_design(data, mean_scores, variant.strata, variant.design_kind);
    const PositivityReport pos = positivity_report(data, ps_state);
    for (const auto& w : pos.warnings) dg << "positivity: " << w << "\n";
    if (pos.warnings.empty()) dg << "positivity: no warnings\n";
  }
  dg << "trace,rhat,ess,flag\n";
  char buf[128];
  for (const auto& t : diag.traces) {
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.1f,%s\n", t.name.c_str(), t.rhat, t.ess,
                  t.degenerate ? "degenerate" : (t.flagged ? "FLAG" : "ok"));
    dg << buf;
  }
  dg.close();
  if (!dg) throw IoError("write to diagnostics.txt failed");

  if (cfg.verbosity > 0) {
    const auto& a = att.rows.front();
    std::cout << "fit " << label << ": att mean " << a.mean << " sd " << a.sd << " ["
              << a.lower << ", " << a.upper << "]"
              << (diag.any_flagged ? "  (convergence flags present)" : "") << "\n";
  }
}

// ---------------------------------------------------------------------------
// montecarlo: replication study over one or more variants on shared seeds
// ---------------------------------------------------------------------------

inline void cmd_montecarlo(const RunConfig& cfg) {
  const DgpSpec spec = detail::dgp_from_config(cfg);
  McmcSchedule sched = detail::schedule_from_config(cfg);
  sched.track_dynamic = false;
  sched.track_coefs = false;
  const std::vector<std::string> names = split_list(cfg.variant);
  if (names.empty()) throw PreconditionError("montecarlo needs at least one variant");

  CsvWriter reps(detail::out_path(cfg, "mc_replications.csv"));
  reps.row({"variant", "rep", "point", "lower", "upper", "truth", "covered", "failed"});
  CsvWriter table(detail::out_path(cfg, "mc_table.csv"));
  table.row({"Model", "Bias", "RMSE", "Sampling SD", "Coverage Rate"});

  for (const auto& name : names) {
    const ModelVariant variant = detail::variant_from_config(cfg, name);
    const std::string label = detail::variant_label(variant.kind);
    // same master seed for every variant: identical datasets per replication
    const McStudyResult res = run_study(spec, variant, sched, cfg.reps, cfg.seed, cfg.level);
    for (const auto& r : res.replications)
      reps.row({label, std::to_string(r.rep + 1), fmt_g17(r.point), fmt_g17(r.lower),
                fmt_g17(r.upper), fmt_g17(r.truth), r.covered ? "1" : "0",
                r.failed ? "1" : "0"});
    table.row({label, fmt_g17(res.bias), fmt_g17(res.rmse), fmt_g17(res.sampling_sd),
               fmt_g17(res.coverage)});
    if (cfg.verbosity > 0) {
      char line[160];
      std::snprintf(line, sizeof(line), "%-8s bias % .4f  rmse %.4f  sd %.4f  coverage %.3f",
                    label.c_str(), res.bias, res.rmse, res.sampling_sd, res.coverage);
      std::cout << line << "\n";
    }
  }
  reps.close();
  table.close();
}

// ---------------------------------------------------------------------------
// summarize: merge fit outputs into plot-ready long CSVs
// ---------------------------------------------------------------------------

inline void cmd_summarize(const RunConfig& cfg) {
  if (cfg.fit_dirs.empty()) throw PreconditionError("summarize needs at least one fit dir");
  CsvWriter longcsv(detail::out_path(cfg, "dynamic_long.csv"));
  longcsv.row({"variant", "horizon", "mean", "lower", "upper"});
  CsvWriter hist(detail::out_path(cfg, "propensity_hist.csv"));
  hist.row({"variant", "bin_lower", "bin_upper", "count"});

  for (const auto& dir : cfg.fit_dirs) {
    const std::string est_path = (std::filesystem::path(dir) / "estimands.csv").string();
    const CsvTable est = read_csv(est_path);
    const int var_col = est.require_column("variant");
    const int kind_col = est.require_column("estimand");
    const int hor_col = est.require_column("horizon");
    const int mean_col = est.require_column("mean");
    const int lo_col = est.require_column("lower");
    const int hi_col = est.require_column("upper");
    std::string label = est.rows.empty() ? dir : est.rows.front()[var_col];
    for (const auto& row : est.rows)
      if (row[kind_col] == "att_r")
        longcsv.row({row[var_col], row[hor_col], row[mean_col], row[lo_col], row[hi_col]});

    const std::string ps_path = (std::filesystem::path(dir) / "propensity.csv").string();
    if (std::filesystem::exists(ps_path)) {
      const CsvTable ps = read_csv(ps_path);
      const int m_col = ps.require_column("mean");
      std::vector<int> counts(cfg.bins, 0);
      for (const auto& row : ps.rows) {
        const double s = parse_double(row[m_col], "propensity mean");
        int b = static_cast<int>(s * cfg.bins);
        b = std::min(std::max(b, 0), cfg.bins - 1);
        ++counts[b];
      }
      for (int b = 0; b < cfg.bins; ++b)
        hist.row({label, fmt_g17(static_cast<double>(b) / cfg.bins),
                  fmt_g17(static_cast<double>(b + 1) / cfg.bins), std::to_string(counts[b])});
    }
  }
  longcsv.close();
  hist.close();
}

inline int run_command(const RunConfig& cfg) {
  if (cfg.command == "simulate") cmd_simulate(cfg);
  else if (cfg.command == "fit") cmd_fit(cfg);
  else if (cfg.command == "montecarlo") cmd_montecarlo(cfg);
  else if (cfg.command == "summarize") cmd_summarize(cfg);
  else throw PreconditionError("unknown command '" + cfg.command + "'");
  return 0;
}

}  // namespace pslfm
