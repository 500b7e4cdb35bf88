// pslfm command-line tool: simulate panels, fit the samplers, run Monte Carlo
// studies, and merge fit outputs for plotting.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pslfm/cli.hpp"

int main(int argc, char** argv) {
  pslfm::RunConfig cfg;

  // config file first, explicit flags override
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        pslfm::apply_config_file(cfg, argv[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
      }
    }
  }

  CLI::App app{"Propensity-score-augmented latent factor models for panel data"};
  app.fallthrough();
  std::string config_path;
  std::string thresholds_arg;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--seed", cfg.seed, "master seed");
  app.add_option("--variant", cfg.variant,
                 "pslfm|dmlfm|oracle (montecarlo accepts a comma list)");
  app.add_option("--thresholds", thresholds_arg, "strata thresholds, e.g. 0.3,0.6");
  app.add_option("--rmax", cfg.rmax, "maximum number of latent factors");
  app.add_option("--iters", cfg.iters, "MCMC iterations per chain");
  app.add_option("--burnin", cfg.burnin, "burn-in iterations");
  app.add_option("--thin", cfg.thin, "thinning interval");
  app.add_option("--chains", cfg.chains, "number of chains");
  app.add_option("--reps", cfg.reps, "Monte Carlo replications");
  app.add_option("--placebo", cfg.placebo, "placebo pre-treatment periods to mask");
  app.add_option("--out", cfg.out, "output directory");
  app.add_option("--level", cfg.level, "credible interval level");
  app.add_option("--ps-design", cfg.ps_design, "strata|continuous");
  app.add_option("--verbosity", cfg.verbosity, "0 silences progress output");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic panel + truth files");
  sim->add_option("--units", cfg.units, "number of units");
  sim->add_option("--periods", cfg.periods, "number of periods");
  sim->add_option("--early-adopt", cfg.early_adopt, "early adoption period");
  sim->add_option("--late-adopt", cfg.late_adopt, "late adoption period");
  sim->add_option("--effect", cfg.effect, "treatment effect added to treated cells");
  sim->add_option("--noise-sd", cfg.noise_sd, "idiosyncratic noise SD");

  auto* fit = app.add_subcommand("fit", "fit a model to a panel CSV");
  fit->add_option("--data", cfg.dataset, "panel CSV (long format)");
  fit->add_option("--oracle-scores", cfg.oracle_scores, "CSV with true_score column");
  fit->add_option("--oracle-r", cfg.oracle_r, "true factor count for the oracle variant");

  auto* mc = app.add_subcommand("montecarlo", "replication study on the simulation design");
  mc->add_option("--units", cfg.units, "number of units");
  mc->add_option("--periods", cfg.periods, "number of periods");
  mc->add_option("--early-adopt", cfg.early_adopt, "early adoption period");
  mc->add_option("--late-adopt", cfg.late_adopt, "late adoption period");
  mc->add_option("--effect", cfg.effect, "true treatment effect");
  mc->add_option("--noise-sd", cfg.noise_sd, "idiosyncratic noise SD");

  auto* summ = app.add_subcommand("summarize", "merge fit outputs into plot-ready CSVs");
  std::string fits_arg;
  summ->add_option("--fits", fits_arg, "comma list of fit output directories");
  summ->add_option("--bins", cfg.bins, "propensity histogram bins");

  app.require_subcommand(1);
  CLI11_PARSE(app, argc, argv);

  if (!thresholds_arg.empty()) cfg.thresholds = pslfm::parse_double_list(thresholds_arg);
  if (!fits_arg.empty()) cfg.fit_dirs = pslfm::split_list(fits_arg);
  if (sim->parsed()) cfg.command = "simulate";
  if (fit->parsed()) cfg.command = "fit";
  if (mc->parsed()) cfg.command = "montecarlo";
  if (summ->parsed()) cfg.command = "summarize";

  try {
    return pslfm::run_command(cfg);
  } catch (const pslfm::ChainError& e) {
    std::cerr << "chain failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
