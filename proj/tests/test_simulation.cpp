#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "pslfm/simulation.hpp"

using namespace pslfm;

TEST_CASE("null-effect datasets differ from effectful ones only on treated cells") {
  DgpSpec null_spec;
  null_spec.n_units = 60;
  null_spec.n_periods = 16;
  null_spec.early_adopt_t = 12;
  null_spec.late_adopt_t = 14;
  DgpSpec eff_spec = null_spec;
  eff_spec.effect = 1.5;

  RngHandle r1(81, 0), r2(81, 0);
  const auto [d0, t0] = generate_dataset(null_spec, r1);
  const auto [d1, t1] = generate_dataset(eff_spec, r2);
  CHECK(t0.att_true == 0.0);
  CHECK(t1.att_true == 1.5);
  for (int i = 0; i < d0.n_units; ++i)
    for (int t = 0; t < d0.n_periods; ++t) {
      if (d0.treatment(i, t) == 1)
        CHECK(d1.outcome(i, t) == d0.outcome(i, t) + 1.5);
      else
        CHECK(d1.outcome(i, t) == d0.outcome(i, t));
    }
}

TEST_CASE("treated share concentrates on the mean true score") {
  DgpSpec spec;
  for (std::uint64_t seed : {91, 92, 93, 94, 95}) {
    RngHandle rng(seed, 0);
    const auto [data, truth] = generate_dataset(spec, rng);
    const double share =
        data.ever_treated.cast<double>().sum() / static_cast<double>(data.n_units);
    CHECK(std::fabs(share - truth.scores.mean()) <
          3.0 * std::sqrt(0.25 / spec.n_units));
  }
}

TEST_CASE("strata are recomputable from stored scores, and scores from the model") {
  DgpSpec spec;
  RngHandle rng(96, 0);
  const auto [data, truth] = generate_dataset(spec, rng);
  for (int i = 0; i < data.n_units; ++i)
    CHECK(truth.strata[i] == stratum_of(truth.scores[i], spec.thresholds));

  // recomputing the propensity with the generating coefficients is exact
  AssignmentParams params = AssignmentParams::zeros(3, 2, data.n_units);
  params.lambda_z << 0.0, 1.0, 1.0;  // zero intercept on the constant column
  params.lambda_gamma << 1.0, 1.0;
  const Eigen::VectorXd recomputed = compute_propensity(data, truth.loadings, params);
  CHECK(recomputed == truth.scores);
}

TEST_CASE("dataset generation is deterministic in (spec, seed)") {
  DgpSpec spec;
  spec.n_units = 50;
  spec.n_periods = 12;
  spec.early_adopt_t = 9;
  spec.late_adopt_t = 11;
  RngHandle r1(97, 5), r2(97, 5);
  const auto [a, ta] = generate_dataset(spec, r1);
  const auto [b, tb] = generate_dataset(spec, r2);
  CHECK(a.outcome == b.outcome);
  CHECK(a.treatment == b.treatment);
  CHECK(a.covariates == b.covariates);
  CHECK(ta.scores == tb.scores);
}

TEST_CASE("study harness with stub estimators") {
  DgpSpec spec;
  spec.n_units = 30;
  spec.n_periods = 10;
  spec.early_adopt_t = 7;
  spec.late_adopt_t = 9;
  spec.effect = 0.4;

  SECTION("identity estimator: zero bias and RMSE, full coverage") {
    const RepEstimator truth_stub = [](const PanelDataset&, const DgpTruth& truth, int) {
      return RepEstimate{truth.att_true, truth.att_true - 0.01, truth.att_true + 0.01};
    };
    const McStudyResult res = run_study_with(spec, truth_stub, 20, 1001);
    CHECK(res.bias == 0.0);
    CHECK(res.rmse == 0.0);
    CHECK(res.sampling_sd == 0.0);
    CHECK(res.coverage == 1.0);
  }

  SECTION("gaussian stub with exact intervals is calibrated") {
    const std::uint64_t master = 1002;
    const RepEstimator gauss_stub = [master](const PanelDataset&, const DgpTruth& truth,
                                             int rep) {
      RngHandle rng(master, chain_stream(rep, 7));
      const double est = truth.att_true + 0.1 * draw_normal(rng);
      return RepEstimate{est, est - 1.959964 * 0.1, est + 1.959964 * 0.1};
    };
    const McStudyResult res = run_study_with(spec, gauss_stub, 500, master);
    CHECK(std::fabs(res.coverage - 0.95) < 0.03);
    CHECK(std::fabs(res.bias) < 3.0 * 0.1 / std::sqrt(500.0));
    // decomposition identity with constant truth
    CHECK(std::fabs(res.rmse * res.rmse -
                    (res.bias * res.bias + res.sampling_sd * res.sampling_sd)) < 1e-10);
  }

  SECTION("sporadic failures are excluded; excess failures abort") {
    const RepEstimator flaky = [](const PanelDataset&, const DgpTruth& truth, int rep) {
      if (rep == 3) throw std::runtime_error("boom");
      return RepEstimate{truth.att_true, truth.att_true - 1, truth.att_true + 1};
    };
    const McStudyResult res = run_study_with(spec, flaky, 40, 1003);
    CHECK(res.n_failed == 1);
    CHECK(res.n_used == 39);
    CHECK(res.replications[3].failed);

    const RepEstimator broken = [](const PanelDataset&, const DgpTruth&, int rep) {
      if (rep % 2 == 0) throw std::runtime_error("boom");
      return RepEstimate{0, -1, 1};
    };
    CHECK_THROWS_AS(run_study_with(spec, broken, 40, 1004), DomainError);
  }

  SECTION("same master seed reproduces the study exactly") {
    const RepEstimator stub = [](const PanelDataset& d, const DgpTruth&, int) {
      const double m = d.outcome.mean();
      return RepEstimate{m, m - 1, m + 1};
    };
    const McStudyResult a = run_study_with(spec, stub, 12, 1005, 2);
    const McStudyResult b = run_study_with(spec, stub, 12, 1005, 2);
    REQUIRE(a.replications.size() == b.replications.size());
    for (std::size_t i = 0; i < a.replications.size(); ++i)
      CHECK(a.replications[i].point == b.replications[i].point);
    CHECK(a.bias == b.bias);
  }
}

TEST_CASE("propensity recovery checks") {
  DgpSpec spec;
  spec.n_units = 25;
  spec.n_periods = 8;
  spec.early_adopt_t = 6;
  spec.late_adopt_t = 7;
  RngHandle rng(98, 0);
  const auto [data, truth] = generate_dataset(spec, rng);

  SECTION("posterior scores equal to the truth give correlation 1, rmse 0") {
    PosteriorDraws draws;
    draws.propensity.resize(3, data.n_units);
    for (int k = 0; k < 3; ++k) draws.propensity.row(k) = truth.scores;
    const PropensityRecovery rec = propensity_recovery_check(data, truth, draws);
    CHECK(std::fabs(rec.correlation - 1.0) < 1e-12);
    CHECK(rec.rmse_ps < 1e-12);
    CHECK_FALSE(rec.degenerate);
  }
  SECTION("constant posterior scores are degenerate") {
    PosteriorDraws draws;
    draws.propensity = Eigen::MatrixXd::Constant(3, data.n_units, 0.5);
    const PropensityRecovery rec = propensity_recovery_check(data, truth, draws);
    CHECK(rec.degenerate);
    CHECK(std::isnan(rec.correlation));
  }
  SECTION("missing propensity trace is a precondition error") {
    PosteriorDraws draws;
    CHECK_THROWS_AS(propensity_recovery_check(data, truth, draws), PreconditionError);
  }
}

TEST_CASE("study CSV export and ingestion round trip") {
  DgpSpec spec;
  spec.n_units = 30;
  spec.n_periods = 10;
  spec.early_adopt_t = 7;
  spec.late_adopt_t = 9;
  const RepEstimator stub = [](const PanelDataset&, const DgpTruth& truth, int rep) {
    const double est = truth.att_true + 0.01 * rep;
    return RepEstimate{est, est - 0.5, est + 0.5};
  };
  const McStudyResult res = run_study_with(spec, stub, 10, 1006);
  const std::string path =
      (std::filesystem::temp_directory_path() / "pslfm_study.csv").string();
  write_study_csv(res, path);
  const McStudyResult back = load_study_csv(path);
  REQUIRE(back.replications.size() == res.replications.size());
  CHECK(back.bias == res.bias);
  CHECK(back.rmse == res.rmse);
  CHECK(back.sampling_sd == res.sampling_sd);
  CHECK(back.coverage == res.coverage);
}
