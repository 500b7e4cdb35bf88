#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "pslfm/assignment.hpp"
#include "pslfm/rng.hpp"

using namespace pslfm;

namespace {

// minimal panel scaffolding for assignment-stage tests (outcome side unused)
PanelDataset probit_panel(const Eigen::MatrixXd& covariates, const Eigen::VectorXi& w) {
  PanelDataset d;
  d.n_units = static_cast<int>(covariates.rows());
  d.n_periods = 2;
  d.outcome = Eigen::MatrixXd::Zero(d.n_units, 2);
  d.covariates = covariates;
  d.ever_treated = w;
  d.treatment.resize(d.n_units, 2);
  d.adoption_time.resize(d.n_units);
  for (int i = 0; i < d.n_units; ++i) {
    d.treatment(i, 0) = 0;
    d.treatment(i, 1) = w[i];
    d.adoption_time[i] = w[i] ? 2 : 3;
  }
  return d;
}

}  // namespace

TEST_CASE("coefficient conditional matches a hand-computed normal-normal update") {
  Eigen::MatrixXd z(3, 2);
  z << 1.0, 0.4, 1.0, -1.3, 1.0, 2.2;
  Eigen::MatrixXd loadings(3, 1);
  loadings << 0.7, -0.2, 1.5;
  Eigen::VectorXi w(3);
  w << 1, 0, 1;
  const PanelDataset d = probit_panel(z, w);

  Eigen::VectorXd u(3);
  u << 0.9, -0.3, 2.0;
  NormalPrior prior;
  prior.mean = Eigen::Vector3d(0.1, -0.2, 0.3);
  prior.covariance = Eigen::Vector3d(4.0, 9.0, 1.0).asDiagonal();

  const GaussianMoments mom = assignment_coef_moments(d, loadings, u, prior);

  Eigen::MatrixXd x(3, 3);
  x << z, loadings;
  const oracle::DenseNormalPosterior post =
      oracle::conjugate_normal(x, u, 1.0, prior.covariance.inverse(), prior.mean);
  CHECK((mom.precision - post.covariance.inverse()).norm() < 1e-10);
  CHECK((mom.precision.llt().solve(mom.shift) - post.mean).norm() < 1e-10);
}

TEST_CASE("probit recovery on synthetic data") {
  const int n = 2000;
  RngHandle rng(31, 0);
  Eigen::MatrixXd z(n, 4);
  Eigen::VectorXi w(n);
  const Eigen::VectorXd truth = Eigen::VectorXd::Ones(4);
  for (int i = 0; i < n; ++i) {
    z(i, 0) = 1.0;
    for (int j = 1; j < 4; ++j) z(i, j) = draw_normal(rng);
    w[i] = (z.row(i).dot(truth) + draw_normal(rng) >= 0.0) ? 1 : 0;
  }
  const PanelDataset d = probit_panel(z, w);
  const Eigen::MatrixXd no_loadings(n, 0);
  AssignmentParams params = AssignmentParams::zeros(4, 0, n);
  const NormalPrior prior = NormalPrior::weakly_informative(4);

  const int iters = 800, burn = 200;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(4);
  for (int it = 0; it < iters; ++it) {
    update_assignment_coefs(d, no_loadings, params, prior, rng);
    if (it >= burn) {
      sum += params.lambda_z;
      sum_sq += params.lambda_z.cwiseProduct(params.lambda_z);
    }
  }
  const int kept = iters - burn;
  const Eigen::VectorXd mean = sum / kept;
  for (int j = 0; j < 4; ++j) {
    const double sd = std::sqrt(sum_sq[j] / kept - mean[j] * mean[j]);
    CHECK(std::fabs(mean[j] - 1.0) < 3.0 * sd);
  }
  CHECK(params.lambda_gamma.size() == 0);  // r = 0 reduces to a plain probit
}

TEST_CASE("complete separation stays finite under the proper prior") {
  const int n = 40;
  RngHandle rng(32, 0);
  Eigen::MatrixXd z(n, 2);
  Eigen::VectorXi w = Eigen::VectorXi::Ones(n);  // every unit treated: separated
  for (int i = 0; i < n; ++i) {
    z(i, 0) = 1.0;
    z(i, 1) = 1.0 + rng.uniform01();
  }
  const PanelDataset d = probit_panel(z, w);
  const Eigen::MatrixXd no_loadings(n, 0);
  AssignmentParams params = AssignmentParams::zeros(2, 0, n);
  const NormalPrior prior = NormalPrior::weakly_informative(2, 25.0);  // prior sd 5
  for (int it = 0; it < 1000; ++it) {
    update_assignment_coefs(d, no_loadings, params, prior, rng);
    REQUIRE(params.lambda_z.allFinite());
    REQUIRE(params.lambda_z.cwiseAbs().maxCoeff() < 60.0);
    REQUIRE(params.latent_utilities.minCoeff() > 0.0);  // all treated
  }
}

TEST_CASE("propensity computation") {
  RngHandle rng(33, 0);
  Eigen::MatrixXd z(5, 2);
  Eigen::MatrixXd loadings(5, 2);
  for (int i = 0; i < 5; ++i) {
    z(i, 0) = 1.0;
    z(i, 1) = draw_normal(rng);
    loadings(i, 0) = draw_normal(rng);
    loadings(i, 1) = draw_normal(rng);
  }
  Eigen::VectorXi w(5);
  w << 1, 0, 1, 0, 0;
  const PanelDataset d = probit_panel(z, w);

  SECTION("zero coefficients give score one half everywhere") {
    const AssignmentParams params = AssignmentParams::zeros(2, 2, 5);
    const Eigen::VectorXd s = compute_propensity(d, loadings, params);
    for (int i = 0; i < 5; ++i) CHECK(s[i] == 0.5);
  }
  SECTION("monotone in a covariate with positive coefficient") {
    AssignmentParams params = AssignmentParams::zeros(2, 2, 5);
    params.lambda_z << 0.0, 1.5;
    const Eigen::VectorXd base = compute_propensity(d, loadings, params);
    PanelDataset bumped = d;
    bumped.covariates(2, 1) += 0.75;
    const Eigen::VectorXd after = compute_propensity(bumped, loadings, params);
    CHECK(after[2] > base[2]);
    for (int i = 0; i < 5; ++i)
      if (i != 2) CHECK(after[i] == base[i]);
  }
}

TEST_CASE("strata design expansion") {
  StrataSpec spec{{0.3, 0.6}};

  SECTION("block placement for a low-score unit") {
    Eigen::MatrixXd z(1, 2);
    z << 1.0, 2.5;
    Eigen::VectorXi w(1);
    w << 0;
    PanelDataset d = probit_panel(z, w);
    Eigen::VectorXd scores(1);
    scores << 0.2;
    const PropensityState st = build_strata_design(d, scores, spec);
    CHECK(st.stratum[0] == 1);
    Eigen::VectorXd want(6);
    want << 1.0, 2.5, 0, 0, 0, 0;
    CHECK(st.design.row(0).transpose() == want);
  }
  SECTION("threshold boundary is half-open") {
    CHECK(stratum_of(0.2999999, spec) == 1);
    CHECK(stratum_of(0.3, spec) == 2);
    CHECK(stratum_of(0.59999, spec) == 2);
    CHECK(stratum_of(0.6, spec) == 3);
  }
  SECTION("single stratum leaves the design unchanged") {
    RngHandle rng(34, 0);
    Eigen::MatrixXd z(4, 3);
    for (int i = 0; i < 4; ++i) {
      z(i, 0) = 1.0;
      z(i, 1) = draw_normal(rng);
      z(i, 2) = draw_normal(rng);
    }
    Eigen::VectorXi w(4);
    w << 0, 1, 0, 0;
    PanelDataset d = probit_panel(z, w);
    const Eigen::VectorXd scores = Eigen::VectorXd::Constant(4, 0.37);
    const PropensityState st = build_strata_design(d, scores, StrataSpec{});
    CHECK(st.design == d.covariates);
    CHECK(st.n_strata == 1);
  }
  SECTION("continuous design appends the score") {
    Eigen::MatrixXd z(2, 2);
    z << 1.0, 0.5, 1.0, -0.5;
    Eigen::VectorXi w(2);
    w << 1, 0;
    PanelDataset d = probit_panel(z, w);
    Eigen::VectorXd scores(2);
    scores << 0.8, 0.1;
    const PropensityState st =
        build_strata_design(d, scores, spec, PsDesignKind::continuous);
    CHECK(st.design.cols() == 3);
    CHECK(st.design(0, 2) == 0.8);
    CHECK(st.design(1, 2) == 0.1);
    CHECK(st.design.leftCols(2) == d.covariates);
  }
  SECTION("invalid thresholds are rejected") {
    const StrataSpec unordered{{0.6, 0.3}};
    const StrataSpec at_zero{{0.0, 0.5}};
    CHECK_THROWS_AS(unordered.validate(), DomainError);
    CHECK_THROWS_AS(at_zero.validate(), DomainError);
  }
}

TEST_CASE("design sparsity and permutation equivariance") {
  RngHandle rng(35, 0);
  const int n = 30, p = 3;
  Eigen::MatrixXd z(n, p);
  Eigen::VectorXd scores(n);
  Eigen::VectorXi w = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < n; ++i) {
    z(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) z(i, j) = draw_normal(rng);
    scores[i] = rng.uniform01();
  }
  w[1] = 1;
  const PanelDataset d = probit_panel(z, w);
  const StrataSpec spec{{0.3, 0.6}};
  const PropensityState st = build_strata_design(d, scores, spec);

  for (int i = 0; i < n; ++i) {
    // exactly one active block, and summing blocks recovers Z
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(p);
    int active_blocks = 0;
    for (int s = 0; s < spec.n_strata(); ++s) {
      const Eigen::VectorXd block = st.design.block(i, s * p, 1, p).transpose();
      if (block.cwiseAbs().sum() > 0) ++active_blocks;
      sum += block;
    }
    CHECK(active_blocks == 1);
    CHECK(sum == z.row(i).transpose());
    CHECK(st.stratum[i] == stratum_of(scores[i], spec));
  }

  // permuting units permutes strata
  Eigen::VectorXi perm(n);
  for (int i = 0; i < n; ++i) perm[i] = (i * 7 + 3) % n;
  PanelDataset dp = d;
  Eigen::VectorXd sp(n);
  for (int i = 0; i < n; ++i) {
    dp.covariates.row(i) = d.covariates.row(perm[i]);
    sp[i] = scores[perm[i]];
  }
  const PropensityState stp = build_strata_design(dp, sp, spec);
  for (int i = 0; i < n; ++i) CHECK(stp.stratum[i] == st.stratum[perm[i]]);
}

TEST_CASE("positivity report") {
  Eigen::MatrixXd z(4, 1);
  z.setOnes();
  Eigen::VectorXi w(4);
  w << 1, 0, 0, 0;
  const PanelDataset d = probit_panel(z, w);
  const StrataSpec spec{{0.3, 0.6}};

  SECTION("well-behaved scores raise no warnings") {
    const Eigen::VectorXd scores = Eigen::VectorXd::Constant(4, 0.5);
    const PropensityState st = build_strata_design(d, scores, spec);
    const PositivityReport rep = positivity_report(d, st);
    CHECK(rep.warnings.empty());
    CHECK(rep.stratum_treated[1] == 1);
    CHECK(rep.stratum_control[1] == 3);
  }
  SECTION("a near-one score raises one upper-tail warning") {
    Eigen::VectorXd scores(4);
    scores << 0.5, 0.999, 0.5, 0.5;
    const PropensityState st = build_strata_design(d, scores, spec);
    const PositivityReport rep = positivity_report(d, st);
    REQUIRE(rep.warnings.size() == 1);
    CHECK(rep.n_high == 1);
    CHECK(rep.n_low == 0);
  }
}
