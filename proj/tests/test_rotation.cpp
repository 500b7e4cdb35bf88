#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pslfm/rng.hpp"
#include "pslfm/rotation.hpp"

using namespace pslfm;

namespace {

FactorBlock random_block(int n, int t, int r, RngHandle& rng, double zero_scale_prob = 0.0) {
  FactorBlock b;
  b.loadings_raw.resize(n, r);
  b.factors_raw.resize(t, r);
  b.scale.resize(r);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j) b.loadings_raw(i, j) = draw_normal(rng);
  for (int s = 0; s < t; ++s)
    for (int j = 0; j < r; ++j) b.factors_raw(s, j) = draw_normal(rng);
  for (int j = 0; j < r; ++j)
    b.scale[j] = (rng.uniform01() < zero_scale_prob) ? 0.0 : 0.2 + 2.0 * rng.uniform01();
  return b;
}

double product_gap(const FactorBlock& b, const RotationResult& rot) {
  Eigen::MatrixXd scaled = b.loadings_raw;
  for (int j = 0; j < b.scale.size(); ++j) {
    const bool active =
        std::find(rot.active_columns.begin(), rot.active_columns.end(), j) !=
        rot.active_columns.end();
    scaled.col(j) *= active ? b.scale[j] : 0.0;
  }
  const Eigen::MatrixXd want = b.factors_raw * scaled.transpose();
  Eigen::MatrixXd got = Eigen::MatrixXd::Zero(want.rows(), want.cols());
  for (int j : rot.active_columns) got += rot.factors.col(j) * rot.loadings.col(j).transpose();
  const double denom = std::max(want.norm(), 1e-12);
  return (want - got).norm() / denom;
}

}  // namespace

TEST_CASE("already-normalized block is a fixed point up to column signs") {
  const int n = 4, t = 8;
  // loadings with G'G/N = diag(3,1), factors with F'F/T = I
  Eigen::MatrixXd g(n, 2);
  g << std::sqrt(3.0), 1, std::sqrt(3.0), -1, -std::sqrt(3.0), 1, -std::sqrt(3.0), -1;
  Eigen::MatrixXd f(t, 2);
  f.setZero();
  for (int s = 0; s < t; ++s) {
    f(s, 0) = (s % 2 == 0) ? 1.0 : -1.0;
    f(s, 1) = (s / 2 % 2 == 0) ? 1.0 : -1.0;
  }
  REQUIRE(((g.transpose() * g) / n - Eigen::Vector2d(3, 1).asDiagonal().toDenseMatrix())
              .norm() < 1e-12);
  REQUIRE(((f.transpose() * f) / t - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);

  const RotationResult rot =
      rotate_to_normalization({g, f, Eigen::Vector2d::Ones()});
  for (int j = 0; j < 2; ++j) {
    const double sign = (rot.loadings.col(j).dot(g.col(j)) >= 0) ? 1.0 : -1.0;
    CHECK((rot.loadings.col(j) - sign * g.col(j)).norm() < 1e-10);
    CHECK((rot.factors.col(j) - sign * f.col(j)).norm() < 1e-10);
  }
}

TEST_CASE("product invariance on a random block") {
  RngHandle rng(21, 0);
  const FactorBlock b = random_block(40, 60, 3, rng);
  const RotationResult rot = rotate_to_normalization(b);
  CHECK(product_gap(b, rot) < 1e-10);
}

TEST_CASE("shrunk factor columns bypass rotation") {
  RngHandle rng(22, 0);
  FactorBlock b = random_block(30, 40, 3, rng);
  b.scale << 1.0, 0.0, 1.0;
  const RotationResult rot = rotate_to_normalization(b);
  CHECK(rot.active_columns == std::vector<int>{0, 2});
  CHECK(rot.loadings.col(1).norm() == 0.0);
  CHECK(rot.factors.col(1) == b.factors_raw.col(1));
  // active columns satisfy the normalization
  Eigen::MatrixXd f_act(40, 2);
  f_act << rot.factors.col(0), rot.factors.col(2);
  CHECK(((f_act.transpose() * f_act) / 40.0 - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-8);
  CHECK(product_gap(b, rot) < 1e-10);
}

TEST_CASE("rank-deficient active factors raise a degeneracy error") {
  RngHandle rng(23, 0);
  FactorBlock b = random_block(20, 30, 3, rng);
  b.factors_raw.col(2) = b.factors_raw.col(1);  // exact collinearity
  CHECK_THROWS_AS(rotate_to_normalization(b), DegeneracyError);
}

TEST_CASE("normalization invariants over random blocks") {
  RngHandle rng(24, 0);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = 5 + static_cast<int>(rng.uniform01() * 60);
    const int r = 1 + static_cast<int>(rng.uniform01() * 5);
    const int t = r + 5 + static_cast<int>(rng.uniform01() * 60);
    const FactorBlock b = random_block(n, t, r, rng, 0.2);
    const RotationResult rot = rotate_to_normalization(b);
    CHECK(product_gap(b, rot) < 1e-10);

    const int ra = static_cast<int>(rot.active_columns.size());
    if (ra == 0) continue;
    Eigen::MatrixXd f_act(t, ra), g_act(n, ra);
    for (int m = 0; m < ra; ++m) {
      f_act.col(m) = rot.factors.col(rot.active_columns[m]);
      g_act.col(m) = rot.loadings.col(rot.active_columns[m]);
    }
    CHECK(((f_act.transpose() * f_act) / t - Eigen::MatrixXd::Identity(ra, ra)).norm() < 1e-8);
    const Eigen::MatrixXd gg = (g_act.transpose() * g_act) / n;
    const double scale = gg.diagonal().maxCoeff();
    for (int a = 0; a < ra; ++a)
      for (int c = 0; c < ra; ++c)
        if (a != c) CHECK(std::fabs(gg(a, c)) < 1e-8 * std::max(scale, 1.0));
    // descending variance ordering
    for (int m = 0; m + 1 < ra; ++m) CHECK(gg(m, m) >= gg(m + 1, m + 1) - 1e-10);
  }
}
