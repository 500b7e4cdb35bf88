#pragma once
// Post-processing rotation of (factors, scaled loadings) draws onto the
// normalization F'F/T = I, G'G/N diagonal with descending entries.  The
// rotated loadings are what the treatment-assignment stage consumes.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "pslfm/errors.hpp"

namespace pslfm {

struct FactorBlock {
  Eigen::MatrixXd loadings_raw;  // N x r, normalized loading rows
  Eigen::MatrixXd factors_raw;   // T x r, factor rows
  Eigen::VectorXd scale;         // r, loading scales (zero allowed: shrunk factor)
};

struct RotationResult {
  Eigen::MatrixXd loadings;  // N x r; shrunk columns are identically zero
  Eigen::MatrixXd factors;   // T x r; shrunk columns keep their raw factors
  std::vector<int> active_columns;
  bool eigenvalue_tie = false;  // ties broken by original column index
};

// A column is treated as shrunk away when its scale is negligible relative to
// the largest one; rotating it would make M singular.
inline constexpr double kShrinkTolerance = 1e-6;

inline RotationResult rotate_to_normalization(const FactorBlock& block) {
  const Eigen::Index n = block.loadings_raw.rows();
  const Eigen::Index t = block.factors_raw.rows();
  const Eigen::Index r = block.scale.size();
  if (block.loadings_raw.cols() != r || block.factors_raw.cols() != r)
    throw DomainError("factor block dimensions are inconsistent");

  RotationResult out;
  out.loadings = Eigen::MatrixXd::Zero(n, r);
  out.factors = block.factors_raw;
  if (r == 0) return out;

  const double max_scale = block.scale.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < r; ++j)
    if (std::fabs(block.scale[j]) >= kShrinkTolerance * max_scale && max_scale > 0.0)
      out.active_columns.push_back(static_cast<int>(j));
  const int ra = static_cast<int>(out.active_columns.size());
  if (ra == 0) return out;
  if (t < ra)
    throw DomainError("fewer periods than active factors; rotation undefined");

  Eigen::MatrixXd f_act(t, ra);
  Eigen::MatrixXd g_hat(n, ra);  // loadings multiplied by their scales
  for (int m = 0; m < ra; ++m) {
    const int j = out.active_columns[m];
    f_act.col(m) = block.factors_raw.col(j);
    g_hat.col(m) = block.loadings_raw.col(j) * block.scale[j];
  }

  const Eigen::MatrixXd s = (f_act.transpose() * f_act) / static_cast<double>(t);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_s(s);
  const Eigen::VectorXd sd = es_s.eigenvalues();
  const double s_max = sd.maxCoeff();
  if (!(s_max > 0.0) || sd.minCoeff() <= 1e-12 * s_max) {
    // name the raw column dominating the null direction
    int arg = 0;
    es_s.eigenvectors().col(0).cwiseAbs().maxCoeff(&arg);
    throw DegeneracyError("active factor block is rank deficient",
                          out.active_columns[arg]);
  }
  const Eigen::MatrixXd s_half =
      es_s.eigenvectors() * sd.cwiseSqrt().asDiagonal() * es_s.eigenvectors().transpose();
  const Eigen::MatrixXd s_half_inv =
      es_s.eigenvectors() * sd.cwiseSqrt().cwiseInverse().asDiagonal() *
      es_s.eigenvectors().transpose();

  const Eigen::MatrixXd m_mat =
      s_half * ((g_hat.transpose() * g_hat) / static_cast<double>(n)) * s_half;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(m_mat);

  // descending eigenvalues, ties broken by original column index
  std::vector<int> order(ra);
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXd md = es_m.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return md[a] > md[b]; });
  const double m_scale = std::max(std::fabs(md.maxCoeff()), std::fabs(md.minCoeff()));
  for (int m = 0; m + 1 < ra; ++m)
    if (std::fabs(md[order[m]] - md[order[m + 1]]) <= 1e-12 * m_scale)
      out.eigenvalue_tie = true;

  Eigen::MatrixXd q(ra, ra);
  for (int m = 0; m < ra; ++m) q.col(m) = es_m.eigenvectors().col(order[m]);

  Eigen::MatrixXd g_rot = g_hat * s_half * q;
  Eigen::MatrixXd f_rot = f_act * s_half_inv * q;

  // column signs: make each loading column's largest-magnitude entry positive
  for (int m = 0; m < ra; ++m) {
    int arg = 0;
    g_rot.col(m).cwiseAbs().maxCoeff(&arg);
    if (g_rot(arg, m) < 0.0) {
      g_rot.col(m) = -g_rot.col(m);
      f_rot.col(m) = -f_rot.col(m);
    }
  }

  for (int m = 0; m < ra; ++m) {
    const int j = out.active_columns[m];
    out.loadings.col(j) = g_rot.col(m);
    out.factors.col(j) = f_rot.col(m);
  }
  return out;
}

}  // namespace pslfm
