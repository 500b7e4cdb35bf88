#pragma once
// Domain types for staggered-adoption panel data, CSV ingestion, and
// structural validation.

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "pslfm/csv.hpp"
#include "pslfm/errors.hpp"

namespace pslfm {

// Balanced N x T panel with absorbing staggered treatment adoption.
//   outcome(i,t)    Y_it
//   treatment(i,t)  D_it in {0,1}, D_it = 1 exactly when t+1 >= adoption_time[i]
//                   (indices are 0-based internally; periods are 1..T in files)
//   covariates      N x p, time-invariant, first column is the constant 1 when
//                   built with the intercept convention
//   adoption_time   A_i in {2..T} for eventually-treated units, T+1 = never
//   ever_treated    W_i = 1 iff A_i <= T
struct PanelDataset {
  int n_units = 0;
  int n_periods = 0;
  Eigen::MatrixXd outcome;
  Eigen::MatrixXi treatment;
  Eigen::MatrixXd covariates;
  Eigen::VectorXi adoption_time;
  Eigen::VectorXi ever_treated;

  int n_covariates() const { return static_cast<int>(covariates.cols()); }
  int n_treated_cells() const { return treatment.sum(); }
  // Number of untreated periods for unit i (its control prefix).
  int control_periods(int i) const { return std::min(adoption_time[i] - 1, n_periods); }
};

struct EstimandTarget {
  enum class Kind { ATT_overall, ATT_dynamic };
  Kind kind = Kind::ATT_overall;
  int horizon = 0;  // periods since adoption, used by ATT_dynamic
};

struct ColumnMap {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "y";
  std::string treatment = "d";
  std::vector<std::string> covariates;
  bool add_intercept = true;
};

struct ValidationReport {
  int t0_earliest_adoption = 0;  // 0 when no unit is ever treated
  int n_treated_units = 0;
  int n_control_units = 0;
  std::vector<int> horizon_cell_counts;  // index r: treated cells at horizon r
};

// Checks every structural invariant; throws on violation.
inline ValidationReport validate_staggered(const PanelDataset& data) {
  const int n = data.n_units;
  const int t_max = data.n_periods;
  if (n <= 0 || t_max <= 0) throw DomainError("panel must have positive dimensions");
  if (data.outcome.rows() != n || data.outcome.cols() != t_max ||
      data.treatment.rows() != n || data.treatment.cols() != t_max ||
      data.covariates.rows() != n || data.adoption_time.size() != n ||
      data.ever_treated.size() != n)
    throw DomainError("panel field dimensions are inconsistent");

  ValidationReport report;
  int earliest = t_max + 1;
  for (int i = 0; i < n; ++i) {
    // adoption time must reproduce the treatment path (absorbing adoption)
    int first_treated = t_max + 1;
    for (int t = 0; t < t_max; ++t) {
      const int d = data.treatment(i, t);
      if (d != 0 && d != 1) throw DomainError("treatment must be binary");
      if (d == 1 && first_treated > t_max) first_treated = t + 1;
      if (d == 0 && first_treated <= t_max)
        throw NonAbsorbingError("unit " + std::to_string(i + 1) +
                                " switches treatment off at period " + std::to_string(t + 1));
    }
    if (data.adoption_time[i] != first_treated)
      throw DomainError("adoption_time does not match the treatment path for unit " +
                        std::to_string(i + 1));
    const bool treated = first_treated <= t_max;
    if ((data.ever_treated[i] != 0) != treated)
      throw DomainError("ever_treated inconsistent with adoption time for unit " +
                        std::to_string(i + 1));
    if (treated) {
      if (first_treated <= 1)
        throw DomainError("unit " + std::to_string(i + 1) + " has no pre-treatment period");
      ++report.n_treated_units;
      earliest = std::min(earliest, first_treated);
    } else {
      ++report.n_control_units;
    }
  }
  if (report.n_control_units == 0) throw DomainError("panel has no never-treated unit");
  report.t0_earliest_adoption = (report.n_treated_units > 0) ? earliest : 0;

  if (report.n_treated_units > 0) {
    const int max_horizon = t_max - earliest;
    report.horizon_cell_counts.assign(max_horizon + 1, 0);
    for (int i = 0; i < n; ++i) {
      if (!data.ever_treated[i]) continue;
      for (int r = 0; data.adoption_time[i] + r <= t_max; ++r)
        ++report.horizon_cell_counts[r];
    }
  }
  return report;
}

namespace detail {

// Derive adoption times / ever-treated flags from a validated treatment path.
inline void derive_adoption(PanelDataset& data) {
  data.adoption_time.resize(data.n_units);
  data.ever_treated.resize(data.n_units);
  for (int i = 0; i < data.n_units; ++i) {
    int first = data.n_periods + 1;
    for (int t = 0; t < data.n_periods; ++t) {
      if (data.treatment(i, t) == 1) {
        first = t + 1;
        break;
      }
    }
    data.adoption_time[i] = first;
    data.ever_treated[i] = (first <= data.n_periods) ? 1 : 0;
  }
}

}  // namespace detail

// Loads a long-format CSV (one row per unit-period).  Unit labels are densified
// to 1..N in order of first appearance; time values are sorted ascending and
// densified to 1..T.  A constant covariate column is prepended unless disabled.
inline PanelDataset load_panel_csv(const std::string& path, const ColumnMap& columns = {}) {
  const CsvTable table = read_csv(path);
  const int unit_col = table.require_column(columns.unit);
  const int time_col = table.require_column(columns.time);
  const int y_col = table.require_column(columns.outcome);
  const int d_col = table.require_column(columns.treatment);
  std::vector<int> z_cols;
  for (const auto& name : columns.covariates) z_cols.push_back(table.require_column(name));

  std::vector<std::string> unit_labels;
  std::unordered_map<std::string, int> unit_index;
  std::map<double, int> time_index;  // sorted ascending
  for (const auto& row : table.rows) {
    const std::string& u = row[unit_col];
    if (unit_index.emplace(u, static_cast<int>(unit_labels.size())).second)
      unit_labels.push_back(u);
    time_index.emplace(parse_double(row[time_col], "time"), 0);
  }
  int next_t = 0;
  for (auto& kv : time_index) kv.second = next_t++;

  const int n = static_cast<int>(unit_labels.size());
  const int t_max = static_cast<int>(time_index.size());
  if (table.rows.size() != static_cast<std::size_t>(n) * t_max)
    throw BalanceError("panel is unbalanced: " + std::to_string(table.rows.size()) +
                       " rows for " + std::to_string(n) + " units x " + std::to_string(t_max) +
                       " periods");

  const int p_raw = static_cast<int>(z_cols.size());
  const int offset = columns.add_intercept ? 1 : 0;
  PanelDataset data;
  data.n_units = n;
  data.n_periods = t_max;
  data.outcome.resize(n, t_max);
  data.treatment.resize(n, t_max);
  data.covariates = Eigen::MatrixXd::Ones(n, p_raw + offset);
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(n, t_max);
  std::vector<int> rows_seen(n, 0);

  for (const auto& row : table.rows) {
    const int i = unit_index.at(row[unit_col]);
    const int t = time_index.at(parse_double(row[time_col], "time"));
    if (seen(i, t)++)
      throw BalanceError("duplicate row for unit '" + row[unit_col] + "' at time '" +
                         row[time_col] + "'");
    data.outcome(i, t) = parse_double(row[y_col], "outcome");
    const double d = parse_double(row[d_col], "treatment");
    if (d != 0.0 && d != 1.0)
      throw DomainError("treatment value '" + row[d_col] + "' is not 0/1");
    data.treatment(i, t) = static_cast<int>(d);
    const bool first_row_for_unit = (rows_seen[i]++ == 0);
    for (int j = 0; j < p_raw; ++j) {
      const double z = parse_double(row[z_cols[j]], "covariate " + columns.covariates[j]);
      if (first_row_for_unit) {
        data.covariates(i, j + offset) = z;
      } else if (data.covariates(i, j + offset) != z) {
        // covariates are time-invariant by construction
        throw DomainError("covariate '" + columns.covariates[j] + "' varies within unit '" +
                          row[unit_col] + "'");
      }
    }
  }

  detail::derive_adoption(data);
  validate_staggered(data);
  return data;
}

// Writes a dataset in the long format load_panel_csv reads.  Covariates are
// emitted as z1..zp; pass skip_leading_constant = true to drop an intercept
// column that load_panel_csv would re-prepend.
inline void write_panel_csv(const PanelDataset& data, const std::string& path,
                            bool skip_leading_constant = false) {
  const int z_begin = skip_leading_constant ? 1 : 0;
  CsvWriter out(path);
  std::vector<std::string> header{"unit", "time", "y", "d"};
  for (int j = z_begin; j < data.n_covariates(); ++j)
    header.push_back("z" + std::to_string(j - z_begin + 1));
  out.row(header);
  std::vector<std::string> row;
  for (int i = 0; i < data.n_units; ++i) {
    for (int t = 0; t < data.n_periods; ++t) {
      row.clear();
      row.push_back(std::to_string(i + 1));
      row.push_back(std::to_string(t + 1));
      row.push_back(fmt_g17(data.outcome(i, t)));
      row.push_back(std::to_string(data.treatment(i, t)));
      for (int j = z_begin; j < data.n_covariates(); ++j)
        row.push_back(fmt_g17(data.covariates(i, j)));
      out.row(row);
    }
  }
  out.close();
}

}  // namespace pslfm
