#pragma once
// Error taxonomy shared across the library.

#include <stdexcept>
#include <string>

namespace pslfm {

// Input file / column problems.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Panel is not balanced (missing or duplicated unit-period cells).
struct BalanceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Values outside the admissible domain (non-binary treatment, bad parameters, ...).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Treatment switches off after switching on.
struct NonAbsorbingError : DomainError {
  using DomainError::DomainError;
};

// Linear-algebra failure; carries the smallest pivot/eigenvalue seen.
struct NumericalError : std::runtime_error {
  double smallest_pivot;
  NumericalError(const std::string& msg, double pivot)
      : std::runtime_error(msg + " (smallest pivot " + std::to_string(pivot) + ")"),
        smallest_pivot(pivot) {}
};

// Rank-deficient factor block; names the offending column (0-based).
struct DegeneracyError : std::runtime_error {
  int column;
  DegeneracyError(const std::string& msg, int col)
      : std::runtime_error(msg + " (column " + std::to_string(col) + ")"), column(col) {}
};

struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pslfm
