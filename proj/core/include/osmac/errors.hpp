#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace osmac {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, mismatched dimensions, unreadable data. The CLI maps these
// to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

// Malformed delimited input. `row` is the 1-based data row (header excluded).
class DataError : public InputError {
 public:
  DataError(std::size_t row, const std::string& what)
      : InputError("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Estimation could not produce a trustworthy answer (exit code 3).
class EstimationError : public Error {
 public:
  using Error::Error;
};

class SeparationError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class SingularMatrixError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class DegenerateProbabilitiesError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

}  // namespace osmac
