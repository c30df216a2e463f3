#pragma once

#include <stdexcept>
#include <string>

namespace rbsd {

// Bad input: malformed specs, grids, configs. Maps to CLI exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure during a run. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A control bucket has too few scenarios for its regression.
class CoverageError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Every particle weight vanished.
class FilterCollapseError : public NumericError {
 public:
  using NumericError::NumericError;
};

// An oracle was asked to solve a problem outside its domain.
class NotApplicableError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace rbsd
