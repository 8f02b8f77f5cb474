#pragma once

#include <stdexcept>
#include <string>

namespace shieldscan {

// Bad arguments, inconsistent dimensions, malformed input files.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Attenuation query outside a tabulated energy range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Zero mean with a positive count, or another non-finite model evaluation.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Identifiability failure: a singular information block, a non-positive
// mean channel, or collinear attenuation directions.
class IdentifiabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative fit stopped before meeting its criterion.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace shieldscan
