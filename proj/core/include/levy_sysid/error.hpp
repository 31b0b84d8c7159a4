#pragma once

#include <stdexcept>
#include <string>

namespace levy_sysid {

// Parameter outside the admissible range of a model. The message names the
// offending parameter.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Polynomial with roots on or outside the stability radius.
class StabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation not provided for a model kind (e.g. CGMY sampling).
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Loss of numerical accuracy, or a weighting matrix that failed to factor.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent dimensions, grids or options.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace levy_sysid
