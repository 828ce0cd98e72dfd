#pragma once

#include <stdexcept>
#include <string>

namespace fan {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Lookup id or position outside the valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Invalid configuration value (non power-of-two FFT size, bad boundaries, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Call sequence violates an API contract (backward twice, step without grads, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input file content.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Metric undefined for the given input (e.g. single-class AUC).
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Numerical failure during training (NaN loss).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fan
