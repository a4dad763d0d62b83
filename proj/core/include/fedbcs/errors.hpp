#pragma once

#include <stdexcept>
#include <string>

namespace fedbcs {

// Shape or extent mismatch at an op boundary.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke an API contract (non-scalar loss, double backward, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf observed while checked mode is on.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inverse DFT input was not conjugate-symmetric.
class SpectralConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN loss during local training; message names the round and batch.
class TrainingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Convergence-theory inputs outside the region where a bound is valid.
class RegimeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedbcs
