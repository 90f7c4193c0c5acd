#pragma once

#include <stdexcept>
#include <string>

namespace gdvig {

/// Tensor shapes that do not compose.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Hyperparameters or architecture choices that cannot be realized.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN or Inf produced by an operation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk artifacts (tensor files, manifests, checkpoints).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric that is not defined for the given labels (e.g. AUC on one class).
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace gdvig
