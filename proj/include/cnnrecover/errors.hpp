#pragma once

#include <stdexcept>
#include <string>

namespace cnnrecover {

/// Invalid configuration: bad dimensions, unknown activation, malformed config file.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Numerical failure: non-finite values, quadrature that does not settle, eigensolver failure.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor decomposition or magnitude recovery failed.
class DecompositionError : public NumericalError {
 public:
  explicit DecompositionError(const std::string& what) : NumericalError(what) {}
};

/// The second moment has fewer than t usable eigen-directions.
class RankDeficiencyError : public DecompositionError {
 public:
  explicit RankDeficiencyError(const std::string& what) : DecompositionError(what) {}
};

}  // namespace cnnrecover
