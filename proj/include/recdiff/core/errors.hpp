#pragma once

#include <stdexcept>
#include <string>

namespace recdiff {

// Error taxonomy used across the library. All derive from std::runtime_error
// so callers may catch coarsely; the CLI maps any escape to exit code 2.

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& m) : std::runtime_error("dimension error: " + m) {}
};

struct ParameterError : std::runtime_error {
  explicit ParameterError(const std::string& m) : std::runtime_error("parameter error: " + m) {}
};

struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& m) : std::runtime_error("contract error: " + m) {}
};

struct StepError : std::runtime_error {
  explicit StepError(const std::string& m) : std::runtime_error("step error: " + m) {}
};

struct TrainingDivergenceError : std::runtime_error {
  explicit TrainingDivergenceError(const std::string& m)
      : std::runtime_error("training divergence: " + m) {}
};

struct InitializationError : std::runtime_error {
  explicit InitializationError(const std::string& m)
      : std::runtime_error("initialization error: " + m) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error("io error: " + m) {}
};

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error("usage error: " + m) {}
};

}  // namespace recdiff
