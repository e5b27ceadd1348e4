#pragma once

#include <stdexcept>
#include <string>

namespace fedvg {

// Bad user input: config values, out-of-range labels, empty datasets.
struct InputError : std::invalid_argument {
  explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Two layered structures that were expected to be congruent are not.
struct StructuralError : std::runtime_error {
  explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf showed up where finite values are required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dirichlet partitioner could not produce a valid assignment.
struct PartitionError : std::runtime_error {
  explicit PartitionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Class-imbalanced sampler asked for more samples than a class holds.
struct SamplingError : std::runtime_error {
  explicit SamplingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Config file could not be parsed or validated; carries line/field info in msg.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fedvg
