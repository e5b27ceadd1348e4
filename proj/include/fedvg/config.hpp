#pragma once

#include <string>

#include "fedvg/orchestrator.hpp"

namespace fedvg {

// "key = value" lines grouped under [section] headers; '#' starts a comment.
// Unknown keys are rejected so typos surface as errors. Throws ConfigError
// with line and field diagnostics.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical snapshot of every resolved field; parsing it back reproduces the
// exact same config.
std::string config_snapshot(const ExperimentConfig& config);

}  // namespace fedvg
