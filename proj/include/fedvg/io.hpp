#pragma once

#include <string>
#include <vector>

#include "fedvg/orchestrator.hpp"

namespace fedvg {

// Floats are written with 17 significant digits ('.' decimal, no grouping),
// which round-trips 64-bit values exactly.
std::string format_float(double v);

// Columns: round,val_loss,test_acc,n_sampled
std::string rounds_csv(const std::vector<RoundRecord>& rounds);

// Columns: round,client_id,mean_norm,score
std::string scores_csv(const std::vector<RoundRecord>& rounds);

// Best/final metrics of one experiment, serialized as JSON.
std::string summary_json(const ExperimentResult& result);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace fedvg
