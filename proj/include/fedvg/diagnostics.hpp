#pragma once

#include <string>
#include <vector>

#include "fedvg/orchestrator.hpp"

namespace fedvg {

struct GradAuditReport {
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  bool pass = false;
  int64_t params_checked = 0;
};

// Backward vs central finite differences (h = 1e-5) over every parameter of a
// randomly initialized model on a random batch; relative error uses an
// absolute floor of 1e-8.
GradAuditReport grad_audit(const ModelTopology& topo, uint64_t seed, double tolerance = 1e-4);

// As grad_audit, but with one gradient entry deliberately offset; exercises
// the audit's failure path.
GradAuditReport grad_audit_fault_injected(const ModelTopology& topo, uint64_t seed,
                                          double tolerance = 1e-4);

struct FisherAuditReport {
  double trace_rel_error = 0.0;      // |mean ||g||^2 - sum J| / max(|lhs|, floor)
  double max_fisher_entry = 0.0;
  double max_grad_norm = 0.0;        // largest per-sample gradient L2 norm
  bool trace_pass = false;
  bool zero_limit_pass = false;      // entries < delta^2 whenever norms < delta
};

// Trace identity: mean per-sample squared gradient L2 norm equals the sum of
// the Joint Fisher diagonal (1e-9 relative). The zero-limit check uses
// delta = max_grad_norm.
FisherAuditReport fisher_audit(const ModelTopology& topo, const LayeredParams& params,
                               const Dataset& ds);

struct AblationConfig {
  int num_heterogeneous = 9;
  int samples_per_client = 80;
  double alpha = 0.05;
  int num_classes = 5;
  int64_t feature_dim = 8;
  double separation = 3.0;
  double noise = 1.0;
  std::vector<int64_t> hidden_dims = {16};
  int rounds = 40;
  int local_epochs = 5;
  int batch_size = 32;
  double lr = 0.05;
  double epsilon = 1e-8;
  uint64_t master_seed = 1;
};

struct WeightTraceRow {
  int round;
  NormKind norm;
  int client_id;
  double weight;
};

struct AblationResult {
  std::vector<WeightTraceRow> trace;
  int balanced_client = 0;  // id of c*
  // mean weight per client over the final 25% of rounds, per norm
  std::vector<std::pair<NormKind, std::vector<double>>> tail_means;
};

// The norm-type study: N-1 clients with Dirichlet(alpha) label skew and equal
// n_k, plus one perfectly balanced client, trained under FedVG once per norm
// in {L1, L2, Spectral, Delta} with shared seeds.
AblationResult balanced_client_ablation(const AblationConfig& config);

std::string weight_trace_csv(const std::vector<WeightTraceRow>& trace);

}  // namespace fedvg
