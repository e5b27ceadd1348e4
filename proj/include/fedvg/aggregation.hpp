#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedvg/scoring.hpp"

namespace fedvg {

// Local update rule / server regularizer family. Validation-gradient
// weighting is orthogonal: plain FedVG is FedAvg local rules with
// Weighting::ValidationGrad, and any base strategy can be combined with it.
enum class StrategyKind { FedAvg, FedAvgM, FedProx, Scaffold, FedDyn };

enum class Weighting { DataSize, ValidationGrad, MeanOfBoth };

struct StrategyHyper {
  double server_momentum = 0.9;        // FedAvgM
  double prox_mu = 0.01;               // FedProx
  double dyn_alpha = 0.1;              // FedDyn
  double dyn_max_grad_norm = 10.0;     // FedDyn gradient clipping
  double scaffold_global_lr = 1.0;     // Scaffold server step size
};

// One client's contribution to a round. delta follows the paper's sign
// convention: delta = theta_g - theta_k.
struct ClientUpdate {
  int client_id = 0;
  LayeredParams delta;
  int64_t n_k = 0;
  std::optional<GradSet> control_delta;  // Scaffold: c_k_new - c_k
};

struct StrategyState {
  StrategyKind kind = StrategyKind::FedAvg;
  StrategyHyper hyper;
  int num_clients = 0;
  std::optional<LayeredParams> momentum_buf;   // FedAvgM server velocity
  std::optional<GradSet> server_control;       // Scaffold c
  std::vector<GradSet> client_controls;        // Scaffold c_k, one per client
  std::vector<GradSet> client_prev_grads;      // FedDyn per-client gradient trace
  std::optional<LayeredParams> drift_accum;    // FedDyn accumulated drift h

  static StrategyState init(StrategyKind kind, const StrategyHyper& hyper,
                            const LayeredParams& shape, int num_clients);
};

// theta_g <- theta_g - sum_k s_k * delta_k + R, with weights resolved per
// layer so modelwise/layerwise/blockwise all flow through one path. Updates
// strategy state (momentum, drift, control variates) in place.
LayeredParams aggregate(const LayeredParams& global, const std::vector<ClientUpdate>& updates,
                        const ScoreVector& weights, StrategyState& state);

// s_k = n_k / sum_j n_j over the round's sampled clients.
ScoreVector fedavg_weights(const std::vector<ClientUpdate>& updates);

struct FedVgConfig {
  NormKind norm = NormKind::L1;
  Granularity granularity = Granularity::Modelwise;
  double epsilon = 1e-8;
};

struct FedVgScores {
  ScoreVector scores;
  std::vector<ClientNormProfile> profiles;
};

// The FedVG scoring pipeline: full-batch validation gradients per client
// model, per-layer norms, inverse-norm weights at the configured granularity.
// The delta norm variant scores theta_g - theta_k instead.
FedVgScores fedvg_weights(const LayeredParams& global,
                          const std::vector<std::pair<int, const LayeredParams*>>& clients,
                          const ModelTopology& topo, const Dataset& global_val,
                          const FedVgConfig& config);

// Elementwise mean of two weight tables over the same clients and granularity.
ScoreVector hybrid_mean_weights(const ScoreVector& a, const ScoreVector& b);

// Per-client view of the strategy hooks a local training run needs.
struct LocalHook {
  StrategyKind kind = StrategyKind::FedAvg;
  double prox_mu = 0.0;
  double dyn_alpha = 0.0;
  double dyn_max_grad_norm = 0.0;
  const GradSet* dyn_prev_grad = nullptr;   // FedDyn
  const GradSet* server_control = nullptr;  // Scaffold c
  const GradSet* client_control = nullptr;  // Scaffold c_k
};

// Strategy-adjusted local loss:
//   FedProx: base + (mu/2)||theta - theta_g||^2
//   FedDyn:  base - <g_prev, theta> + (alpha/2)||theta - theta_g||^2
//   others:  base unchanged.
double local_objective(const LocalHook& hook, double base_loss, const LayeredParams& theta,
                       const LayeredParams& theta_g);

// Matching gradient adjustment, applied to grads in place. FedDyn also clips
// the adjusted gradient's global L2 norm at dyn_max_grad_norm. Scaffold adds
// its control-variate correction c - c_k.
void local_grad_adjust(const LocalHook& hook, GradSet& grads, const LayeredParams& theta,
                       const LayeredParams& theta_g);

// Scaffold's corrected step direction g - c_k + c.
GradSet scaffold_correct(const GradSet& grad, const GradSet& c, const GradSet& c_k);

// Folds the sampled clients' control deltas into c: c += (1/K) * sum Delta c_k.
void scaffold_server_update(StrategyState& state, const std::vector<ClientUpdate>& updates);

// Strategy regularizer R given the pre- and post-aggregation global models.
// FedAvg/FedProx (and FedVG weighting): zero. FedAvgM: -m*v with the velocity
// update folded in. Scaffold: rescales the step by the global lr. FedDyn:
// beta*(post - pre) with beta = dyn_alpha, accumulated into drift state.
LayeredParams server_regularizer(StrategyState& state, const LayeredParams& pre_update,
                                 const LayeredParams& post_update);

}  // namespace fedvg
