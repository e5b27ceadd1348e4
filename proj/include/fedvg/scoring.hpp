#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedvg/data.hpp"
#include "fedvg/nn.hpp"

namespace fedvg {

// L1/L2/Spectral consume validation gradients; Delta consumes the parameter
// difference between the global model and a client model.
enum class NormKind { L1, L2, Spectral, Delta };

enum class Granularity { Modelwise, Layerwise, Blockwise };

std::string to_string(NormKind k);
std::string to_string(Granularity g);

// Per-layer norms for one client plus their arithmetic mean (the client's
// mean layerwise gradient norm). Layers appear in model order.
struct ClientNormProfile {
  int client_id = 0;
  std::vector<std::pair<std::string, double>> per_layer_norms;
  double mean_norm = 0.0;
};

// Normalized aggregation weights. Modelwise carries one weight per client;
// layerwise/blockwise carry one weight row per group, resolved through
// layer_to_group. Every row sums to 1.
struct ScoreVector {
  Granularity granularity = Granularity::Modelwise;
  std::vector<int> client_ids;                      // ascending
  std::vector<std::string> group_ids;               // model order; {"model"} when modelwise
  std::vector<std::vector<double>> weights;         // [group][client]
  std::map<std::string, std::string> layer_to_group;  // empty when modelwise

  double weight_for(const std::string& layer_id, size_t client_pos) const;
  const std::vector<double>& modelwise_row() const;  // requires Modelwise
  // Mean weight per client across groups; equals the single row when modelwise.
  std::vector<double> client_summary() const;
  void check() const;  // rows sum to 1 within 1e-9, entries in [0,1]
};

double vector_norm(const std::vector<double>& values, NormKind kind);  // L1 or L2

// Largest singular value via power iteration on G^T G, all-ones start vector,
// converged when successive estimates differ by less than tol. Tensors of
// rank > 2 are folded to (shape[0], rest); an all-zero matrix returns 0.
double spectral_norm(const Tensor& matrix, double tol = 1e-10, int max_iters = 1000);

// Mean over layers of the per-layer gradient norm. For L1/L2 a layer's tensors
// are flattened together; for Spectral only rank>=2 tensors count, averaged
// within the layer, and layers with no such tensor drop out of the mean.
ClientNormProfile mean_layerwise_grad_norm(int client_id, const GradSet& grads, NormKind kind);

// Same shape of result, but over theta_g - theta_k instead of gradients.
ClientNormProfile delta_norm(int client_id, const LayeredParams& global,
                             const LayeredParams& client, NormKind kind);

// Inverse-norm normalization: s_k = (1/(G_k+eps)) / sum_j (1/(G_j+eps)).
ScoreVector scores_from_norms(const std::vector<std::pair<int, double>>& norms,
                              double epsilon = 1e-8);

// Per-layer inverse-norm weight rows from congruent client grad profiles.
ScoreVector layerwise_scores(const std::vector<ClientNormProfile>& profiles, double epsilon = 1e-8);

// Per-block weight rows; a block's norm is the mean of its layers' norms.
ScoreVector blockwise_scores(const std::vector<ClientNormProfile>& profiles,
                             const std::map<std::string, std::string>& block_map,
                             double epsilon = 1e-8);

// Client x layer matrix of per-layer norms, stable layer ordering.
struct HeatmapTable {
  std::vector<int> client_ids;
  std::vector<std::string> layer_ids;
  std::vector<std::vector<double>> norms;  // [client][layer]
};

HeatmapTable norm_heatmap(const std::vector<ClientNormProfile>& profiles);

// CSV with header "client,layer_1,...,layer_L"; columns follow model order.
std::string heatmap_to_csv(const HeatmapTable& table);

// Gradient of the batch-mean validation loss over the whole dataset.
GradSet validation_gradient(const LayeredParams& params, const ModelTopology& topo,
                            const Dataset& val);

// Empirical Joint Fisher diagonal: mean over samples of the elementwise
// square of each sample's own loss gradient.
GradSet fisher_diag(const LayeredParams& params, const ModelTopology& topo, const Dataset& ds);

}  // namespace fedvg
