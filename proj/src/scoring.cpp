#include "fedvg/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace fedvg {

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::L1: return "l1";
    case NormKind::L2: return "l2";
    case NormKind::Spectral: return "spectral";
    case NormKind::Delta: return "delta";
  }
  return "?";
}

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::Modelwise: return "modelwise";
    case Granularity::Layerwise: return "layerwise";
    case Granularity::Blockwise: return "blockwise";
  }
  return "?";
}

double ScoreVector::weight_for(const std::string& layer_id, size_t client_pos) const {
  if (granularity == Granularity::Modelwise) return weights[0][client_pos];
  const auto it = layer_to_group.find(layer_id);
  if (it == layer_to_group.end())
    throw StructuralError("score vector has no group for layer '" + layer_id + "'");
  for (size_t g = 0; g < group_ids.size(); ++g)
    if (group_ids[g] == it->second) return weights[g][client_pos];
  throw StructuralError("score vector group '" + it->second + "' missing a weight row");
}

const std::vector<double>& ScoreVector::modelwise_row() const {
  if (granularity != Granularity::Modelwise)
    throw StructuralError("modelwise_row requested from a grouped score vector");
  return weights[0];
}

std::vector<double> ScoreVector::client_summary() const {
  std::vector<double> out(client_ids.size(), 0.0);
  for (const auto& row : weights)
    for (size_t k = 0; k < out.size(); ++k) out[k] += row[k];
  for (auto& v : out) v /= static_cast<double>(weights.size());
  return out;
}

void ScoreVector::check() const {
  if (client_ids.empty() || weights.empty())
    throw InputError("score vector: empty client set");
  for (const auto& row : weights) {
    if (row.size() != client_ids.size())
      throw StructuralError("score vector: row width does not match client count");
    double sum = 0.0;
    for (double w : row) {
      if (!(w >= 0.0 && w <= 1.0)) throw NumericError("score vector: weight outside [0,1]");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw NumericError("score vector: weight row sums to " + std::to_string(sum));
  }
}

double vector_norm(const std::vector<double>& values, NormKind kind) {
  if (values.empty()) throw InputError("vector_norm: empty input");
  double acc = 0.0;
  switch (kind) {
    case NormKind::L1:
      for (double v : values) {
        if (!std::isfinite(v)) throw NumericError("vector_norm: non-finite input");
        acc += std::abs(v);
      }
      return acc;
    case NormKind::L2:
      for (double v : values) {
        if (!std::isfinite(v)) throw NumericError("vector_norm: non-finite input");
        acc += v * v;
      }
      return std::sqrt(acc);
    default:
      throw InputError("vector_norm: only L1 and L2 apply to flat vectors");
  }
}

double spectral_norm(const Tensor& matrix, double tol, int max_iters) {
  if (matrix.rank() < 2) throw InputError("spectral_norm: tensor rank must be >= 2");
  const int64_t rows = matrix.dim(0);
  const int64_t cols = matrix.size() / rows;
  const double* a = matrix.data.data();

  bool all_zero = true;
  for (double v : matrix.data) {
    if (!std::isfinite(v)) throw NumericError("spectral_norm: non-finite input");
    if (v != 0.0) all_zero = false;
  }
  if (all_zero) return 0.0;

  // Power iteration on G^T G; the start vector is all ones, normalized.
  std::vector<double> v(static_cast<size_t>(cols), 1.0 / std::sqrt(static_cast<double>(cols)));
  std::vector<double> gv(static_cast<size_t>(rows));
  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    for (int64_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int64_t c = 0; c < cols; ++c) acc += a[r * cols + c] * v[static_cast<size_t>(c)];
      gv[static_cast<size_t>(r)] = acc;
    }
    double gv_norm = 0.0;
    for (double x : gv) gv_norm += x * x;
    const double sigma_new = std::sqrt(gv_norm);
    std::vector<double> w(static_cast<size_t>(cols), 0.0);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c)
        w[static_cast<size_t>(c)] += a[r * cols + c] * gv[static_cast<size_t>(r)];
    double w_norm = 0.0;
    for (double x : w) w_norm += x * x;
    w_norm = std::sqrt(w_norm);
    if (w_norm == 0.0) return sigma_new;  // G^T G v vanished; sigma_new is exact on this subspace
    for (size_t i = 0; i < w.size(); ++i) v[i] = w[i] / w_norm;
    if (std::abs(sigma_new - sigma) < tol) return sigma_new;
    sigma = sigma_new;
  }
  return sigma;
}

namespace {

double layer_norm_value(const std::vector<Tensor>& tensors, NormKind kind, bool* has_value) {
  *has_value = true;
  if (kind == NormKind::Spectral) {
    double acc = 0.0;
    int count = 0;
    for (const auto& t : tensors) {
      if (t.rank() < 2) continue;  // rank-1 tensors (biases) are excluded
      acc += spectral_norm(t);
      ++count;
    }
    if (count == 0) {
      *has_value = false;
      return 0.0;
    }
    return acc / count;
  }
  std::vector<double> flat;
  for (const auto& t : tensors) flat.insert(flat.end(), t.data.begin(), t.data.end());
  return vector_norm(flat, kind);
}

ClientNormProfile profile_from_layers(int client_id, const LayeredParams& layered, NormKind kind) {
  ClientNormProfile prof;
  prof.client_id = client_id;
  double sum = 0.0;
  int counted = 0;
  for (const auto& layer : layered.layers) {
    bool has = false;
    const double v = layer_norm_value(layer.tensors, kind, &has);
    if (!has) continue;
    if (!std::isfinite(v) || v < 0.0)
      throw NumericError("norm profile: invalid norm for layer '" + layer.layer_id + "'");
    prof.per_layer_norms.emplace_back(layer.layer_id, v);
    sum += v;
    ++counted;
  }
  if (counted == 0)
    throw InputError("norm profile: no layer qualifies under " + to_string(kind) + " norm");
  prof.mean_norm = sum / counted;
  return prof;
}

}  // namespace

ClientNormProfile mean_layerwise_grad_norm(int client_id, const GradSet& grads, NormKind kind) {
  if (kind == NormKind::Delta)
    throw InputError("mean_layerwise_grad_norm: delta norm consumes parameter differences");
  return profile_from_layers(client_id, grads, kind);
}

ClientNormProfile delta_norm(int client_id, const LayeredParams& global,
                             const LayeredParams& client, NormKind kind) {
  if (kind != NormKind::L1 && kind != NormKind::L2)
    throw InputError("delta_norm: inner norm must be L1 or L2");
  global.require_congruent(client, "delta_norm");
  LayeredParams diff = global;
  diff.add_scaled(client, -1.0);
  return profile_from_layers(client_id, diff, kind);
}

namespace {

// Shared inverse-norm normalization (Eq. 5 shape): one row per group.
std::vector<double> inverse_norm_row(const std::vector<double>& norms, double epsilon) {
  std::vector<double> raw(norms.size());
  double total = 0.0;
  for (size_t k = 0; k < norms.size(); ++k) {
    if (!(norms[k] >= 0.0) || !std::isfinite(norms[k]))
      throw NumericError("scores: norms must be finite and non-negative");
    raw[k] = 1.0 / (norms[k] + epsilon);
    total += raw[k];
  }
  for (auto& v : raw) v /= total;
  return raw;
}

}  // namespace

ScoreVector scores_from_norms(const std::vector<std::pair<int, double>>& norms, double epsilon) {
  if (norms.empty()) throw InputError("scores_from_norms: empty client set");
  if (epsilon <= 0.0) throw InputError("scores_from_norms: epsilon must be positive");
  ScoreVector sv;
  sv.granularity = Granularity::Modelwise;
  sv.group_ids = {"model"};
  std::vector<double> vals;
  for (const auto& [id, g] : norms) {
    sv.client_ids.push_back(id);
    vals.push_back(g);
  }
  sv.weights.push_back(inverse_norm_row(vals, epsilon));
  sv.check();
  return sv;
}

namespace {

void require_same_layer_set(const std::vector<ClientNormProfile>& profiles) {
  if (profiles.empty()) throw InputError("scores: empty client set");
  for (size_t k = 1; k < profiles.size(); ++k) {
    if (profiles[k].per_layer_norms.size() != profiles[0].per_layer_norms.size())
      throw StructuralError("scores: clients disagree on layer count");
    for (size_t l = 0; l < profiles[0].per_layer_norms.size(); ++l)
      if (profiles[k].per_layer_norms[l].first != profiles[0].per_layer_norms[l].first)
        throw StructuralError("scores: clients disagree on layer ids");
  }
}

}  // namespace

ScoreVector layerwise_scores(const std::vector<ClientNormProfile>& profiles, double epsilon) {
  require_same_layer_set(profiles);
  if (epsilon <= 0.0) throw InputError("layerwise_scores: epsilon must be positive");
  ScoreVector sv;
  sv.granularity = Granularity::Layerwise;
  for (const auto& p : profiles) sv.client_ids.push_back(p.client_id);
  for (size_t l = 0; l < profiles[0].per_layer_norms.size(); ++l) {
    const std::string& layer_id = profiles[0].per_layer_norms[l].first;
    std::vector<double> norms;
    for (const auto& p : profiles) norms.push_back(p.per_layer_norms[l].second);
    sv.group_ids.push_back(layer_id);
    sv.layer_to_group[layer_id] = layer_id;
    sv.weights.push_back(inverse_norm_row(norms, epsilon));
  }
  sv.check();
  return sv;
}

ScoreVector blockwise_scores(const std::vector<ClientNormProfile>& profiles,
                             const std::map<std::string, std::string>& block_map,
                             double epsilon) {
  require_same_layer_set(profiles);
  if (epsilon <= 0.0) throw InputError("blockwise_scores: epsilon must be positive");

  // Blocks in model order, from the layer order of the profiles.
  std::vector<std::string> block_order;
  for (const auto& [layer_id, _] : profiles[0].per_layer_norms) {
    const auto it = block_map.find(layer_id);
    if (it == block_map.end())
      throw StructuralError("blockwise_scores: layer '" + layer_id + "' not covered by block map");
    if (std::find(block_order.begin(), block_order.end(), it->second) == block_order.end())
      block_order.push_back(it->second);
  }

  ScoreVector sv;
  sv.granularity = Granularity::Blockwise;
  for (const auto& p : profiles) sv.client_ids.push_back(p.client_id);
  sv.group_ids = block_order;
  for (const auto& [layer_id, _] : profiles[0].per_layer_norms)
    sv.layer_to_group[layer_id] = block_map.at(layer_id);

  for (const auto& block : block_order) {
    std::vector<double> norms;
    for (const auto& p : profiles) {
      double sum = 0.0;
      int count = 0;
      for (const auto& [layer_id, g] : p.per_layer_norms) {
        if (block_map.at(layer_id) != block) continue;
        sum += g;
        ++count;
      }
      norms.push_back(sum / count);
    }
    sv.weights.push_back(inverse_norm_row(norms, epsilon));
  }
  sv.check();
  return sv;
}

HeatmapTable norm_heatmap(const std::vector<ClientNormProfile>& profiles) {
  require_same_layer_set(profiles);
  HeatmapTable table;
  for (const auto& [layer_id, _] : profiles[0].per_layer_norms) table.layer_ids.push_back(layer_id);
  for (const auto& p : profiles) {
    table.client_ids.push_back(p.client_id);
    std::vector<double> row;
    for (const auto& [_, g] : p.per_layer_norms) row.push_back(g);
    table.norms.push_back(std::move(row));
  }
  return table;
}

std::string heatmap_to_csv(const HeatmapTable& table) {
  std::string out = "client";
  for (size_t l = 0; l < table.layer_ids.size(); ++l) out += ",layer_" + std::to_string(l + 1);
  out += "\n";
  char buf[64];
  for (size_t r = 0; r < table.client_ids.size(); ++r) {
    out += std::to_string(table.client_ids[r]);
    for (double v : table.norms[r]) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

GradSet validation_gradient(const LayeredParams& params, const ModelTopology& topo,
                            const Dataset& val) {
  if (val.n() == 0) throw InputError("validation_gradient: empty dataset");
  return backward(params, val.features, val.labels, topo).grads;
}

GradSet fisher_diag(const LayeredParams& params, const ModelTopology& topo, const Dataset& ds) {
  if (ds.n() == 0) throw InputError("fisher_diag: empty dataset");
  GradSet acc = LayeredParams::zeros_like(params);
  const int64_t d = ds.feature_dim();
  for (int64_t s = 0; s < ds.n(); ++s) {
    Tensor x({1, d});
    std::copy_n(ds.features.data.data() + s * d, d, x.data.data());
    const auto bw = backward(params, x, {ds.labels[static_cast<size_t>(s)]}, topo);
    for (size_t l = 0; l < acc.layers.size(); ++l)
      for (size_t t = 0; t < acc.layers[l].tensors.size(); ++t) {
        auto& dst = acc.layers[l].tensors[t].data;
        const auto& g = bw.grads.layers[l].tensors[t].data;
        for (size_t k = 0; k < dst.size(); ++k) dst[k] += g[k] * g[k];
      }
  }
  acc.scale(1.0 / static_cast<double>(ds.n()));
  return acc;
}

}  // namespace fedvg
