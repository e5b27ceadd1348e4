#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedvg/tensor.hpp"

namespace fedvg {

// A model's parameters as an ordered list of named layers; a dense layer holds
// {weight, bias}, a conv layer {kernel, bias}. Layer order matches forward
// execution order.
struct NamedTensors {
  std::string layer_id;
  std::vector<Tensor> tensors;
};

struct LayeredParams {
  std::vector<NamedTensors> layers;

  bool congruent_with(const LayeredParams& o) const;
  // Throws StructuralError naming the first mismatching layer.
  void require_congruent(const LayeredParams& o, const std::string& context) const;
  const NamedTensors* find(const std::string& layer_id) const;
  int64_t param_count() const;
  bool all_finite() const;

  // Elementwise helpers over congruent structures.
  static LayeredParams zeros_like(const LayeredParams& p);
  void add_scaled(const LayeredParams& o, double factor);  // this += factor * o
  void scale(double factor);
};

// Per-layer gradients of a scalar loss, structurally parallel to the
// LayeredParams they were computed from.
using GradSet = LayeredParams;

enum class LayerKind { Dense, Relu, Conv2d, MaxPool2, Flatten };

struct LayerSpec {
  LayerKind kind;
  std::string id;  // non-empty only for parameterized layers (Dense, Conv2d)
  int64_t in_dim = 0, out_dim = 0;  // Dense
  int64_t in_c = 0, out_c = 0, kh = 0, kw = 0;  // Conv2d
};

struct ModelTopology {
  std::vector<LayerSpec> layers;  // execution order, activations included
  std::vector<int64_t> input_shape;  // {D} for flat input, {H,W,C} for images
  int64_t num_classes = 0;
  std::map<std::string, std::string> block_map;  // layer_id -> block_id

  std::vector<std::string> param_layer_ids() const;
  std::vector<std::string> block_ids_in_order() const;
  int64_t input_size() const;
};

// Logits of shape (batch, num_classes). Deterministic; throws StructuralError
// on any shape mismatch, naming the offending layer.
Tensor forward(const LayeredParams& params, const Tensor& batch_x, const ModelTopology& topo);

// Mean negative log-softmax probability of the true class, log-sum-exp form.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

struct BackwardResult {
  double loss;
  GradSet grads;
};

// Analytic gradients of cross_entropy(forward(.)) w.r.t. every parameter.
BackwardResult backward(const LayeredParams& params, const Tensor& batch_x,
                        const std::vector<int>& labels, const ModelTopology& topo);

// Optimizer state lives outside the params; reset it whenever a fresh local
// training run starts.
struct SgdState {
  std::optional<GradSet> velocity;
};

// With momentum m: v <- m*v + g, theta <- theta - lr*v. m = 0 degenerates to
// plain SGD without touching the velocity buffer.
void sgd_step(LayeredParams& params, const GradSet& grads, double lr, double momentum,
              SgdState& state);

// Top-1 accuracy of argmax(logits) against labels, ties to the lowest index.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace fedvg
