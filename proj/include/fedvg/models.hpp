#pragma once

#include <cstdint>
#include <vector>

#include "fedvg/nn.hpp"

namespace fedvg {

struct BuiltModel {
  ModelTopology topology;
  LayeredParams params;
};

// Dense layers with ReLU between and a softmax head. Weights drawn uniformly
// from +-1/sqrt(fan_in), biases zero; the same seed rebuilds bit-identical
// params. Each dense layer is its own block, the head last.
BuiltModel build_mlp(int64_t input_dim, const std::vector<int64_t>& hidden_dims,
                     int64_t num_classes, uint64_t init_seed);

// conv(8,3x3)-relu-pool2 / conv(16,3x3)-relu-pool2 / flatten-dense head.
// Blocks: each conv stage one block, the head its own ("B0","B1","B2").
BuiltModel build_tiny_cnn(int64_t height, int64_t width, int64_t channels,
                          int64_t num_classes, uint64_t init_seed);

}  // namespace fedvg
