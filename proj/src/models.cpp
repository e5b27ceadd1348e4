#include "fedvg/models.hpp"

#include <cmath>

#include "fedvg/errors.hpp"
#include "fedvg/rng.hpp"

namespace fedvg {

namespace {

Tensor uniform_fan_in(const std::vector<int64_t>& shape, int64_t fan_in, Rng& rng) {
  Tensor t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

BuiltModel build_mlp(int64_t input_dim, const std::vector<int64_t>& hidden_dims,
                     int64_t num_classes, uint64_t init_seed) {
  if (input_dim <= 0 || num_classes <= 0) throw InputError("build_mlp: dims must be positive");
  for (int64_t h : hidden_dims)
    if (h <= 0) throw InputError("build_mlp: hidden dims must be positive");

  BuiltModel m;
  m.topology.input_shape = {input_dim};
  m.topology.num_classes = num_classes;

  Rng rng(derive_seed(init_seed, 0x6d6c70 /* "mlp" */));
  int64_t prev = input_dim;
  int block = 0;
  for (size_t i = 0; i < hidden_dims.size(); ++i) {
    const std::string id = "dense" + std::to_string(i + 1);
    m.topology.layers.push_back({LayerKind::Dense, id, prev, hidden_dims[i]});
    m.topology.layers.push_back({LayerKind::Relu, ""});
    m.topology.block_map[id] = "B" + std::to_string(block++);
    m.params.layers.push_back(
        {id, {uniform_fan_in({hidden_dims[i], prev}, prev, rng), Tensor({hidden_dims[i]})}});
    prev = hidden_dims[i];
  }
  m.topology.layers.push_back({LayerKind::Dense, "head", prev, num_classes});
  m.topology.block_map["head"] = "B" + std::to_string(block);
  m.params.layers.push_back(
      {"head", {uniform_fan_in({num_classes, prev}, prev, rng), Tensor({num_classes})}});
  return m;
}

BuiltModel build_tiny_cnn(int64_t height, int64_t width, int64_t channels,
                          int64_t num_classes, uint64_t init_seed) {
  if (height < 8 || width < 8) throw InputError("build_tiny_cnn: input must be at least 8x8");
  if (channels <= 0 || num_classes <= 0) throw InputError("build_tiny_cnn: dims must be positive");

  const int64_t c1h = height - 2, c1w = width - 2;        // conv1, 3x3 valid
  const int64_t p1h = c1h / 2, p1w = c1w / 2;             // pool
  const int64_t c2h = p1h - 2, c2w = p1w - 2;             // conv2
  const int64_t p2h = c2h / 2, p2w = c2w / 2;             // pool
  if (c2h < 1 || c2w < 1 || p2h < 1 || p2w < 1)
    throw InputError("build_tiny_cnn: input " + std::to_string(height) + "x" +
                     std::to_string(width) + " too small for two conv+pool stages");

  constexpr int64_t kFilters1 = 8, kFilters2 = 16;
  const int64_t head_in = p2h * p2w * kFilters2;

  BuiltModel m;
  m.topology.input_shape = {height, width, channels};
  m.topology.num_classes = num_classes;
  m.topology.layers = {
      {LayerKind::Conv2d, "conv1", 0, 0, channels, kFilters1, 3, 3},
      {LayerKind::Relu, ""},
      {LayerKind::MaxPool2, ""},
      {LayerKind::Conv2d, "conv2", 0, 0, kFilters1, kFilters2, 3, 3},
      {LayerKind::Relu, ""},
      {LayerKind::MaxPool2, ""},
      {LayerKind::Flatten, ""},
      {LayerKind::Dense, "head", head_in, num_classes},
  };
  m.topology.block_map = {{"conv1", "B0"}, {"conv2", "B1"}, {"head", "B2"}};

  Rng rng(derive_seed(init_seed, 0x636e6e /* "cnn" */));
  m.params.layers.push_back(
      {"conv1",
       {uniform_fan_in({kFilters1, channels, 3, 3}, channels * 9, rng), Tensor({kFilters1})}});
  m.params.layers.push_back(
      {"conv2",
       {uniform_fan_in({kFilters2, kFilters1, 3, 3}, kFilters1 * 9, rng), Tensor({kFilters2})}});
  m.params.layers.push_back(
      {"head", {uniform_fan_in({num_classes, head_in}, head_in, rng), Tensor({num_classes})}});
  return m;
}

}  // namespace fedvg
