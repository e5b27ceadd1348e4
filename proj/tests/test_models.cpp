#include <doctest.h>

#include "fedvg/models.hpp"
#include "testutil.hpp"

using namespace fedvg;

TEST_CASE("build_mlp: logistic regression shape") {
  const auto m = build_mlp(2, {}, 2, 3);
  CHECK(m.params.layers.size() == 1);
  CHECK(m.topology.block_ids_in_order().size() == 1);
  CHECK(m.params.param_count() == 6);  // 4 weights + 2 biases
  CHECK(m.params.layers[0].layer_id == "head");
}

TEST_CASE("build_mlp: one hidden layer parameter count") {
  const auto m = build_mlp(4, {8}, 3, 3);
  CHECK(m.params.layers.size() == 2);
  CHECK(m.topology.block_ids_in_order().size() == 2);
  CHECK(m.params.param_count() == 67);  // 4*8+8 + 8*3+3
  CHECK(m.topology.block_map.at("head") != m.topology.block_map.at("dense1"));
}

TEST_CASE("build_mlp: determinism and input validation") {
  const auto a = build_mlp(5, {7, 3}, 4, 99);
  const auto b = build_mlp(5, {7, 3}, 4, 99);
  CHECK(testutil::bitwise_equal(a.params, b.params));
  const auto c = build_mlp(5, {7, 3}, 4, 100);
  CHECK_FALSE(testutil::bitwise_equal(a.params, c.params));
  CHECK_THROWS_AS(build_mlp(0, {}, 2, 1), InputError);
  CHECK_THROWS_AS(build_mlp(2, {0}, 2, 1), InputError);
}

TEST_CASE("build_tiny_cnn: stage shapes for 28x28x1") {
  const auto m = build_tiny_cnn(28, 28, 1, 10, 1);
  // conv1 26x26x8, pool 13x13x8, conv2 11x11x16, pool 5x5x16 -> head in 400
  const auto& head = m.topology.layers.back();
  CHECK(head.kind == LayerKind::Dense);
  CHECK(head.in_dim == 400);
  CHECK(m.params.layers[0].tensors[0].size() + m.params.layers[0].tensors[1].size() == 80);
  CHECK(m.params.layers[1].tensors[0].size() + m.params.layers[1].tensors[1].size() == 1168);
  CHECK(m.params.layers[2].tensors[0].size() + m.params.layers[2].tensors[1].size() ==
        400 * 10 + 10);
}

TEST_CASE("build_tiny_cnn: block map by construction") {
  const auto m = build_tiny_cnn(12, 12, 1, 3, 1);
  CHECK(m.topology.block_map.at("conv1") == "B0");
  CHECK(m.topology.block_map.at("conv2") == "B1");
  CHECK(m.topology.block_map.at("head") == "B2");
  CHECK(m.topology.param_layer_ids() == std::vector<std::string>{"conv1", "conv2", "head"});
}

TEST_CASE("build_tiny_cnn: rejects inputs too small for both stages") {
  CHECK_THROWS_AS(build_tiny_cnn(8, 8, 1, 2, 1), InputError);   // second pool collapses
  CHECK_THROWS_AS(build_tiny_cnn(7, 12, 1, 2, 1), InputError);  // below the 8x8 floor
  CHECK_NOTHROW(build_tiny_cnn(10, 10, 1, 2, 1));
}

TEST_CASE("layer order matches forward execution order") {
  const auto m = build_mlp(3, {5, 4}, 2, 8);
  std::vector<std::string> from_params;
  for (const auto& l : m.params.layers) from_params.push_back(l.layer_id);
  CHECK(from_params == m.topology.param_layer_ids());
  CHECK(from_params == std::vector<std::string>{"dense1", "dense2", "head"});
}

TEST_CASE("forward runs end to end on the tiny CNN") {
  const auto m = build_tiny_cnn(12, 12, 2, 4, 5);
  const Tensor x = testutil::random_tensor({3, 12 * 12 * 2}, 17);
  const Tensor logits = forward(m.params, x, m.topology);
  CHECK(logits.shape == std::vector<int64_t>{3, 4});
}
