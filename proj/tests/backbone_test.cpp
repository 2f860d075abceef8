#include <gtest/gtest.h>

#include "tacseg/backbone.hpp"
#include "tacseg/rng.hpp"

namespace tacseg {
namespace {

Tensor rand_tensor(Shape shape, RngStream& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

BackboneConfig tiny_cfg(int depth) {
  BackboneConfig cfg;
  cfg.depth = depth;
  cfg.stage_channels.assign(depth, 4);
  cfg.embed_dim = 4;
  cfg.input_channels = 3;
  return cfg;
}

TEST(Backbone, DepthOneShapeContract) {
  BackboneConfig cfg = tiny_cfg(1);
  ParamStore store;
  init_backbone_params(cfg, 1, store);
  Graph g;
  RngStream rng(2, "test.backbone.d1");
  auto maps = backbone_forward(g, g.input(rand_tensor({3, 8, 8}, rng)), cfg,
                               store);
  ASSERT_EQ(maps.size(), 1u);
  EXPECT_EQ(g.value(maps[0]).shape(), (Shape{4, 4, 4}));
}

TEST(Backbone, DepthFiveHalvesEachStage) {
  BackboneConfig cfg;  // defaults: depth 5, E 32
  ParamStore store;
  init_backbone_params(cfg, 1, store);
  Graph g;
  RngStream rng(3, "test.backbone.d5");
  auto maps = backbone_forward(g, g.input(rand_tensor({3, 64, 64}, rng)), cfg,
                               store);
  ASSERT_EQ(maps.size(), 5u);
  const std::size_t want_sides[5] = {32, 16, 8, 4, 2};
  for (int i = 0; i < 5; ++i) {
    const Tensor& m = g.value(maps[i]);
    EXPECT_EQ(m.extent(0), 32u);
    EXPECT_EQ(m.extent(1), want_sides[i]);
    EXPECT_EQ(m.extent(2), want_sides[i]);
  }
}

TEST(Backbone, ZeroImageZeroBiasGivesZeroMaps) {
  BackboneConfig cfg = tiny_cfg(2);
  ParamStore store;
  init_backbone_params(cfg, 1, store);  // biases start at zero
  Graph g;
  auto maps = backbone_forward(g, g.input(Tensor::zeros({3, 8, 8})), cfg,
                               store);
  for (NodeId m : maps) {
    const Tensor& v = g.value(m);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], 0.0);
  }
}

TEST(AdaptChannels, IdentityInitPassesThrough) {
  BackboneConfig cfg = tiny_cfg(1);  // stage channels 4 == E
  ParamStore store;
  init_backbone_params(cfg, 1, store, /*identity_adapters=*/true);
  Graph g;
  RngStream rng(4, "test.adapter.id");
  NodeId f = g.input(rand_tensor({4, 3, 3}, rng));
  NodeId y = adapt_channels(g, f, store, 0);
  EXPECT_TRUE(bit_equal(g.value(y), g.value(f)));
}

TEST(AdaptChannels, ZeroWeightsGiveZeroOutput) {
  ParamStore store;
  store[adapter_w(0)] = Tensor::zeros({4, 2, 1, 1});
  store[adapter_b(0)] = Tensor::zeros({4});
  Graph g;
  RngStream rng(5, "test.adapter.zero");
  NodeId y = adapt_channels(g, g.input(rand_tensor({2, 3, 3}, rng)), store, 0);
  const Tensor& v = g.value(y);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(AdaptChannels, MatchesPerPixelMatmulOracle) {
  RngStream rng(6, "test.adapter.oracle");
  ParamStore store;
  store[adapter_w(0)] = rand_tensor({4, 2, 1, 1}, rng);
  store[adapter_b(0)] = rand_tensor({4}, rng);
  Tensor x = rand_tensor({2, 3, 3}, rng);
  Graph g;
  NodeId y = adapt_channels(g, g.input(x), store, 0);
  const Tensor& got = g.value(y);
  ASSERT_EQ(got.shape(), (Shape{4, 3, 3}));
  // 1x1 conv == per-pixel matrix multiply over channels, plus bias
  const Tensor& w = store[adapter_w(0)];
  const Tensor& b = store[adapter_b(0)];
  for (std::size_t co = 0; co < 4; ++co)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = b[co];
        for (std::size_t ci = 0; ci < 2; ++ci)
          acc += w.at(co, ci, 0, 0) * x.at(ci, r, c);
        EXPECT_NEAR(got.at(co, r, c), acc, 1e-12);
      }
}

TEST(FlattenMap, SinglePixelMapBecomesOneRow) {
  Graph g;
  Tensor f({3, 1, 1}, {7, 8, 9});
  NodeId y = flatten_map(g, g.input(f));
  ASSERT_EQ(g.value(y).shape(), (Shape{1, 3}));
  EXPECT_EQ(g.value(y).at(0, 0), 7.0);
  EXPECT_EQ(g.value(y).at(0, 2), 9.0);
}

TEST(FlattenMap, RoundTripIsBitExact) {
  RngStream rng(7, "test.flatten.rt");
  Tensor f = rand_tensor({3, 2, 2}, rng);
  EXPECT_TRUE(bit_equal(unflatten_map_t(flatten_map_t(f), 2, 2), f));
}

TEST(FlattenMap, RowMajorPixelOrder) {
  Graph g;
  Tensor f({2, 2, 2});
  // channel 0 holds pixel ids 0..3 in row-major order
  f.at(0, 0, 0) = 0;
  f.at(0, 0, 1) = 1;
  f.at(0, 1, 0) = 2;
  f.at(0, 1, 1) = 3;
  const Tensor flat = flatten_map_t(f);
  // row 2 of the flattened matrix is pixel (1,0)
  EXPECT_EQ(flat.at(2, 0), 2.0);
}

TEST(FlattenMap, MismatchedPixelCountIsDimensionError) {
  Tensor x({3, 4});  // 3 rows cannot be a 2x2 pixel grid
  EXPECT_THROW(unflatten_map_t(x, 2, 2), DimensionError);
}

TEST(Backbone, GradientsReachEveryStage) {
  BackboneConfig cfg = tiny_cfg(3);
  ParamStore store;
  init_backbone_params(cfg, 11, store);
  Graph g;
  RngStream rng(12, "test.backbone.grads");
  auto maps = backbone_forward(g, g.input(rand_tensor({3, 16, 16}, rng)), cfg,
                               store);
  NodeId loss = g.sum_all(maps[0]);
  for (std::size_t i = 1; i < maps.size(); ++i)
    loss = g.add(loss, g.sum_all(maps[i]));
  GradMap grads = g.backward(loss);
  for (int i = 0; i < cfg.depth; ++i) {
    for (const std::string& name :
         {stage_conv_w(i), stage_conv_b(i), adapter_w(i), adapter_b(i)}) {
      const Tensor& grad = grads.at(name);
      double mag = 0.0;
      for (std::size_t j = 0; j < grad.size(); ++j) mag += std::abs(grad[j]);
      EXPECT_GT(mag, 0.0) << "dead gradient for " << name;
    }
  }
}

TEST(Backbone, IndivisibleExtentIsConfigError) {
  BackboneConfig cfg;  // depth 5 needs divisibility by 32
  ParamStore store;
  init_backbone_params(cfg, 1, store);
  Graph g;
  try {
    backbone_forward(g, g.input(Tensor::zeros({3, 48, 48})), cfg, store);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("divisible by 32"),
              std::string::npos);
  }
}

TEST(Backbone, OutputCountEqualsDepth) {
  for (int depth : {1, 2, 4}) {
    BackboneConfig cfg = tiny_cfg(depth);
    ParamStore store;
    init_backbone_params(cfg, 1, store);
    Graph g;
    auto maps = backbone_forward(g, g.input(Tensor::zeros({3, 32, 32})), cfg,
                                 store);
    EXPECT_EQ(static_cast<int>(maps.size()), depth);
  }
}

}  // namespace
}  // namespace tacseg
