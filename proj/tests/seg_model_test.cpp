#include <gtest/gtest.h>

#include "tacseg/rng.hpp"
#include "tacseg/seg_model.hpp"

namespace tacseg {
namespace {

Tensor rand_image(std::size_t h, std::size_t w, RngStream& rng) {
  Tensor t({3, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, 1.0);
  return t;
}

ModelConfig tiny_model(VariantKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.backbone.depth = 2;
  cfg.backbone.stage_channels = {4, 6};
  cfg.backbone.embed_dim = 8;
  cfg.tokens.patch = 4;
  cfg.tokens.embed_dim = 8;
  cfg.tokens.depth = 2;
  cfg.tokens.heads = 2;
  cfg.tokens.mlp_ratio = 2;
  cfg.img_h = 16;
  cfg.img_w = 16;
  return cfg;
}

TEST(SegModel, ZeroedFusionPathBitEqualsVanilla) {
  ModelConfig fused_cfg = tiny_model(VariantKind::kFused);
  ModelConfig vanilla_cfg = tiny_model(VariantKind::kVanilla);

  ParamStore fused_params, vanilla_params;
  init_model_params(fused_cfg, 5, fused_params);
  init_model_params(vanilla_cfg, 5, vanilla_params);
  ParamStore ablated = zero_fusion_path(fused_params);

  RngStream rng(6, "test.model.ablation");
  for (int trial = 0; trial < 10; ++trial) {
    Tensor img = rand_image(16, 16, rng);
    Graph gf, gv;
    NodeId yf = model_forward(gf, gf.input(img), fused_cfg, ablated);
    NodeId yv = model_forward(gv, gv.input(img), vanilla_cfg, vanilla_params);
    EXPECT_TRUE(bit_equal(gf.value(yf), gv.value(yv))) << "trial " << trial;
  }
}

TEST(SegModel, LogitsMatchInputResolution) {
  ModelConfig cfg;  // defaults: 64x64, depth 5, fused
  cfg.tokens.patch = 8;
  ParamStore params;
  init_model_params(cfg, 7, params);
  Graph g;
  RngStream rng(8, "test.model.shape");
  NodeId y = model_forward(g, g.input(rand_image(64, 64, rng)), cfg, params);
  EXPECT_EQ(g.value(y).shape(), (Shape{1, 64, 64}));
  EXPECT_TRUE(g.value(y).all_finite());
}

TEST(SegModel, WrongImageSizeIsConfigError) {
  ModelConfig cfg = tiny_model(VariantKind::kVanilla);
  ParamStore params;
  init_model_params(cfg, 1, params);
  Graph g;
  EXPECT_THROW(
      model_forward(g, g.input(Tensor::zeros({3, 32, 32})), cfg, params),
      ConfigError);
}

TEST(BceLoss, ZeroLogitsGiveLnTwo) {
  Graph g;
  NodeId z = g.input(Tensor::zeros({1, 2, 2}));
  Tensor target({1, 2, 2}, {1, 0, 1, 0});
  NodeId loss = bce_loss(g, z, target);
  EXPECT_NEAR(g.value(loss).item(), std::log(2.0), 1e-12);
}

TEST(BceLoss, SaturatedCorrectLogitsNearZero) {
  Graph g;
  Tensor z({1, 2, 2}, {100, -100, 100, -100});
  Tensor target({1, 2, 2}, {1, 0, 1, 0});
  NodeId loss = bce_loss(g, g.input(z), target);
  EXPECT_LT(g.value(loss).item(), 1e-6);
}

TEST(BceLoss, MatchesScalarOracle) {
  RngStream rng(9, "test.bce.oracle");
  Tensor z({1, 2, 2});
  Tensor y({1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) {
    z[i] = rng.uniform(-3.0, 3.0);
    y[i] = rng.coin() ? 1.0 : 0.0;
  }
  Graph g;
  NodeId loss = bce_loss(g, g.input(z), y);
  double want = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    want += std::max(z[i], 0.0) - z[i] * y[i] +
            std::log1p(std::exp(-std::abs(z[i])));
  want /= 4.0;
  EXPECT_NEAR(g.value(loss).item(), want, 1e-12);
}

TEST(BceLoss, ShapeMismatchIsDimensionError) {
  Graph g;
  NodeId z = g.input(Tensor::zeros({1, 2, 2}));
  EXPECT_THROW(bce_loss(g, z, Tensor::zeros({1, 4, 4})), DimensionError);
}

TEST(SegModel, GradientsReachEveryParameterGroup) {
  ModelConfig cfg = tiny_model(VariantKind::kFused);
  ParamStore params;
  init_model_params(cfg, 11, params);
  Graph g;
  RngStream rng(12, "test.model.grads");
  NodeId y = model_forward(g, g.input(rand_image(16, 16, rng)), cfg, params);
  Tensor target = Tensor::zeros({1, 16, 16});
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = rng.coin() ? 1.0 : 0.0;
  GradMap grads = g.backward(bce_loss(g, y, target));

  auto live = [&grads](const std::string& name) {
    const Tensor& t = grads.at(name);
    double mag = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) mag += std::abs(t[i]);
    return mag > 0.0;
  };
  EXPECT_TRUE(live(fusion_wq(0)));
  EXPECT_TRUE(live(fusion_wk(1)));
  EXPECT_TRUE(live("vit.patch.w"));
  EXPECT_TRUE(live(vit_block_name(0, "attn.wq")));
  EXPECT_TRUE(live(vit_block_name(1, "mlp.w1")));
  EXPECT_TRUE(live(stage_conv_w(0)));
  EXPECT_TRUE(live(stage_conv_w(1)));
  EXPECT_TRUE(live(decoder_up_w(0)));
  EXPECT_TRUE(live("decoder.head.w"));
}

TEST(SegModel, OneSgdStepDecreasesLoss) {
  ModelConfig cfg = tiny_model(VariantKind::kFused);
  ParamStore params;
  init_model_params(cfg, 13, params);
  RngStream rng(14, "test.model.step");
  Tensor img = rand_image(16, 16, rng);
  Tensor target = Tensor::zeros({1, 16, 16});
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = rng.coin() ? 1.0 : 0.0;

  auto loss_of = [&](const ParamStore& p) {
    Graph g;
    NodeId y = model_forward(g, g.input(img), cfg, p);
    return g.value(bce_loss(g, y, target)).item();
  };

  Graph g;
  NodeId y = model_forward(g, g.input(img), cfg, params);
  NodeId loss = bce_loss(g, y, target);
  const double before = g.value(loss).item();
  GradMap grads = g.backward(loss);
  const double lr = 1e-2;
  for (auto& [name, t] : params) {
    const Tensor& grad = grads.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] -= lr * grad[i];
  }
  const double after = loss_of(params);
  EXPECT_LT(after, before);
}

TEST(SegModel, VanillaIgnoresFusionParams) {
  // a vanilla store has no vit/fusion entries and the forward must not ask
  ModelConfig cfg = tiny_model(VariantKind::kVanilla);
  ParamStore params;
  init_model_params(cfg, 15, params);
  for (const auto& [name, t] : params) {
    EXPECT_EQ(name.rfind("vit.", 0), std::string::npos);
    EXPECT_EQ(name.rfind("fusion.", 0), std::string::npos);
  }
  Graph g;
  RngStream rng(16, "test.model.vanilla");
  NodeId y = model_forward(g, g.input(rand_image(16, 16, rng)), cfg, params);
  EXPECT_EQ(g.value(y).shape(), (Shape{1, 16, 16}));
}

}  // namespace
}  // namespace tacseg
