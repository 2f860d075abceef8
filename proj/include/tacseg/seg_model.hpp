#pragma once

#include <string>
#include <vector>

#include "tacseg/backbone.hpp"
#include "tacseg/fusion.hpp"
#include "tacseg/vit.hpp"

// Vanilla and transformer-assisted segmentation models sharing one decoder.
// Both run the same backbone; the fused variant additionally merges each
// feature map with its same-depth token matrix before decoding, so zeroing
// every token and fusion parameter makes the fused model reproduce the
// vanilla one bit for bit. The decoder walks up the pyramid with
// upsample -> concat skip -> conv3x3/relu, then a 1x1 head and a final
// upsample back to input resolution produce per-pixel foreground logits.

namespace tacseg {

enum class VariantKind { kVanilla, kFused };

inline const char* variant_name(VariantKind k) {
  return k == VariantKind::kVanilla ? "vanilla" : "fused";
}

inline VariantKind variant_from_name(const std::string& s) {
  if (s == "vanilla") return VariantKind::kVanilla;
  if (s == "fused") return VariantKind::kFused;
  throw ConfigError("unknown variant '" + s + "' (expected vanilla|fused)");
}

struct ModelConfig {
  VariantKind kind = VariantKind::kFused;
  BackboneConfig backbone;
  TokenConfig tokens;
  std::size_t img_h = 64;
  std::size_t img_w = 64;

  void validate() const {
    backbone.validate();
    backbone.check_divisibility(img_h, img_w);
    if (kind == VariantKind::kFused) {
      tokens.validate();
      if (tokens.embed_dim != backbone.embed_dim)
        throw ConfigError("model: token embed_dim " +
                          std::to_string(tokens.embed_dim) +
                          " != backbone embed_dim " +
                          std::to_string(backbone.embed_dim));
      if (tokens.depth != backbone.depth)
        throw ConfigError("model: token depth " +
                          std::to_string(tokens.depth) +
                          " != backbone depth " +
                          std::to_string(backbone.depth));
      tokens.latent_dim(img_h, img_w);
    }
  }
};

inline std::string decoder_up_w(int i) {
  return "decoder.up" + std::to_string(i) + ".w";
}
inline std::string decoder_up_b(int i) {
  return "decoder.up" + std::to_string(i) + ".b";
}

inline void init_decoder_params(const BackboneConfig& cfg, std::uint64_t seed,
                                ParamStore& store) {
  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  for (int i = cfg.depth - 2; i >= 0; --i) {
    store[decoder_up_w(i)] = kaiming_uniform({e, 2 * e, 3, 3}, 2 * e * 9, 1.0,
                                             seed, decoder_up_w(i));
    store[decoder_up_b(i)] = Tensor::zeros({e});
  }
  store["decoder.head.w"] =
      kaiming_uniform({1, e, 1, 1}, e, 1.0, seed, "decoder.head.w");
  store["decoder.head.b"] = Tensor::zeros({1});
}

inline void init_model_params(const ModelConfig& cfg, std::uint64_t seed,
                              ParamStore& store) {
  cfg.validate();
  init_backbone_params(cfg.backbone, seed, store);
  init_decoder_params(cfg.backbone, seed, store);
  if (cfg.kind == VariantKind::kFused) {
    init_vit_params(cfg.tokens, cfg.backbone.input_channels, cfg.img_h,
                    cfg.img_w, seed, store);
    init_fusion_params(cfg.backbone.depth, cfg.backbone.embed_dim, seed,
                       store);
  }
}

// Replaces every vit.* and fusion.* tensor with zeros of the same shape.
// With this store the fused forward equals the vanilla forward exactly.
inline ParamStore zero_fusion_path(const ParamStore& store) {
  ParamStore out = store;
  for (auto& [name, t] : out)
    if (name.rfind("vit.", 0) == 0 || name.rfind("fusion.", 0) == 0)
      t = Tensor::zeros(t.shape());
  return out;
}

namespace detail {

inline NodeId decode_maps(Graph& g, const std::vector<NodeId>& maps,
                          const ParamStore& store) {
  NodeId x = maps.back();
  for (int i = static_cast<int>(maps.size()) - 2; i >= 0; --i) {
    NodeId up = g.upsample_nearest2x(x);
    NodeId cat = g.concat_channels(up, maps[i]);
    NodeId w = g.param(decoder_up_w(i), param_ref(store, decoder_up_w(i)));
    NodeId b = g.param(decoder_up_b(i), param_ref(store, decoder_up_b(i)));
    x = g.relu(g.add_channel_bias(g.conv2d(cat, w, 1, 1), b));
  }
  NodeId hw = g.param("decoder.head.w", param_ref(store, "decoder.head.w"));
  NodeId hb = g.param("decoder.head.b", param_ref(store, "decoder.head.b"));
  NodeId logits_half = g.add_channel_bias(g.conv2d(x, hw, 1, 0), hb);
  return g.upsample_nearest2x(logits_half);
}

}  // namespace detail

// Per-pixel foreground logits [1 x H x W] at input resolution.
inline NodeId model_forward(Graph& g, NodeId image, const ModelConfig& cfg,
                            const ParamStore& store) {
  cfg.validate();
  const Tensor& img = g.value(image);
  ops::require_rank(img, 3, "model_forward");
  if (img.extent(1) != cfg.img_h || img.extent(2) != cfg.img_w)
    throw ConfigError("model: image " + shape_str(img.shape()) +
                      " does not match configured " +
                      std::to_string(cfg.img_h) + "x" +
                      std::to_string(cfg.img_w));

  std::vector<NodeId> maps = backbone_forward(g, image, cfg.backbone, store);
  if (cfg.kind == VariantKind::kFused) {
    std::vector<NodeId> tokens = token_states(g, image, cfg.tokens, store);
    maps = fuse_all(g, maps, tokens, store);
  }
  return detail::decode_maps(g, maps, store);
}

// Mean binary cross-entropy against a {0,1} mask of the same shape.
inline NodeId bce_loss(Graph& g, NodeId logits, Tensor target) {
  if (g.value(logits).shape() != target.shape())
    throw DimensionError("bce_loss: logits " +
                         shape_str(g.value(logits).shape()) + " vs target " +
                         shape_str(target.shape()));
  return g.bce_with_logits(logits, std::move(target));
}

}  // namespace tacseg
