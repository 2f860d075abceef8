#pragma once

#include <string>
#include <vector>

#include "tacseg/graph.hpp"
#include "tacseg/params.hpp"

// Small ViT-style encoder, independent of the convolutional path. The image
// is cut into non-overlapping patches, linearly projected to E and given a
// learned positional embedding; `depth` stacked pre-norm blocks then produce
// one token matrix [L x E] per backbone depth. No class token: tokens exist
// only to be fused with feature maps.

namespace tacseg {

struct TokenConfig {
  int patch = 8;
  int embed_dim = 32;
  int depth = 5;
  int heads = 4;
  int mlp_ratio = 2;

  void validate() const {
    if (patch < 1) throw ConfigError("vit: patch size must be >= 1");
    if (depth < 1) throw ConfigError("vit: depth must be >= 1");
    if (heads < 1) throw ConfigError("vit: heads must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("vit: mlp_ratio must be >= 1");
    if (embed_dim < 1 || embed_dim % heads != 0)
      throw ConfigError("vit: embed_dim " + std::to_string(embed_dim) +
                        " must be a positive multiple of heads " +
                        std::to_string(heads));
  }

  std::size_t latent_dim(std::size_t h, std::size_t w) const {
    const auto p = static_cast<std::size_t>(patch);
    if (h % p != 0 || w % p != 0)
      throw ConfigError("vit: patch size " + std::to_string(patch) +
                        " must divide image extents " + std::to_string(h) +
                        "x" + std::to_string(w));
    return (h / p) * (w / p);
  }
};

inline std::string vit_block_name(int i, const char* leaf) {
  return "vit.block" + std::to_string(i) + "." + leaf;
}

inline void init_vit_params(const TokenConfig& cfg, int in_channels,
                            std::size_t img_h, std::size_t img_w,
                            std::uint64_t seed, ParamStore& store) {
  cfg.validate();
  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t l = cfg.latent_dim(img_h, img_w);
  const std::size_t pvec = static_cast<std::size_t>(in_channels) *
                           static_cast<std::size_t>(cfg.patch) *
                           static_cast<std::size_t>(cfg.patch);

  store["vit.patch.w"] =
      kaiming_uniform({pvec, e}, pvec, 1.0, seed, "vit.patch.w");
  store["vit.patch.b"] = Tensor::zeros({e});
  store["vit.pos"] = Tensor::zeros({l, e});  // learned, zero start

  const auto hidden = e * static_cast<std::size_t>(cfg.mlp_ratio);
  for (int i = 0; i < cfg.depth; ++i) {
    store[vit_block_name(i, "ln1.gamma")] = Tensor::ones({e});
    store[vit_block_name(i, "ln1.beta")] = Tensor::zeros({e});
    for (const char* leaf : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      store[vit_block_name(i, leaf)] =
          kaiming_uniform({e, e}, e, 1.0, seed, vit_block_name(i, leaf));
    for (const char* leaf : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
      store[vit_block_name(i, leaf)] = Tensor::zeros({e});
    store[vit_block_name(i, "ln2.gamma")] = Tensor::ones({e});
    store[vit_block_name(i, "ln2.beta")] = Tensor::zeros({e});
    store[vit_block_name(i, "mlp.w1")] =
        kaiming_uniform({e, hidden}, e, 1.0, seed, vit_block_name(i, "mlp.w1"));
    store[vit_block_name(i, "mlp.b1")] = Tensor::zeros({hidden});
    store[vit_block_name(i, "mlp.w2")] = kaiming_uniform(
        {hidden, e}, hidden, 1.0, seed, vit_block_name(i, "mlp.w2"));
    store[vit_block_name(i, "mlp.b2")] = Tensor::zeros({e});
  }
}

// Patch embedding: flatten each PxP patch (channel-then-spatial, row-major),
// project to E, add the positional embedding. Tokens are ordered row-major
// over the patch grid.
inline NodeId patch_embed(Graph& g, NodeId image, const TokenConfig& cfg,
                          const ParamStore& store) {
  cfg.validate();
  NodeId patches = g.im2patches(image, cfg.patch);
  NodeId w = g.param("vit.patch.w", param_ref(store, "vit.patch.w"));
  NodeId b = g.param("vit.patch.b", param_ref(store, "vit.patch.b"));
  NodeId pos = g.param("vit.pos", param_ref(store, "vit.pos"));
  return g.add(g.add_row_bias(g.matmul(patches, w), b), pos);
}

namespace detail {

inline NodeId linear(Graph& g, NodeId x, const ParamStore& store,
                     const std::string& w, const std::string& b) {
  return g.add_row_bias(g.matmul(x, g.param(w, param_ref(store, w))),
                        g.param(b, param_ref(store, b)));
}

// Per-head scaled dot-product attention over pre-projected Q, K, V.
inline NodeId multi_head_attention(Graph& g, NodeId q, NodeId k, NodeId v,
                                   int heads) {
  const std::size_t e = g.value(q).extent(1);
  const std::size_t dh = e / static_cast<std::size_t>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  NodeId out = 0;
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh, c1 = (h + 1) * dh;
    NodeId qh = g.slice_cols(q, c0, c1);
    NodeId kh = g.slice_cols(k, c0, c1);
    NodeId vh = g.slice_cols(v, c0, c1);
    NodeId logits = g.mul_scalar(g.matmul(qh, g.transpose2d(kh)), scale);
    NodeId oh = g.matmul(g.softmax_rows(logits), vh);
    out = h == 0 ? oh : g.concat_cols(out, oh);
  }
  return out;
}

}  // namespace detail

// Pre-norm encoder block: x + MHSA(LN(x)), then + MLP(LN(.)).
inline NodeId transformer_block(Graph& g, NodeId x, const TokenConfig& cfg,
                                const ParamStore& store, int block) {
  cfg.validate();
  auto name = [block](const char* leaf) { return vit_block_name(block, leaf); };

  NodeId ln1 = g.layer_norm(
      x, g.param(name("ln1.gamma"), param_ref(store, name("ln1.gamma"))),
      g.param(name("ln1.beta"), param_ref(store, name("ln1.beta"))));
  NodeId q = detail::linear(g, ln1, store, name("attn.wq"), name("attn.bq"));
  NodeId k = detail::linear(g, ln1, store, name("attn.wk"), name("attn.bk"));
  NodeId v = detail::linear(g, ln1, store, name("attn.wv"), name("attn.bv"));
  NodeId attn = detail::multi_head_attention(g, q, k, v, cfg.heads);
  NodeId o = detail::linear(g, attn, store, name("attn.wo"), name("attn.bo"));
  NodeId h = g.add(x, o);

  NodeId ln2 = g.layer_norm(
      h, g.param(name("ln2.gamma"), param_ref(store, name("ln2.gamma"))),
      g.param(name("ln2.beta"), param_ref(store, name("ln2.beta"))));
  NodeId m1 = g.relu(detail::linear(g, ln2, store, name("mlp.w1"), name("mlp.b1")));
  NodeId m2 = detail::linear(g, m1, store, name("mlp.w2"), name("mlp.b2"));
  return g.add(h, m2);
}

// states[i] is the output of block i applied to the chain so far; exactly one
// token matrix per backbone depth.
inline std::vector<NodeId> token_states(Graph& g, NodeId image,
                                        const TokenConfig& cfg,
                                        const ParamStore& store) {
  std::vector<NodeId> states;
  states.reserve(cfg.depth);
  NodeId x = patch_embed(g, image, cfg, store);
  for (int i = 0; i < cfg.depth; ++i) {
    x = transformer_block(g, x, cfg, store, i);
    states.push_back(x);
  }
  return states;
}

}  // namespace tacseg
