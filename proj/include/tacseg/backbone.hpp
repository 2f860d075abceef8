#pragma once

#include <string>
#include <vector>

#include "tacseg/graph.hpp"
#include "tacseg/params.hpp"

// Toy multi-stage convolutional encoder. Stage i applies
// conv3x3(pad 1) -> relu -> mean_pool2x2, then a 1x1 channel adapter maps the
// stage output to the shared embedding dimension E, so spatial sides halve
// per stage and every emitted map is [E x H_i x W_i].

namespace tacseg {

struct BackboneConfig {
  int depth = 5;
  std::vector<int> stage_channels = {8, 16, 32, 64, 128};
  int embed_dim = 32;
  int input_channels = 3;

  void validate() const {
    if (depth < 1) throw ConfigError("backbone: depth must be >= 1");
    if (static_cast<int>(stage_channels.size()) != depth)
      throw ConfigError("backbone: stage_channels has " +
                        std::to_string(stage_channels.size()) +
                        " entries for depth " + std::to_string(depth));
    if (embed_dim < 1) throw ConfigError("backbone: embed_dim must be >= 1");
    if (input_channels < 1)
      throw ConfigError("backbone: input_channels must be >= 1");
    for (int c : stage_channels)
      if (c < 1) throw ConfigError("backbone: stage channels must be >= 1");
  }

  void check_divisibility(std::size_t h, std::size_t w) const {
    const std::size_t div = std::size_t{1} << depth;
    if (h % div != 0 || w % div != 0)
      throw ConfigError("backbone: input " + std::to_string(h) + "x" +
                        std::to_string(w) +
                        " must have spatial extents divisible by " +
                        std::to_string(div) + " (depth " +
                        std::to_string(depth) + ")");
  }
};

inline std::string stage_conv_w(int i) {
  return "backbone.stage" + std::to_string(i) + ".conv.w";
}
inline std::string stage_conv_b(int i) {
  return "backbone.stage" + std::to_string(i) + ".conv.b";
}
inline std::string adapter_w(int i) {
  return "backbone.adapter" + std::to_string(i) + ".w";
}
inline std::string adapter_b(int i) {
  return "backbone.adapter" + std::to_string(i) + ".b";
}

// Conv kernels Kaiming-uniform over fan-in, biases zero. When
// identity_adapters is set and a stage already has E channels, its adapter
// starts as the identity (test hook for shape/value pass-through).
inline void init_backbone_params(const BackboneConfig& cfg, std::uint64_t seed,
                                 ParamStore& store,
                                 bool identity_adapters = false) {
  cfg.validate();
  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  std::size_t cin = static_cast<std::size_t>(cfg.input_channels);
  for (int i = 0; i < cfg.depth; ++i) {
    const auto cout = static_cast<std::size_t>(cfg.stage_channels[i]);
    store[stage_conv_w(i)] = kaiming_uniform({cout, cin, 3, 3}, cin * 9, 1.0,
                                             seed, stage_conv_w(i));
    store[stage_conv_b(i)] = Tensor::zeros({cout});
    if (identity_adapters && cout == e) {
      Tensor w({e, cout, 1, 1});
      for (std::size_t j = 0; j < e; ++j) w.at(j, j, 0, 0) = 1.0;
      store[adapter_w(i)] = std::move(w);
    } else {
      store[adapter_w(i)] =
          kaiming_uniform({e, cout, 1, 1}, cout, 1.0, seed, adapter_w(i));
    }
    store[adapter_b(i)] = Tensor::zeros({e});
    cin = cout;
  }
}

// 1x1 convolution to E channels; spatial extents preserved.
inline NodeId adapt_channels(Graph& g, NodeId f, const ParamStore& store,
                             int stage) {
  NodeId w = g.param(adapter_w(stage), param_ref(store, adapter_w(stage)));
  NodeId b = g.param(adapter_b(stage), param_ref(store, adapter_b(stage)));
  return g.add_channel_bias(g.conv2d(f, w, 1, 0), b);
}

// One adapted feature map per stage, deepest last.
inline std::vector<NodeId> backbone_forward(Graph& g, NodeId image,
                                            const BackboneConfig& cfg,
                                            const ParamStore& store) {
  cfg.validate();
  const Tensor& img = g.value(image);
  ops::require_rank(img, 3, "backbone_forward");
  cfg.check_divisibility(img.extent(1), img.extent(2));

  std::vector<NodeId> maps;
  maps.reserve(cfg.depth);
  NodeId x = image;
  for (int i = 0; i < cfg.depth; ++i) {
    NodeId w = g.param(stage_conv_w(i), param_ref(store, stage_conv_w(i)));
    NodeId b = g.param(stage_conv_b(i), param_ref(store, stage_conv_b(i)));
    x = g.mean_pool2x2(g.relu(g.add_channel_bias(g.conv2d(x, w, 1, 1), b)));
    maps.push_back(adapt_channels(g, x, store, i));
  }
  return maps;
}

// [E x H x W] -> [HW x E]; row r is the pixel at row-major spatial index r.
inline NodeId flatten_map(Graph& g, NodeId f) {
  const Tensor& v = g.value(f);
  ops::require_rank(v, 3, "flatten_map");
  return g.transpose2d(g.reshape(f, {v.extent(0), v.extent(1) * v.extent(2)}));
}

inline NodeId unflatten_map(Graph& g, NodeId x, std::size_t h, std::size_t w) {
  const Tensor& v = g.value(x);
  ops::require_rank(v, 2, "unflatten_map");
  if (v.extent(0) != h * w)
    throw DimensionError("unflatten_map: " + shape_str(v.shape()) +
                         " does not hold " + std::to_string(h) + "x" +
                         std::to_string(w) + " pixels");
  return g.reshape(g.transpose2d(x), {v.extent(1), h, w});
}

// Plain-tensor versions for tests and tools.
inline Tensor flatten_map_t(const Tensor& f) {
  ops::require_rank(f, 3, "flatten_map");
  return ops::transpose2d(
      ops::reshape(f, {f.extent(0), f.extent(1) * f.extent(2)}));
}

inline Tensor unflatten_map_t(const Tensor& x, std::size_t h, std::size_t w) {
  ops::require_rank(x, 2, "unflatten_map");
  if (x.extent(0) != h * w)
    throw DimensionError("unflatten_map: " + shape_str(x.shape()) +
                         " does not hold " + std::to_string(h) + "x" +
                         std::to_string(w) + " pixels");
  return ops::reshape(ops::transpose2d(x), {x.extent(1), h, w});
}

}  // namespace tacseg
