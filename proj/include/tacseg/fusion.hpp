#pragma once

#include <string>
#include <vector>

#include "tacseg/backbone.hpp"
#include "tacseg/graph.hpp"
#include "tacseg/params.hpp"

// Attention-style merge of a convolutional feature map with a token matrix:
//
//   S = C + softmax_rows((C Wq)(T Wk)^T) T
//
// with C [HW x E] as queries and T [L x E] as keys; the token matrix itself
// is the value. Note the transpose on (T Wk): multiplying [HW x E] by
// [L x E] does not conform, so the key product enters transposed — the only
// shape-consistent reading of the query/key pairing. Softmax normalizes over
// the L axis (one weight row per pixel). No logit scaling and no value
// projection here; plain SGD keeps the residual path dominant early because
// Wq, Wk start small (gain 0.1).

namespace tacseg {

inline std::string fusion_wq(int i) {
  return "fusion." + std::to_string(i) + ".wq";
}
inline std::string fusion_wk(int i) {
  return "fusion." + std::to_string(i) + ".wk";
}

// Independent Wq, Wk per depth, scaled-down Kaiming-uniform.
inline void init_fusion_params(int depth, int embed_dim, std::uint64_t seed,
                               ParamStore& store) {
  const auto e = static_cast<std::size_t>(embed_dim);
  for (int i = 0; i < depth; ++i) {
    store[fusion_wq(i)] = kaiming_uniform({e, e}, e, 0.1, seed, fusion_wq(i));
    store[fusion_wk(i)] = kaiming_uniform({e, e}, e, 0.1, seed, fusion_wk(i));
  }
}

inline void check_fuse_shapes(const Tensor& c, const Tensor& t,
                              const Tensor& wq, const Tensor& wk) {
  ops::require_rank(c, 2, "fuse");
  ops::require_rank(t, 2, "fuse");
  const std::size_t e = c.extent(1);
  if (t.extent(1) != e)
    throw DimensionError("fuse: tokens " + shape_str(t.shape()) +
                         " disagree with feature map E=" + std::to_string(e));
  if (wq.rank() != 2 || wq.extent(0) != e || wq.extent(1) != e)
    throw DimensionError("fuse: W_q " + shape_str(wq.shape()) +
                         " must be [" + std::to_string(e) + "x" +
                         std::to_string(e) + "]");
  if (wk.rank() != 2 || wk.extent(0) != e || wk.extent(1) != e)
    throw DimensionError("fuse: W_k " + shape_str(wk.shape()) +
                         " must be [" + std::to_string(e) + "x" +
                         std::to_string(e) + "]");
}

// c: [HW x E] flattened feature map, t: [L x E] tokens -> [HW x E].
inline NodeId fuse(Graph& g, NodeId c, NodeId t, NodeId wq, NodeId wk) {
  check_fuse_shapes(g.value(c), g.value(t), g.value(wq), g.value(wk));
  NodeId query = g.matmul(c, wq);
  NodeId key = g.matmul(t, wk);
  NodeId logits = g.matmul(query, g.transpose2d(key));  // [HW x L]
  NodeId weights = g.softmax_rows(logits);
  return g.add(c, g.matmul(weights, t));
}

// Per-depth fuse of adapted feature maps with token states; output shapes
// equal the input feature-map shapes.
inline std::vector<NodeId> fuse_all(Graph& g, const std::vector<NodeId>& maps,
                                    const std::vector<NodeId>& tokens,
                                    const ParamStore& store) {
  if (maps.size() != tokens.size())
    throw ConfigError("fuse_all: " + std::to_string(maps.size()) +
                      " feature maps vs " + std::to_string(tokens.size()) +
                      " token states");
  std::vector<NodeId> fused;
  fused.reserve(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const Tensor& m = g.value(maps[i]);
    const std::size_t h = m.extent(1), w = m.extent(2);
    NodeId wq = g.param(fusion_wq(static_cast<int>(i)),
                        param_ref(store, fusion_wq(static_cast<int>(i))));
    NodeId wk = g.param(fusion_wk(static_cast<int>(i)),
                        param_ref(store, fusion_wk(static_cast<int>(i))));
    NodeId s = fuse(g, flatten_map(g, maps[i]), tokens[i], wq, wk);
    fused.push_back(unflatten_map(g, s, h, w));
  }
  return fused;
}

}  // namespace tacseg
