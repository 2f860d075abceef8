#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tacseg/tensor.hpp"
#include "tacseg/tensor_ops.hpp"

namespace tacseg {

using NodeId = std::size_t;
using GradMap = std::map<std::string, Tensor>;

enum class Op {
  kLeaf,
  kAdd,
  kMul,
  kMulScalar,
  kRelu,
  kMatmul,
  kTranspose2d,
  kReshape,
  kSoftmaxRows,
  kLayerNorm,
  kConv2d,
  kMeanPool2x2,
  kUpsampleNearest2x,
  kConcatChannels,
  kConcatCols,
  kSliceCols,
  kAddRowBias,
  kAddChannelBias,
  kIm2Patches,
  kSumAll,
  kBceWithLogits,
};

// Append-only tape of op records. Values are computed eagerly on record, so
// node inputs always precede the node and a reverse index sweep is a reverse
// topological order. One graph per forward/backward pass; single-threaded.
class Graph {
 public:
  NodeId input(Tensor v) { return push(Op::kLeaf, {}, std::move(v)); }

  // Get-or-create: re-registering a name returns the existing node and keeps
  // its first value, so layer code that looks params up by name composes with
  // callers that pre-register (possibly perturbed) leaves.
  NodeId param(std::string name, Tensor v) {
    if (name.empty()) throw ContractError("param: name must be non-empty");
    if (auto it = param_ids_.find(name); it != param_ids_.end()) {
      if (nodes_[it->second].val.shape() != v.shape())
        throw ContractError("param: '" + name + "' re-registered with shape " +
                            shape_str(v.shape()) + ", have " +
                            shape_str(nodes_[it->second].val.shape()));
      return it->second;
    }
    NodeId id = push(Op::kLeaf, {}, std::move(v));
    nodes_[id].trainable = true;
    nodes_[id].name = name;
    param_ids_.emplace(std::move(name), id);
    return id;
  }

  const Tensor& value(NodeId id) const { return nodes_[id].val; }
  std::size_t size() const { return nodes_.size(); }

  NodeId add(NodeId a, NodeId b) {
    return push(Op::kAdd, {a, b}, ops::add(val(a), val(b)));
  }
  NodeId mul(NodeId a, NodeId b) {
    return push(Op::kMul, {a, b}, ops::mul(val(a), val(b)));
  }
  NodeId mul_scalar(NodeId a, double s) {
    NodeId id = push(Op::kMulScalar, {a}, ops::mul_scalar(val(a), s));
    nodes_[id].scalar = s;
    return id;
  }
  NodeId relu(NodeId a) { return push(Op::kRelu, {a}, ops::relu(val(a))); }
  NodeId matmul(NodeId a, NodeId b) {
    return push(Op::kMatmul, {a, b}, ops::matmul(val(a), val(b)));
  }
  NodeId transpose2d(NodeId a) {
    return push(Op::kTranspose2d, {a}, ops::transpose2d(val(a)));
  }
  NodeId reshape(NodeId a, Shape shape) {
    return push(Op::kReshape, {a}, ops::reshape(val(a), std::move(shape)));
  }
  NodeId softmax_rows(NodeId a) {
    return push(Op::kSoftmaxRows, {a}, ops::softmax_rows(val(a)));
  }
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5) {
    NodeId id = push(Op::kLayerNorm, {x, gamma, beta},
                     ops::layer_norm(val(x), val(gamma), val(beta), eps));
    nodes_[id].scalar = eps;
    return id;
  }
  NodeId conv2d(NodeId x, NodeId k, int stride, int pad) {
    NodeId id =
        push(Op::kConv2d, {x, k}, ops::conv2d(val(x), val(k), stride, pad));
    nodes_[id].a0 = stride;
    nodes_[id].a1 = pad;
    return id;
  }
  NodeId mean_pool2x2(NodeId a) {
    return push(Op::kMeanPool2x2, {a}, ops::mean_pool2x2(val(a)));
  }
  NodeId upsample_nearest2x(NodeId a) {
    return push(Op::kUpsampleNearest2x, {a}, ops::upsample_nearest2x(val(a)));
  }
  NodeId concat_channels(NodeId a, NodeId b) {
    return push(Op::kConcatChannels, {a, b},
                ops::concat_channels(val(a), val(b)));
  }
  NodeId concat_cols(NodeId a, NodeId b) {
    return push(Op::kConcatCols, {a, b}, ops::concat_cols(val(a), val(b)));
  }
  NodeId slice_cols(NodeId a, std::size_t c0, std::size_t c1) {
    NodeId id = push(Op::kSliceCols, {a}, ops::slice_cols(val(a), c0, c1));
    nodes_[id].a0 = static_cast<int>(c0);
    return id;
  }
  NodeId add_row_bias(NodeId x, NodeId b) {
    return push(Op::kAddRowBias, {x, b}, ops::add_row_bias(val(x), val(b)));
  }
  NodeId add_channel_bias(NodeId x, NodeId b) {
    return push(Op::kAddChannelBias, {x, b},
                ops::add_channel_bias(val(x), val(b)));
  }
  NodeId im2patches(NodeId x, int patch) {
    NodeId id = push(Op::kIm2Patches, {x}, ops::im2patches(val(x), patch));
    nodes_[id].a0 = patch;
    return id;
  }
  NodeId sum_all(NodeId a) {
    return push(Op::kSumAll, {a}, ops::sum_all(val(a)));
  }
  // Target is a constant of the record, not a differentiable input.
  NodeId bce_with_logits(NodeId z, Tensor target) {
    Tensor loss = Tensor::scalar(ops::bce_with_logits_value(val(z), target));
    NodeId id = push(Op::kBceWithLogits, {z}, std::move(loss));
    nodes_[id].aux = std::move(target);
    return id;
  }

  // Reverse-mode sweep from a scalar loss node. Returns the gradient for
  // every registered parameter (zeros when the loss does not depend on it).
  GradMap backward(NodeId loss) {
    if (val(loss).size() != 1)
      throw ContractError("backward: loss must be scalar, got " +
                          shape_str(val(loss).shape()));
    grads_.assign(nodes_.size(), Tensor());
    grads_[loss] = Tensor::ones(val(loss).shape());
    for (NodeId id = loss + 1; id-- > 0;) {
      if (grads_[id].empty()) continue;
      step_back(id);
    }
    GradMap out;
    for (const auto& [name, id] : param_ids_) {
      out[name] =
          grads_[id].empty() ? Tensor::zeros(val(id).shape()) : grads_[id];
    }
    return out;
  }

  // Gradient w.r.t. any node, valid after backward(); empty if unreached.
  const Tensor& grad(NodeId id) const { return grads_[id]; }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<NodeId> in;
    Tensor val;
    bool trainable = false;
    std::string name;
    int a0 = 0, a1 = 0;
    double scalar = 0.0;
    Tensor aux;
  };

  const Tensor& val(NodeId id) const { return nodes_[id].val; }

  NodeId push(Op op, std::vector<NodeId> in, Tensor v) {
    Node n;
    n.op = op;
    n.in = std::move(in);
    n.val = std::move(v);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Tensor& grad_slot(NodeId id) {
    if (grads_[id].empty()) grads_[id] = Tensor::zeros(val(id).shape());
    return grads_[id];
  }

  void step_back(NodeId id) {
    Node& n = nodes_[id];
    const Tensor& dy = grads_[id];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        ops::add_vjp(dy, grad_slot(n.in[0]), grad_slot(n.in[1]));
        break;
      case Op::kMul:
        ops::mul_vjp(val(n.in[0]), val(n.in[1]), dy, grad_slot(n.in[0]),
                     grad_slot(n.in[1]));
        break;
      case Op::kMulScalar:
        ops::mul_scalar_vjp(n.scalar, dy, grad_slot(n.in[0]));
        break;
      case Op::kRelu:
        ops::relu_vjp(val(n.in[0]), dy, grad_slot(n.in[0]));
        break;
      case Op::kMatmul:
        ops::matmul_vjp(val(n.in[0]), val(n.in[1]), dy, grad_slot(n.in[0]),
                        grad_slot(n.in[1]));
        break;
      case Op::kTranspose2d:
        ops::transpose2d_vjp(dy, grad_slot(n.in[0]));
        break;
      case Op::kReshape:
        ops::reshape_vjp(dy, grad_slot(n.in[0]));
        break;
      case Op::kSoftmaxRows:
        ops::softmax_rows_vjp(n.val, dy, grad_slot(n.in[0]));
        break;
      case Op::kLayerNorm:
        ops::layer_norm_vjp(val(n.in[0]), val(n.in[1]), n.scalar, dy,
                            grad_slot(n.in[0]), grad_slot(n.in[1]),
                            grad_slot(n.in[2]));
        break;
      case Op::kConv2d:
        ops::conv2d_vjp(val(n.in[0]), val(n.in[1]), n.a0, n.a1, dy,
                        grad_slot(n.in[0]), grad_slot(n.in[1]));
        break;
      case Op::kMeanPool2x2:
        ops::mean_pool2x2_vjp(dy, grad_slot(n.in[0]));
        break;
      case Op::kUpsampleNearest2x:
        ops::upsample_nearest2x_vjp(dy, grad_slot(n.in[0]));
        break;
      case Op::kConcatChannels:
        ops::concat_channels_vjp(dy, grad_slot(n.in[0]), grad_slot(n.in[1]));
        break;
      case Op::kConcatCols:
        ops::concat_cols_vjp(dy, grad_slot(n.in[0]), grad_slot(n.in[1]));
        break;
      case Op::kSliceCols:
        ops::slice_cols_vjp(static_cast<std::size_t>(n.a0), dy,
                            grad_slot(n.in[0]));
        break;
      case Op::kAddRowBias:
        ops::add_row_bias_vjp(dy, grad_slot(n.in[0]), grad_slot(n.in[1]));
        break;
      case Op::kAddChannelBias:
        ops::add_channel_bias_vjp(dy, grad_slot(n.in[0]), grad_slot(n.in[1]));
        break;
      case Op::kIm2Patches:
        ops::im2patches_vjp(n.a0, dy, grad_slot(n.in[0]));
        break;
      case Op::kSumAll:
        ops::sum_all_vjp(dy, grad_slot(n.in[0]));
        break;
      case Op::kBceWithLogits:
        ops::bce_with_logits_vjp(val(n.in[0]), n.aux, dy, grad_slot(n.in[0]));
        break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::map<std::string, NodeId> param_ids_;
};

}  // namespace tacseg
