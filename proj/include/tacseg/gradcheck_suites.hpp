#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "tacseg/fusion.hpp"
#include "tacseg/gradcheck.hpp"
#include "tacseg/graph.hpp"
#include "tacseg/rng.hpp"
#include "tacseg/seg_model.hpp"
#include "tacseg/vit.hpp"

// The four finite-difference suites behind `gradcheck --scope ...`: per-op
// coverage, the fusion step alone, one transformer block, and a miniature
// end-to-end model. Shared by the CLI and the acceptance harness.

namespace tacseg {

enum class GradScope { kOps, kFusion, kBlock, kEnd2End };

inline const char* grad_scope_name(GradScope s) {
  switch (s) {
    case GradScope::kOps: return "ops";
    case GradScope::kFusion: return "fusion";
    case GradScope::kBlock: return "block";
    default: return "end2end";
  }
}

inline GradScope grad_scope_from_name(const std::string& s) {
  if (s == "ops") return GradScope::kOps;
  if (s == "fusion") return GradScope::kFusion;
  if (s == "block") return GradScope::kBlock;
  if (s == "end2end") return GradScope::kEnd2End;
  throw ConfigError("unknown gradcheck scope '" + s +
                    "' (want ops|fusion|block|end2end)");
}

namespace detail {

inline Tensor rand_tensor(const Shape& shape, RngStream& rng, double lo = -1.0,
                          double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Keeps entries away from the relu kink so central differences stay valid.
inline Tensor rand_tensor_no_kink(const Shape& shape, RngStream& rng,
                                  double lo = -1.0, double hi = 1.0,
                                  double margin = 1e-3) {
  Tensor t = rand_tensor(shape, rng, lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i)
    while (std::abs(t[i]) < margin) t[i] = rng.uniform(lo, hi);
  return t;
}

// Contracts an arbitrary tensor to a scalar with a fixed random cotangent, so
// the check exercises full Jacobians instead of the all-ones direction.
inline NodeId contract(Graph& g, NodeId out, std::uint64_t seed) {
  RngStream rng(seed, "gradcheck.cotangent");
  Tensor r = rand_tensor(g.value(out).shape(), rng);
  return g.sum_all(g.mul(out, g.input(std::move(r))));
}

}  // namespace detail

inline std::vector<GradCheckCase> ops_cases(std::uint64_t seed) {
  using detail::contract;
  RngStream rng(seed, "gradcheck.ops");
  std::vector<GradCheckCase> cases;

  // Small tensors (extents <= 5), values in [-2, 2].
  auto rand_tensor = [&rng](const Shape& shape) {
    return detail::rand_tensor(shape, rng, -2.0, 2.0);
  };

  auto push1 = [&](const std::string& name, Tensor a,
                   std::function<NodeId(Graph&, NodeId)> body) {
    cases.push_back({name,
                     {"a"},
                     {std::move(a)},
                     [body, seed](Graph& g, const std::vector<NodeId>& ids) {
                       return contract(g, body(g, ids[0]), seed);
                     }});
  };
  auto push2 = [&](const std::string& name, Tensor a, Tensor b,
                   std::function<NodeId(Graph&, NodeId, NodeId)> body) {
    cases.push_back({name,
                     {"a", "b"},
                     {std::move(a), std::move(b)},
                     [body, seed](Graph& g, const std::vector<NodeId>& ids) {
                       return contract(g, body(g, ids[0], ids[1]), seed);
                     }});
  };

  push2("add", rand_tensor({3, 4}), rand_tensor({3, 4}),
        [](Graph& g, NodeId a, NodeId b) { return g.add(a, b); });
  push2("mul", rand_tensor({3, 4}), rand_tensor({3, 4}),
        [](Graph& g, NodeId a, NodeId b) { return g.mul(a, b); });
  push1("mul_scalar", rand_tensor({3, 4}),
        [](Graph& g, NodeId a) { return g.mul_scalar(a, -1.7); });
  push1("relu", detail::rand_tensor_no_kink({4, 5}, rng, -2.0, 2.0),
        [](Graph& g, NodeId a) { return g.relu(a); });
  push2("matmul", rand_tensor({3, 4}), rand_tensor({4, 2}),
        [](Graph& g, NodeId a, NodeId b) { return g.matmul(a, b); });
  push1("transpose2d", rand_tensor({3, 5}),
        [](Graph& g, NodeId a) { return g.transpose2d(a); });
  push1("reshape", rand_tensor({3, 4}),
        [](Graph& g, NodeId a) { return g.reshape(a, {2, 6}); });
  push1("softmax_rows", rand_tensor({3, 5}),
        [](Graph& g, NodeId a) { return g.softmax_rows(a); });

  {
    Tensor x = rand_tensor({3, 6});
    Tensor gamma = detail::rand_tensor({6}, rng, 0.5, 1.5);
    Tensor beta = rand_tensor({6});
    cases.push_back(
        {"layer_norm",
         {"x", "gamma", "beta"},
         {std::move(x), std::move(gamma), std::move(beta)},
         [seed](Graph& g, const std::vector<NodeId>& ids) {
           return contract(g, g.layer_norm(ids[0], ids[1], ids[2]), seed);
         }});
  }

  push2("conv2d", rand_tensor({2, 5, 5}), rand_tensor({3, 2, 3, 3}),
        [](Graph& g, NodeId x, NodeId k) { return g.conv2d(x, k, 1, 1); });
  push2("conv2d_stride2", rand_tensor({2, 6, 6}),
        rand_tensor({3, 2, 3, 3}),
        [](Graph& g, NodeId x, NodeId k) { return g.conv2d(x, k, 2, 1); });
  push1("mean_pool2x2", rand_tensor({2, 4, 6}),
        [](Graph& g, NodeId a) { return g.mean_pool2x2(a); });
  push1("upsample_nearest2x", rand_tensor({2, 3, 4}),
        [](Graph& g, NodeId a) { return g.upsample_nearest2x(a); });
  push2("concat_channels", rand_tensor({2, 3, 4}),
        rand_tensor({3, 3, 4}),
        [](Graph& g, NodeId a, NodeId b) { return g.concat_channels(a, b); });
  push2("concat_cols", rand_tensor({3, 2}), rand_tensor({3, 4}),
        [](Graph& g, NodeId a, NodeId b) { return g.concat_cols(a, b); });
  push1("slice_cols", rand_tensor({3, 6}),
        [](Graph& g, NodeId a) { return g.slice_cols(a, 1, 4); });
  push2("add_row_bias", rand_tensor({4, 5}), rand_tensor({5}),
        [](Graph& g, NodeId x, NodeId b) { return g.add_row_bias(x, b); });
  push2("add_channel_bias", rand_tensor({3, 2, 4}), rand_tensor({3}),
        [](Graph& g, NodeId x, NodeId b) { return g.add_channel_bias(x, b); });
  push1("im2patches", rand_tensor({2, 4, 4}),
        [](Graph& g, NodeId a) { return g.im2patches(a, 2); });
  push1("sum_all", rand_tensor({3, 4}),
        [](Graph& g, NodeId a) { return g.sum_all(a); });

  {
    RngStream trng(seed, "gradcheck.ops.bce_target");
    Tensor target = Tensor::zeros({2, 3, 3});
    for (std::size_t i = 0; i < target.size(); ++i)
      target[i] = trng.coin() ? 1.0 : 0.0;
    Tensor z = rand_tensor({2, 3, 3});
    cases.push_back({"bce_with_logits",
                     {"z"},
                     {std::move(z)},
                     [target](Graph& g, const std::vector<NodeId>& ids) {
                       return g.bce_with_logits(ids[0], target);
                     }});
  }

  return cases;
}

inline std::vector<GradCheckCase> fusion_cases(std::uint64_t seed) {
  using detail::rand_tensor;
  RngStream rng(seed, "gradcheck.fusion");
  // HW=3, L=2, E=3: small enough for FD, big enough for non-trivial softmax.
  Tensor c = rand_tensor({3, 3}, rng);
  Tensor t = rand_tensor({2, 3}, rng);
  Tensor wq = rand_tensor({3, 3}, rng);
  Tensor wk = rand_tensor({3, 3}, rng);
  GradCheckCase fuse_case{
      "fusion",
      {"c", "t", "wq", "wk"},
      {std::move(c), std::move(t), std::move(wq), std::move(wk)},
      [seed](Graph& g, const std::vector<NodeId>& ids) {
        return detail::contract(
            g, fuse(g, ids[0], ids[1], ids[2], ids[3]), seed);
      }};
  return {std::move(fuse_case)};
}

inline std::vector<GradCheckCase> block_cases(std::uint64_t seed) {
  TokenConfig cfg;
  cfg.patch = 2;
  cfg.embed_dim = 4;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;

  ParamStore store;
  init_vit_params(cfg, 3, 4, 4, RngStream::derive(seed, "gradcheck.block"),
                  store);
  GradCheckCase c;
  c.name = "block";
  RngStream rng(seed, "gradcheck.block.x");
  c.leaf_names.push_back("x");  // token matrix, L=2 x E=4
  c.leaves.push_back(detail::rand_tensor({2, 4}, rng));
  for (const auto& [name, t] : store) {
    if (name.rfind("vit.block0.", 0) != 0) continue;
    c.leaf_names.push_back(name);
    c.leaves.push_back(t);
  }
  ParamStore captured = store;
  c.build = [captured, cfg, seed](Graph& g, const std::vector<NodeId>& ids) {
    return detail::contract(g, transformer_block(g, ids[0], cfg, captured, 0),
                            seed);
  };
  return {std::move(c)};
}

inline std::vector<GradCheckCase> end2end_cases(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.kind = VariantKind::kFused;
  cfg.backbone.depth = 2;
  cfg.backbone.stage_channels = {4, 6};
  cfg.backbone.embed_dim = 8;
  cfg.tokens.patch = 4;
  cfg.tokens.embed_dim = 8;
  cfg.tokens.depth = 2;
  cfg.tokens.heads = 2;
  cfg.tokens.mlp_ratio = 2;
  cfg.img_h = 8;
  cfg.img_w = 8;
  cfg.validate();

  ParamStore store;
  init_model_params(cfg, RngStream::derive(seed, "gradcheck.end2end"), store);

  RngStream rng(seed, "gradcheck.end2end.data");
  Tensor image = detail::rand_tensor({3, 8, 8}, rng, 0.0, 1.0);
  Tensor target = Tensor::zeros({1, 8, 8});
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = rng.coin() ? 1.0 : 0.0;

  GradCheckCase c;
  c.name = "end2end";
  for (const auto& [name, t] : store) {
    c.leaf_names.push_back(name);
    c.leaves.push_back(t);
  }
  // model_forward re-resolves every name via get-or-create param(), so the
  // pre-registered (possibly perturbed) leaves win over the captured store.
  c.build = [cfg, image, target, store](Graph& g,
                                        const std::vector<NodeId>& ids) {
    (void)ids;
    return g.bce_with_logits(model_forward(g, g.input(image), cfg, store),
                             target);
  };
  return {std::move(c)};
}

struct ScopeReport {
  GradScope scope = GradScope::kOps;
  std::vector<GradCheckResult> results;
  double max_rel_err = 0.0;
  bool pass = true;
  double seconds = 0.0;
};

// Runs every case in the scope across the given seeds, printing one line per
// (case, worst-seed) group.
inline ScopeReport run_gradcheck_scope(GradScope scope,
                                       const std::vector<std::uint64_t>& seeds,
                                       std::ostream& os, double tol = 1e-4) {
  ScopeReport rep;
  rep.scope = scope;
  const auto t0 = std::chrono::steady_clock::now();

  auto cases_for = [scope](std::uint64_t seed) {
    switch (scope) {
      case GradScope::kOps: return ops_cases(seed);
      case GradScope::kFusion: return fusion_cases(seed);
      case GradScope::kBlock: return block_cases(seed);
      default: return end2end_cases(seed);
    }
  };

  // Entries where analytic and FD gradients are both below this magnitude are
  // treated as matching zeros.  Central differences on an O(1) loss resolve
  // about eps*|loss|/step ~= 1e-11 in absolute terms, so below 1e-6 the
  // quotient is dominated by FD noise (and by analytically-zero gradients such
  // as attention key biases, which cancel through the softmax row shift).  Any
  // genuine wiring bug leaves an absolute discrepancy orders of magnitude
  // above this floor.
  constexpr double kZeroFloor = 1e-6;

  // name -> worst result across seeds
  std::vector<GradCheckResult> worst;
  for (std::uint64_t seed : seeds) {
    for (const GradCheckCase& c : cases_for(seed)) {
      GradCheckResult r = check_gradients(c, 1e-5, kZeroFloor);
      auto it = std::find_if(worst.begin(), worst.end(),
                             [&r](const GradCheckResult& w) {
                               return w.case_name == r.case_name;
                             });
      if (it == worst.end()) worst.push_back(r);
      else if (r.max_rel_err > it->max_rel_err) *it = r;
    }
  }

  for (const GradCheckResult& r : worst) {
    const bool ok = r.pass(tol);
    rep.pass = rep.pass && ok;
    rep.max_rel_err = std::max(rep.max_rel_err, r.max_rel_err);
    os << grad_scope_name(scope) << "/" << r.case_name << "  max_rel_err "
       << std::scientific << std::setprecision(3) << r.max_rel_err
       << std::defaultfloat << "  " << (ok ? "pass" : "FAIL");
    if (!ok) os << "  (worst leaf " << r.worst_leaf << "[" << r.worst_index
                << "])";
    os << "\n";
  }
  rep.results = std::move(worst);
  rep.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

}  // namespace tacseg
