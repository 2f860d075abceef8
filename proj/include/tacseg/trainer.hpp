#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "tacseg/checkpoint.hpp"
#include "tacseg/config.hpp"
#include "tacseg/graph.hpp"
#include "tacseg/metrics.hpp"
#include "tacseg/seg_model.hpp"
#include "tacseg/synthetic.hpp"

// SGD trainer (no momentum) with per-step learning rate from a closed-form
// schedule. Batch > 1 is gradient accumulation over consecutive samples; the
// loop itself stays sequential and deterministic.

namespace tacseg {

// Learning rate at optimizer step t of total_steps. With warmup_steps > 0 the
// first warmup_steps steps ramp linearly up to base and the schedule proper
// runs on the remaining horizon.
inline double lr_at(const RunConfig& cfg, std::size_t t,
                    std::size_t total_steps, std::size_t warmup_steps = 0) {
  if (warmup_steps > 0 && t < warmup_steps)
    return cfg.lr * static_cast<double>(t + 1) /
           static_cast<double>(warmup_steps);
  const double tt = static_cast<double>(t - warmup_steps);
  const double T = static_cast<double>(total_steps - warmup_steps);
  if (cfg.schedule == Schedule::kCosine) {
    constexpr double kPi = 3.14159265358979323846;
    return cfg.lr * 0.5 * (1.0 + std::cos(kPi * tt / T));
  }
  const auto k = static_cast<std::size_t>(tt) /
                 static_cast<std::size_t>(cfg.step_interval);
  return cfg.lr * std::pow(cfg.step_factor, static_cast<double>(k));
}

// Foreground {0,1} target [1 x H x W] = union of the sample's instances.
inline Tensor target_tensor(const SyntheticSample& s) {
  const std::size_t h = s.image.extent(1), w = s.image.extent(2);
  const Mask u = union_mask(s.instances, h, w);
  Tensor t = Tensor::zeros({1, h, w});
  for (std::size_t i = 0; i < u.v.size(); ++i) t.data()[i] = u.v[i];
  return t;
}

namespace detail {

inline std::string first_nonfinite_param(const ParamStore& params) {
  for (const auto& [name, t] : params)
    if (!t.all_finite()) return name;
  return "(none; activations only)";
}

// Fisher–Yates over [0, n) driven by the epoch's labeled stream.
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch,
                                            std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(seed, "data.order." + std::to_string(epoch));
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

}  // namespace detail

struct TrainResult {
  ParamStore params;
  TrainState state;
  std::vector<double> epoch_mean_loss;
};

// Runs epochs [state.epochs_completed, cfg.epochs) over `train`, logging one
// line per epoch. Aborts with a diagnostic if the loss goes non-finite.
inline TrainResult train_model(const RunConfig& cfg,
                               const std::vector<SyntheticSample>& train,
                               ParamStore params, TrainState state,
                               std::ostream& log) {
  cfg.validate();
  const ModelConfig model_cfg = cfg.resolved_model();
  const std::size_t n = train.size();
  if (n == 0) throw ConfigError("train: empty dataset");
  const std::size_t batch = static_cast<std::size_t>(cfg.batch);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps =
      steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
  const std::size_t warmup_steps =
      cfg.warmup ? steps_per_epoch * static_cast<std::size_t>(cfg.warmup_epochs)
                 : 0;

  TrainResult out;
  out.params = std::move(params);
  out.state = state;

  for (int epoch = static_cast<int>(state.epochs_completed);
       epoch < cfg.epochs; ++epoch) {
    const auto order = detail::epoch_order(cfg.seed, epoch, n);
    RngStream aug(cfg.seed, "augment." + std::to_string(epoch));

    double loss_sum = 0.0;
    double lr = cfg.lr;
    std::size_t i = 0;
    while (i < n) {
      GradMap acc;
      std::size_t in_batch = 0;
      double batch_loss = 0.0;
      for (; in_batch < batch && i < n; ++in_batch, ++i) {
        SyntheticSample s = train[order[i]];
        augment_flip(s, aug);

        Graph g;
        const NodeId img = g.input(s.image);
        const NodeId logits = model_forward(g, img, model_cfg, out.params);
        const NodeId loss = bce_loss(g, logits, target_tensor(s));
        const double loss_v = g.value(loss).item();
        if (!std::isfinite(loss_v)) {
          throw ContractError(
              "train: non-finite loss at epoch " + std::to_string(epoch) +
              " step " + std::to_string(out.state.global_step) +
              "; first non-finite parameter: " +
              detail::first_nonfinite_param(out.params));
        }
        batch_loss += loss_v;
        GradMap grads = g.backward(loss);
        for (auto& [name, gval] : grads) {
          auto it = acc.find(name);
          if (it == acc.end()) {
            acc.emplace(name, std::move(gval));
          } else {
            Tensor& a = it->second;
            for (std::size_t k = 0; k < a.size(); ++k)
              a.data()[k] += gval.data()[k];
          }
        }
      }

      lr = lr_at(cfg, out.state.global_step, total_steps, warmup_steps);
      const double scale = lr / static_cast<double>(in_batch);
      for (auto& [name, p] : out.params) {
        const Tensor& gvec = acc.at(name);
        for (std::size_t k = 0; k < p.size(); ++k)
          p.data()[k] -= scale * gvec.data()[k];
      }
      ++out.state.global_step;
      loss_sum += batch_loss;
    }

    const double mean_loss = loss_sum / static_cast<double>(n);
    out.epoch_mean_loss.push_back(mean_loss);
    out.state.epochs_completed = static_cast<std::size_t>(epoch) + 1;
    log << "epoch " << std::setw(3) << epoch << "  loss " << std::setprecision(6)
        << std::fixed << mean_loss << "  lr " << std::scientific
        << std::setprecision(3) << lr << std::defaultfloat << "\n";
    log.flush();
  }
  return out;
}

// Forward pass -> threshold -> connected components, per image.
inline InstanceMaskSet predict_instances(const ModelConfig& cfg,
                                         const ParamStore& params,
                                         const SyntheticSample& s,
                                         int min_area = 8) {
  Graph g;
  const NodeId logits = model_forward(g, g.input(s.image), cfg, params);
  InstanceMaskSet pred = connected_components(mask_from_logits(g.value(logits)),
                                              min_area);
  pred.image_id = s.instances.image_id;
  return pred;
}

inline MiouResult evaluate_model(const ModelConfig& cfg,
                                 const ParamStore& params,
                                 const std::vector<SyntheticSample>& eval_set,
                                 int min_area = 8) {
  std::vector<InstanceMaskSet> preds, gts;
  preds.reserve(eval_set.size());
  gts.reserve(eval_set.size());
  for (const SyntheticSample& s : eval_set) {
    preds.push_back(predict_instances(cfg, params, s, min_area));
    gts.push_back(s.instances);
  }
  return miou_dataset(preds, gts);
}

}  // namespace tacseg
