#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tacseg/tensor.hpp"

namespace tacseg {

// Binary mask over one image.
struct Mask {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> v;  // 0 or 1, row-major

  Mask() = default;
  Mask(std::size_t h_, std::size_t w_) : h(h_), w(w_), v(h_ * w_, 0) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return v[r * w + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return v[r * w + c]; }
  std::size_t area() const {
    std::size_t n = 0;
    for (auto x : v) n += x != 0;
    return n;
  }
  bool empty_mask() const { return area() == 0; }
};

// One set of instance masks for an image.
struct InstanceMaskSet {
  std::string image_id;
  std::vector<Mask> masks;
};

// |a AND b| / |a OR b|; 0 when the union is empty.
inline double iou(const Mask& a, const Mask& b) {
  if (a.h != b.h || a.w != b.w)
    throw DimensionError("iou: mask shapes differ, " + std::to_string(a.h) +
                         "x" + std::to_string(a.w) + " vs " +
                         std::to_string(b.h) + "x" + std::to_string(b.w));
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const bool pa = a.v[i] != 0, pb = b.v[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Mean over GT instances of the best IoU any prediction achieves; 0 when
// there are no predictions. Caller guarantees gt is nonempty.
inline double miou_image(const InstanceMaskSet& pred,
                         const InstanceMaskSet& gt) {
  if (gt.masks.empty())
    throw ContractError("miou_image: per-image score undefined for empty GT");
  double acc = 0.0;
  for (const Mask& g : gt.masks) {
    double best = 0.0;
    for (const Mask& p : pred.masks) best = std::max(best, iou(g, p));
    acc += best;
  }
  return acc / static_cast<double>(gt.masks.size());
}

// Predictions that are never the best match (with positive IoU) of any GT
// instance. The mean-of-best-per-GT score does not penalize these, so they
// are reported alongside it.
inline std::size_t unmatched_predictions(const InstanceMaskSet& pred,
                                         const InstanceMaskSet& gt) {
  std::vector<bool> matched(pred.masks.size(), false);
  for (const Mask& g : gt.masks) {
    double best = 0.0;
    std::size_t best_i = pred.masks.size();
    for (std::size_t i = 0; i < pred.masks.size(); ++i) {
      const double v = iou(g, pred.masks[i]);
      if (v > best) {
        best = v;
        best_i = i;
      }
    }
    if (best_i < pred.masks.size()) matched[best_i] = true;
  }
  std::size_t n = 0;
  for (bool m : matched) n += !m;
  return n;
}

struct MiouResult {
  double miou = 0.0;
  std::size_t n_images = 0;    // images included in the mean
  std::size_t n_excluded = 0;  // images skipped for empty GT
  std::size_t n_unmatched_pred = 0;
};

inline MiouResult miou_dataset(const std::vector<InstanceMaskSet>& preds,
                               const std::vector<InstanceMaskSet>& gts) {
  if (preds.size() != gts.size())
    throw DimensionError("miou_dataset: " + std::to_string(preds.size()) +
                         " predictions vs " + std::to_string(gts.size()) +
                         " ground truths");
  MiouResult r;
  double acc = 0.0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].masks.empty()) {
      ++r.n_excluded;
      continue;
    }
    acc += miou_image(preds[i], gts[i]);
    r.n_unmatched_pred += unmatched_predictions(preds[i], gts[i]);
    ++r.n_images;
  }
  r.miou = r.n_images == 0 ? 0.0 : acc / static_cast<double>(r.n_images);
  return r;
}

// 4-connected components of a binary mask, one instance per component,
// discovered in row-major scan order. Components under min_area are dropped.
inline InstanceMaskSet connected_components(const Mask& m, int min_area = 8) {
  InstanceMaskSet out;
  std::vector<std::uint8_t> seen(m.v.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < m.v.size(); ++start) {
    if (m.v[start] == 0 || seen[start]) continue;
    Mask comp(m.h, m.w);
    std::size_t area = 0;
    stack.clear();
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t px = stack.back();
      stack.pop_back();
      comp.v[px] = 1;
      ++area;
      const std::size_t r = px / m.w, c = px % m.w;
      const std::size_t nbrs[4] = {
          r > 0 ? px - m.w : px, r + 1 < m.h ? px + m.w : px,
          c > 0 ? px - 1 : px, c + 1 < m.w ? px + 1 : px};
      for (std::size_t nb : nbrs) {
        if (nb == px || seen[nb] || m.v[nb] == 0) continue;
        seen[nb] = 1;
        stack.push_back(nb);
      }
    }
    if (area >= static_cast<std::size_t>(min_area))
      out.masks.push_back(std::move(comp));
  }
  return out;
}

// Foreground mask from logits: sigmoid then threshold at 0.5, i.e. z > 0.
inline Mask mask_from_logits(const Tensor& logits) {
  if (logits.rank() != 3 || logits.extent(0) != 1)
    throw DimensionError("mask_from_logits: expected [1 x H x W], got " +
                         shape_str(logits.shape()));
  Mask m(logits.extent(1), logits.extent(2));
  for (std::size_t i = 0; i < m.v.size(); ++i)
    m.v[i] = 1.0 / (1.0 + std::exp(-logits[i])) > 0.5 ? 1 : 0;
  return m;
}

inline Mask union_mask(const InstanceMaskSet& set, std::size_t h,
                       std::size_t w) {
  Mask m(h, w);
  for (const Mask& inst : set.masks) {
    if (inst.h != h || inst.w != w)
      throw DimensionError("union_mask: instance shape mismatch");
    for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] |= inst.v[i];
  }
  return m;
}

}  // namespace tacseg
