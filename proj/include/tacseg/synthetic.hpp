#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tacseg/metrics.hpp"
#include "tacseg/rng.hpp"
#include "tacseg/tensor.hpp"

// Synthetic cell-blob dataset: ellipse-like blobs with noised interior color
// on a textured background, plus exact per-blob instance masks. Blobs may
// touch but never overlap. Colors are arranged so every blob pixel differs
// from the background by at least 0.1 in the blob's dominant channel:
// background stays in [0, 0.35] everywhere while the dominant blob channel
// stays in [0.55, 1].

namespace tacseg {

struct SyntheticSample {
  Tensor image;  // [3 x H x W], values in [0, 1]
  InstanceMaskSet instances;
  std::uint64_t seed = 0;
};

struct DataGenConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  int min_cells = 2;
  int max_cells = 5;

  void validate() const {
    if (height < 8 || width < 8)
      throw ConfigError("gen: image extents must be >= 8");
    if (min_cells < 1 || max_cells < min_cells)
      throw ConfigError("gen: need 1 <= min_cells <= max_cells");
  }
};

namespace detail {

struct Ellipse {
  double cx, cy, a, b, theta;
};

inline Mask ellipse_support(const Ellipse& e, std::size_t h, std::size_t w) {
  Mask m(h, w);
  const double ct = std::cos(e.theta), st = std::sin(e.theta);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double dx = static_cast<double>(c) - e.cx;
      const double dy = static_cast<double>(r) - e.cy;
      const double u = (dx * ct + dy * st) / e.a;
      const double v = (-dx * st + dy * ct) / e.b;
      if (u * u + v * v <= 1.0) m.at(r, c) = 1;
    }
  return m;
}

inline bool overlaps(const Mask& a, const Mask& occupied) {
  for (std::size_t i = 0; i < a.v.size(); ++i)
    if (a.v[i] && occupied.v[i]) return true;
  return false;
}

// One attempt at a full sample; fails only when blob placement stalls.
inline bool try_gen_sample(std::uint64_t sample_seed, const DataGenConfig& cfg,
                           SyntheticSample& out) {
  RngStream rng(sample_seed, "sample");
  const std::size_t h = cfg.height, w = cfg.width;

  const int k =
      cfg.min_cells +
      static_cast<int>(rng.index(cfg.max_cells - cfg.min_cells + 1));

  // background texture in [0, 0.35]
  double bg_base[3];
  for (double& b : bg_base) b = rng.uniform(0.08, 0.27);
  Tensor img({3, h, w});
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        img.at(ch, r, c) = std::clamp(
            bg_base[ch] + rng.uniform(-0.08, 0.08), 0.0, 0.35);

  Mask occupied(h, w);
  InstanceMaskSet instances;
  const std::size_t min_pixels = 25;

  for (int blob = 0; blob < k; ++blob) {
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      Ellipse e;
      e.a = rng.uniform(4.0, 9.0);
      e.b = rng.uniform(4.0, 9.0);
      e.theta = rng.uniform(0.0, 3.141592653589793);
      e.cx = rng.uniform(2.0, static_cast<double>(w) - 3.0);
      e.cy = rng.uniform(2.0, static_cast<double>(h) - 3.0);
      Mask support = ellipse_support(e, h, w);
      if (support.area() < min_pixels || overlaps(support, occupied))
        continue;

      const std::size_t dom = rng.index(3);
      double base[3];
      for (std::size_t ch = 0; ch < 3; ++ch)
        base[ch] = ch == dom ? rng.uniform(0.7, 0.9) : rng.uniform(0.1, 0.4);
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          if (!support.at(r, c)) continue;
          occupied.at(r, c) = 1;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const double lo = ch == dom ? 0.55 : 0.0;
            const double hi = ch == dom ? 1.0 : 0.5;
            img.at(ch, r, c) = std::clamp(
                base[ch] + 0.05 * rng.normal(), lo, hi);
          }
        }
      instances.masks.push_back(std::move(support));
      placed = true;
    }
    if (!placed) return false;
  }
  out.image = std::move(img);
  out.instances = std::move(instances);
  out.seed = sample_seed;
  return true;
}

}  // namespace detail

// Deterministic in (seed, n, cfg). Placement stalls restart the sample with
// a fresh sub-seed, so generation never fails.
inline std::vector<SyntheticSample> gen_synthetic(std::uint64_t seed,
                                                  std::size_t n,
                                                  const DataGenConfig& cfg) {
  cfg.validate();
  std::vector<SyntheticSample> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      const std::uint64_t s =
          RngStream::derive(seed, "gen.sample", i + (attempt << 32));
      if (detail::try_gen_sample(s, cfg, samples[i])) break;
    }
  }
  return samples;
}

// In-place horizontal mirror of image and every instance mask.
inline void hflip_sample(SyntheticSample& s) {
  const std::size_t h = s.image.extent(1), w = s.image.extent(2);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w / 2; ++c)
        std::swap(s.image.at(ch, r, c), s.image.at(ch, r, w - 1 - c));
  for (Mask& m : s.instances.masks)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w / 2; ++c)
        std::swap(m.at(r, c), m.at(r, w - 1 - c));
}

// Horizontal flip with probability 0.5, applied identically to image and
// masks. Rotation and resize augmentations are intentionally absent.
inline void augment_flip(SyntheticSample& s, RngStream& rng) {
  if (rng.coin()) hflip_sample(s);
}

}  // namespace tacseg
