#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace tacseg {

// Counter-based deterministic random stream (SplitMix64 finalizer).
//
// Every random quantity in a run derives from one root seed through a
// labeled stream: key = mix(seed ^ fnv1a(label)), draw i = mix(key + i*phi).
// Streams are independent of draw order elsewhere in the program, so e.g.
// parameter init draws do not shift when an unrelated module adds a draw.
// Labels in use: "init.<param-name>", "data.train", "data.eval",
// "data.order.<epoch>", "augment.<step>", plus test-local labels.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label)
      : key_(mix(seed ^ fnv1a(label))) {}

  RngStream(std::uint64_t seed, std::string_view label, std::uint64_t index)
      : key_(mix(mix(seed ^ fnv1a(label)) + index)) {}

  std::uint64_t next_u64() { return mix(key_ + kPhi * ++counter_); }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Box-Muller; uses two draws per call, never returns NaN.
  double normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(6.283185307179586 * u2);
  }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  bool coin() { return next_unit() < 0.5; }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  // Derive a child seed, e.g. for per-sample generator restarts.
  static std::uint64_t derive(std::uint64_t seed, std::string_view label) {
    return mix(seed ^ fnv1a(label));
  }
  static std::uint64_t derive(std::uint64_t seed, std::string_view label,
                              std::uint64_t index) {
    return mix(mix(seed ^ fnv1a(label)) + index);
  }

 private:
  static constexpr std::uint64_t kPhi = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z += kPhi;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace tacseg
