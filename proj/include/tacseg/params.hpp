#pragma once

#include <cmath>
#include <map>
#include <string>

#include "tacseg/rng.hpp"
#include "tacseg/tensor.hpp"

namespace tacseg {

// Named trainable tensors, ordered by name for deterministic iteration.
using ParamStore = std::map<std::string, Tensor>;

// Kaiming-uniform fan-in init: U(-g*sqrt(6/fan_in), +g*sqrt(6/fan_in)).
// The stream is keyed by the parameter name, so values do not depend on
// init order or on unrelated parameters existing.
inline Tensor kaiming_uniform(Shape shape, std::size_t fan_in, double gain,
                              std::uint64_t seed, const std::string& name) {
  RngStream rng(seed, "init." + name);
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = rng.uniform(-bound, bound);
  return t;
}

inline const Tensor& param_ref(const ParamStore& store,
                               const std::string& name) {
  auto it = store.find(name);
  if (it == store.end())
    throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

}  // namespace tacseg
