#pragma once

#include <cmath>
#include <random>

#include "hoigraph/tensor.hpp"

namespace hoigraph {

/// Uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)].
inline Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace hoigraph
