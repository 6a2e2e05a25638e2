#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hoigraph/autodiff.hpp"
#include "hoigraph/model.hpp"
#include "hoigraph/scene.hpp"

namespace hoigraph::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline ModelConfig small_config(std::size_t hidden = 8) {
  ModelConfig cfg;
  cfg.feature_dim = 6;
  cfg.hidden_dim = hidden;
  cfg.num_classes = 3;
  cfg.spatial_channels = {4, 4, 4};
  return cfg;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace hoigraph::testing
