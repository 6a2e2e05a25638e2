#include "hoigraph/scene.hpp"

#include <cmath>

#include "hoigraph/errors.hpp"

namespace hoigraph {

Tensor derive_interactiveness(const Tensor& interactions) {
  if (interactions.rank() != 3) {
    throw ShapeError("interaction labels must be [N, M, A], got " + shape_str(interactions.shape()));
  }
  const std::size_t n = interactions.dim(0), m = interactions.dim(1), a = interactions.dim(2);
  Tensor out({n, m});
  for (std::size_t p = 0; p < n * m; ++p) {
    for (std::size_t c = 0; c < a; ++c) {
      if (interactions[p * a + c] > 0.5) out[p] = 1.0;
    }
  }
  return out;
}

namespace {

void validate_instances(const std::vector<Instance>& list, const char* kind, std::size_t feature_dim) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string where = std::string(kind) + "[" + std::to_string(i) + "]";
    if (!list[i].box.valid()) throw ConfigError(where + ".box: invalid box");
    const double c = list[i].confidence;
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError(where + ".confidence: must lie in [0, 1]");
    if (list[i].feature.size() != feature_dim) {
      throw ConfigError(where + ".feature: length " + std::to_string(list[i].feature.size()) + ", expected " +
                        std::to_string(feature_dim));
    }
    for (double v : list[i].feature) {
      if (!std::isfinite(v)) throw ConfigError(where + ".feature: non-finite value");
    }
  }
}

}  // namespace

void validate_scene(const SceneInput& scene, std::size_t feature_dim) {
  validate_instances(scene.subjects, "subjects", feature_dim);
  validate_instances(scene.objects, "objects", feature_dim);
}

void validate_labeled_scene(const LabeledScene& scene, std::size_t feature_dim, std::size_t num_classes) {
  validate_scene(scene.input, feature_dim);
  const Shape expect{scene.input.subjects.size(), scene.input.objects.size(), num_classes};
  if (scene.interactions.shape() != expect) {
    throw ConfigError("labels: shape " + shape_str(scene.interactions.shape()) + ", expected " + shape_str(expect));
  }
  for (double v : scene.interactions.values()) {
    if (v != 0.0 && v != 1.0) throw ConfigError("labels: entries must be 0 or 1");
  }
  if (scene.interactive != derive_interactiveness(scene.interactions)) {
    throw ConfigError("labels: interactiveness must equal the OR of each pair's actions");
  }
}

}  // namespace hoigraph
