#pragma once

#include <string>
#include <vector>

#include "hoigraph/spatial.hpp"
#include "hoigraph/tensor.hpp"

namespace hoigraph {

enum class NodeKind { subject, object };

struct Instance {
  BoundingBox box;
  double confidence = 1.0;
  std::vector<double> feature;
};

/// One image's detections, split by role. Subject/object indices are
/// positions within the respective list.
struct SceneInput {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Instance> subjects;
  std::vector<Instance> objects;

  std::size_t num_pairs() const { return subjects.size() * objects.size(); }
};

/// A scene with per-pair supervision. `interactions` is [N, M, A] multi-hot,
/// `interactive` is [N, M] and equals 1 exactly where a pair has any action.
struct LabeledScene {
  SceneInput input;
  Tensor interactions;
  Tensor interactive;
};

/// Interactiveness labels derived from an [N, M, A] multi-hot tensor.
Tensor derive_interactiveness(const Tensor& interactions);

/// Checks boxes, confidences, feature lengths and label shapes; throws
/// ConfigError naming the offending field and index.
void validate_scene(const SceneInput& scene, std::size_t feature_dim);
void validate_labeled_scene(const LabeledScene& scene, std::size_t feature_dim, std::size_t num_classes);

}  // namespace hoigraph
