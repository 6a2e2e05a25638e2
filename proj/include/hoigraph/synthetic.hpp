#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hoigraph/scene.hpp"

namespace hoigraph {

enum class Relation { above, overlap, left, right };

std::string to_string(Relation relation);

/// Whether the human box stands in `relation` to the object box.
bool relation_holds(Relation relation, const BoundingBox& human, const BoundingBox& object);

/// Planted-rule scene generator.
///
/// Classes come in sibling pairs (2k, 2k+1) sharing object type k and one
/// spatial relation; they differ only in the subject template. Object types
/// beyond A/2 are background and never interact. A pair (i, j) carries
/// class a iff subject i performs a, object j has the type of a, the boxes
/// satisfy the relation of a, and j is the nearest such object to i.
///
/// Subjects anchored on the same object form a group that performs one
/// action; members of a group may have their template hidden (features are
/// pure noise) as long as one member stays visible.
struct SynthConfig {
  std::size_t count = 100;
  std::uint64_t seed = 0;
  /// Templates and relations depend only on this, so train and test sets
  /// drawn with different `seed`s share one rule.
  std::uint64_t template_seed = 0;
  std::size_t num_classes = 4;  // A
  std::size_t feature_dim = 16;  // F
  double sigma = 0.1;
  std::size_t min_subjects = 1;
  std::size_t max_subjects = 4;
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  double image_width = 640.0;
  double image_height = 480.0;
  std::size_t background_types = 1;
  /// Probability that a subject is anchored on an object and acts on it.
  double p_active = 0.8;
  /// Probability that a grouped subject's template is hidden.
  double p_hide = 0.5;
  /// Probability that an active subject gets a farther same-type decoy.
  double p_decoy = 0.3;

  /// Throws ConfigError.
  void validate() const;
  std::size_t num_object_types() const { return (num_classes + 1) / 2 + background_types; }
};

/// Object type and relation of each class.
std::size_t class_object_type(std::size_t action);
Relation class_relation(std::size_t action);

std::vector<LabeledScene> generate_synthetic_scenes(const SynthConfig& config);

/// Unstructured scene for property tests: boxes anywhere in a 640x480 image,
/// standard normal features, confidences in [0.5, 1] and random labels.
LabeledScene random_scene(std::size_t num_subjects, std::size_t num_objects, std::size_t feature_dim,
                          std::size_t num_classes, std::mt19937_64& rng);

/// Parses "n=200,seed=3,sigma=0.1"; keys are SynthConfig field names, with
/// n for count and a for num_classes. Unknown keys throw ConfigError.
SynthConfig parse_synth_spec(const std::string& text, SynthConfig base = {});

}  // namespace hoigraph
