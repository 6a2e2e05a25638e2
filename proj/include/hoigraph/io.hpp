#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoigraph/evaluation.hpp"
#include "hoigraph/scene.hpp"
#include "hoigraph/training.hpp"

namespace hoigraph {

using json = nlohmann::json;

/// A scene read from disk. Unlabelled scenes carry empty label tensors.
struct SceneRecord {
  LabeledScene scene;
  bool labeled = false;
};

/// Scene document:
///   {"image_id", "width", "height",
///    "instances": [{"kind": "subject"|"object", "box": [x1,y1,x2,y2],
///                   "confidence", "feature": [...]}],
///    "labels": [{"subject": i, "object": j, "actions": [multi-hot]}]}
/// Subject and object indices count instances of that kind in file order.
/// `feature_dim` / `num_classes` of 0 accept whatever the file uses.
/// Violations throw ConfigError naming the field and index.
SceneRecord scene_from_json(const json& doc, std::size_t feature_dim = 0, std::size_t num_classes = 0);
json scene_to_json(const LabeledScene& scene, bool with_labels);

/// A file holds one scene object or an array of them.
std::vector<SceneRecord> load_scenes(const std::filesystem::path& path, std::size_t feature_dim = 0,
                                     std::size_t num_classes = 0);
void save_scenes(const std::filesystem::path& path, const std::vector<LabeledScene>& scenes, bool with_labels);

/// Prediction records: {"image_id", "subject", "object", "human_box",
/// "object_box", "action", "score"}.
struct PredictionRecord {
  HoiPrediction prediction;
  std::size_t subject = 0;
  std::size_t object = 0;
};
json predictions_to_json(const std::vector<PredictionRecord>& records);
std::vector<HoiPrediction> predictions_from_json(const json& doc);

/// {"images": [{"image_id", "num_subjects", "num_objects"}],
///  "annotations": [{"image_id", "human_box", "object_box", "action"}],
///  "known_object": {"<action id>": [image ids]}}   (optional)
struct GroundTruthSet {
  std::vector<ImageInfo> images;
  std::vector<HoiGroundTruth> annotations;
  std::optional<KnownObjectFilter> known_object;
};
json ground_truth_to_json(const GroundTruthSet& gt);
GroundTruthSet ground_truth_from_json(const json& doc);
GroundTruthSet ground_truth_of(const std::vector<LabeledScene>& scenes);

/// {"<action id>": [image ids]}
KnownObjectFilter known_object_from_json(const json& doc);

json report_to_json(const EvalReport& report);
/// Aligned plain-text table with the IoU threshold in its header.
std::string report_table(const EvalReport& report);

json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Training configuration as "key = value" lines. '#' starts a comment.
/// Unknown keys and malformed values throw ConfigError with the line number.
void apply_config_text(const std::string& text, TrainConfig& cfg);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Every key in a fixed order; parses back to an equal config.
std::string config_echo(const TrainConfig& cfg);

json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const json& doc);

}  // namespace hoigraph
