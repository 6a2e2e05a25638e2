#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hoigraph/scene.hpp"
#include "hoigraph/spatial.hpp"

namespace hoigraph {

struct HoiPrediction {
  std::string image_id;
  BoundingBox human;
  BoundingBox object;
  std::size_t action = 0;
  double score = 0.0;
};

struct HoiGroundTruth {
  std::string image_id;
  BoundingBox human;
  BoundingBox object;
  std::size_t action = 0;
};

/// Instance counts of one image, used for the complex/simple split.
struct ImageInfo {
  std::string image_id;
  std::size_t num_subjects = 0;
  std::size_t num_objects = 0;

  /// Exactly one person and one object.
  bool simple() const { return num_subjects == 1 && num_objects == 1; }
};

struct ClassReport {
  std::size_t action = 0;
  double ap = 0.0;
  std::size_t num_ground_truth = 0;
  std::size_t num_predictions = 0;
  std::size_t true_positives = 0;
};

struct EvalReport {
  double iou_threshold = 0.5;
  bool known_object = false;
  /// Classes with at least one ground truth, ascending action id.
  std::vector<ClassReport> classes;
  double map = 0.0;
  std::size_t num_ground_truth = 0;
  std::size_t num_predictions = 0;
  std::vector<std::pair<std::string, EvalReport>> subsets;
};

/// Known-object mode: for each action, the images it is evaluated on.
using KnownObjectFilter = std::map<std::size_t, std::set<std::string>>;

struct EvalOptions {
  double iou_threshold = 0.5;
  std::optional<KnownObjectFilter> known_object;
};

double iou(const BoundingBox& a, const BoundingBox& b);

/// Area under the precision envelope for hits listed in descending score
/// order: sum over ranks of (recall_k - recall_{k-1}) * max_{j >= k} precision_j.
double average_precision(const std::vector<bool>& hits, std::size_t num_ground_truth);

/// Role AP per class and their mean. A prediction is a hit when an unmatched
/// ground truth of the same image and class overlaps it with IoU strictly
/// above the threshold for both boxes; ties in score keep input order.
/// Throws DomainError when no class has ground truth.
EvalReport evaluate_map(const std::vector<HoiPrediction>& preds, const std::vector<HoiGroundTruth>& gt,
                        const EvalOptions& options = {});

/// evaluate_map plus "complex" and "simple" sub-reports over the image split.
EvalReport evaluate_with_complexity_split(const std::vector<HoiPrediction>& preds,
                                          const std::vector<HoiGroundTruth>& gt,
                                          const std::vector<ImageInfo>& images, const EvalOptions& options = {});

/// (complex, simple); simple means N = 1 and M = 1.
std::pair<std::vector<LabeledScene>, std::vector<LabeledScene>> split_by_complexity(
    const std::vector<LabeledScene>& scenes);
std::pair<std::vector<ImageInfo>, std::vector<ImageInfo>> split_by_complexity(const std::vector<ImageInfo>& images);

/// Ground-truth triples of a labelled scene.
std::vector<HoiGroundTruth> ground_truth_of(const LabeledScene& scene);
ImageInfo image_info_of(const SceneInput& scene);

}  // namespace hoigraph
