#include "hoigraph/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "hoigraph/errors.hpp"

namespace hoigraph {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double average_precision(const std::vector<bool>& hits, std::size_t num_ground_truth) {
  if (num_ground_truth == 0 || hits.empty()) return 0.0;
  const std::size_t n = hits.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (hits[k]) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(num_ground_truth);
  }
  for (std::size_t k = n - 1; k-- > 0;) precision[k] = std::max(precision[k], precision[k + 1]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

namespace {

ClassReport evaluate_class(std::size_t action, const std::vector<const HoiPrediction*>& preds,
                           const std::vector<const HoiGroundTruth*>& gt, double threshold) {
  ClassReport report{action, 0.0, gt.size(), preds.size(), 0};
  std::unordered_map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t g = 0; g < gt.size(); ++g) by_image[gt[g]->image_id].push_back(g);

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a]->score > preds[b]->score; });

  std::vector<bool> used(gt.size(), false);
  std::vector<bool> hits;
  hits.reserve(order.size());
  for (std::size_t idx : order) {
    const HoiPrediction& p = *preds[idx];
    std::size_t best = gt.size();
    double best_overlap = -1.0;
    if (auto it = by_image.find(p.image_id); it != by_image.end()) {
      for (std::size_t g : it->second) {
        if (used[g]) continue;
        const double ih = iou(p.human, gt[g]->human);
        const double io = iou(p.object, gt[g]->object);
        if (ih > threshold && io > threshold && std::min(ih, io) > best_overlap) {
          best_overlap = std::min(ih, io);
          best = g;
        }
      }
    }
    const bool hit = best < gt.size();
    if (hit) {
      used[best] = true;
      ++report.true_positives;
    }
    hits.push_back(hit);
  }
  report.ap = average_precision(hits, gt.size());
  return report;
}

}  // namespace

EvalReport evaluate_map(const std::vector<HoiPrediction>& preds, const std::vector<HoiGroundTruth>& gt,
                        const EvalOptions& options) {
  EvalReport report;
  report.iou_threshold = options.iou_threshold;
  report.known_object = options.known_object.has_value();

  std::map<std::size_t, std::vector<const HoiGroundTruth*>> gt_by_class;
  std::map<std::size_t, std::vector<const HoiPrediction*>> pred_by_class;
  auto admitted = [&](std::size_t action, const std::string& image) {
    if (!options.known_object) return true;
    auto it = options.known_object->find(action);
    return it != options.known_object->end() && it->second.contains(image);
  };
  for (const auto& g : gt) {
    if (admitted(g.action, g.image_id)) gt_by_class[g.action].push_back(&g);
  }
  for (const auto& p : preds) {
    if (admitted(p.action, p.image_id)) pred_by_class[p.action].push_back(&p);
  }
  if (gt_by_class.empty()) throw DomainError("evaluate_map: no ground truth to evaluate");

  double sum = 0.0;
  for (const auto& [action, items] : gt_by_class) {
    ClassReport c = evaluate_class(action, pred_by_class[action], items, options.iou_threshold);
    sum += c.ap;
    report.num_ground_truth += c.num_ground_truth;
    report.num_predictions += c.num_predictions;
    report.classes.push_back(c);
  }
  report.map = sum / static_cast<double>(report.classes.size());
  return report;
}

EvalReport evaluate_with_complexity_split(const std::vector<HoiPrediction>& preds,
                                          const std::vector<HoiGroundTruth>& gt,
                                          const std::vector<ImageInfo>& images, const EvalOptions& options) {
  EvalReport report = evaluate_map(preds, gt, options);
  const auto [complex, simple] = split_by_complexity(images);
  for (const auto& [name, subset] : {std::pair{"complex", complex}, std::pair{"simple", simple}}) {
    std::set<std::string> ids;
    for (const auto& img : subset) ids.insert(img.image_id);
    std::vector<HoiPrediction> sp;
    std::vector<HoiGroundTruth> sg;
    std::copy_if(preds.begin(), preds.end(), std::back_inserter(sp),
                 [&](const HoiPrediction& p) { return ids.contains(p.image_id); });
    std::copy_if(gt.begin(), gt.end(), std::back_inserter(sg),
                 [&](const HoiGroundTruth& g) { return ids.contains(g.image_id); });
    EvalReport sub;
    sub.iou_threshold = options.iou_threshold;
    sub.known_object = options.known_object.has_value();
    try {
      sub = evaluate_map(sp, sg, options);
    } catch (const DomainError&) {
      // Subset without ground truth: reported empty.
      sub.num_predictions = sp.size();
    }
    report.subsets.emplace_back(name, std::move(sub));
  }
  return report;
}

std::pair<std::vector<LabeledScene>, std::vector<LabeledScene>> split_by_complexity(
    const std::vector<LabeledScene>& scenes) {
  std::pair<std::vector<LabeledScene>, std::vector<LabeledScene>> out;
  for (const auto& s : scenes) {
    (image_info_of(s.input).simple() ? out.second : out.first).push_back(s);
  }
  return out;
}

std::pair<std::vector<ImageInfo>, std::vector<ImageInfo>> split_by_complexity(const std::vector<ImageInfo>& images) {
  std::pair<std::vector<ImageInfo>, std::vector<ImageInfo>> out;
  for (const auto& img : images) (img.simple() ? out.second : out.first).push_back(img);
  return out;
}

std::vector<HoiGroundTruth> ground_truth_of(const LabeledScene& scene) {
  std::vector<HoiGroundTruth> out;
  const auto& in = scene.input;
  const std::size_t m = in.objects.size();
  const std::size_t a = scene.interactions.rank() == 3 ? scene.interactions.dim(2) : 0;
  for (std::size_t i = 0; i < in.subjects.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < a; ++c) {
        if (scene.interactions[(i * m + j) * a + c] > 0.5) {
          out.push_back({in.image_id, in.subjects[i].box, in.objects[j].box, c});
        }
      }
    }
  }
  return out;
}

ImageInfo image_info_of(const SceneInput& scene) {
  return {scene.image_id, scene.subjects.size(), scene.objects.size()};
}

}  // namespace hoigraph
