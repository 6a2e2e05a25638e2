#include "hoigraph/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "hoigraph/errors.hpp"

namespace hoigraph {

namespace {

std::string at_path(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string at_index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "document: expected an object" : path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(at_path(path, key) + ": missing");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path + ": not finite");
  return d;
}

std::size_t index_value(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(path + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + ": expected a string");
  return v.get<std::string>();
}

BoundingBox box_from(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 4) throw ConfigError(path + ": expected [x1, y1, x2, y2]");
  BoundingBox b{number(v[0], path + "[0]"), number(v[1], path + "[1]"), number(v[2], path + "[2]"),
                number(v[3], path + "[3]")};
  if (!b.valid()) throw ConfigError(path + ": invalid box (need 0 <= x1 < x2 and 0 <= y1 < y2)");
  return b;
}

json box_to(const BoundingBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// ---- training config fields ----------------------------------------------

enum class FieldKind { real, count, boolean, text, list };

struct Field {
  const char* name;
  FieldKind kind;
  std::function<json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const json&)> set;
};

const std::vector<Field>& config_fields() {
  static const std::vector<Field> fields = {
      {"lambda", FieldKind::real, [](const TrainConfig& c) { return json(c.lambda); },
       [](TrainConfig& c, const json& v) { c.lambda = v.get<double>(); }},
      {"lr0", FieldKind::real, [](const TrainConfig& c) { return json(c.lr0); },
       [](TrainConfig& c, const json& v) { c.lr0 = v.get<double>(); }},
      {"decay", FieldKind::real, [](const TrainConfig& c) { return json(c.decay); },
       [](TrainConfig& c, const json& v) { c.decay = v.get<double>(); }},
      {"decay_every", FieldKind::count, [](const TrainConfig& c) { return json(c.decay_every); },
       [](TrainConfig& c, const json& v) { c.decay_every = v.get<std::size_t>(); }},
      {"batch_size", FieldKind::count, [](const TrainConfig& c) { return json(c.batch_size); },
       [](TrainConfig& c, const json& v) { c.batch_size = v.get<std::size_t>(); }},
      {"epochs", FieldKind::count, [](const TrainConfig& c) { return json(c.epochs); },
       [](TrainConfig& c, const json& v) { c.epochs = v.get<std::size_t>(); }},
      {"momentum", FieldKind::real, [](const TrainConfig& c) { return json(c.momentum); },
       [](TrainConfig& c, const json& v) { c.momentum = v.get<double>(); }},
      {"seed", FieldKind::count, [](const TrainConfig& c) { return json(c.seed); },
       [](TrainConfig& c, const json& v) { c.seed = v.get<std::uint64_t>(); }},
      {"iterations", FieldKind::count, [](const TrainConfig& c) { return json(c.model.iterations); },
       [](TrainConfig& c, const json& v) { c.model.iterations = v.get<std::size_t>(); }},
      {"feature_dim", FieldKind::count, [](const TrainConfig& c) { return json(c.model.feature_dim); },
       [](TrainConfig& c, const json& v) { c.model.feature_dim = v.get<std::size_t>(); }},
      {"hidden_dim", FieldKind::count, [](const TrainConfig& c) { return json(c.model.hidden_dim); },
       [](TrainConfig& c, const json& v) { c.model.hidden_dim = v.get<std::size_t>(); }},
      {"num_classes", FieldKind::count, [](const TrainConfig& c) { return json(c.model.num_classes); },
       [](TrainConfig& c, const json& v) { c.model.num_classes = v.get<std::size_t>(); }},
      {"spatial_channels", FieldKind::list, [](const TrainConfig& c) { return json(c.model.spatial_channels); },
       [](TrainConfig& c, const json& v) {
         if (!v.is_array() || v.size() != 3) throw ConfigError("spatial_channels: expected three widths");
         for (std::size_t k = 0; k < 3; ++k) c.model.spatial_channels[k] = v[k].get<std::size_t>();
       }},
      {"use_intra", FieldKind::boolean, [](const TrainConfig& c) { return json(c.model.use_intra); },
       [](TrainConfig& c, const json& v) { c.model.use_intra = v.get<bool>(); }},
      {"use_inter", FieldKind::boolean, [](const TrainConfig& c) { return json(c.model.use_inter); },
       [](TrainConfig& c, const json& v) { c.model.use_inter = v.get<bool>(); }},
      {"use_intra_attention", FieldKind::boolean, [](const TrainConfig& c) { return json(c.model.use_intra_attention); },
       [](TrainConfig& c, const json& v) { c.model.use_intra_attention = v.get<bool>(); }},
      {"use_interactiveness_weight", FieldKind::boolean,
       [](const TrainConfig& c) { return json(c.model.use_interactiveness_weight); },
       [](TrainConfig& c, const json& v) { c.model.use_interactiveness_weight = v.get<bool>(); }},
      {"homogeneous", FieldKind::text, [](const TrainConfig& c) { return json(to_string(c.model.homogeneous)); },
       [](TrainConfig& c, const json& v) { c.model.homogeneous = parse_homogeneous_mode(v.get<std::string>()); }},
      {"intra_mean_divide", FieldKind::boolean, [](const TrainConfig& c) { return json(c.model.intra_mean_divide); },
       [](TrainConfig& c, const json& v) { c.model.intra_mean_divide = v.get<bool>(); }},
  };
  return fields;
}

const Field* find_field(const std::string& name) {
  for (const auto& f : config_fields()) {
    if (name == f.name) return &f;
  }
  return nullptr;
}

json parse_field_value(const Field& field, const std::string& value) {
  auto fail = [&](const char* expected) {
    return ConfigError(std::string(field.name) + ": expected " + expected + ", got '" + value + "'");
  };
  const char* first = value.data();
  const char* last = value.data() + value.size();
  switch (field.kind) {
    case FieldKind::real: {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || !std::isfinite(v)) throw fail("a number");
      return v;
    }
    case FieldKind::count: {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) throw fail("a non-negative integer");
      return v;
    }
    case FieldKind::boolean:
      if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
      if (value == "false" || value == "0" || value == "no" || value == "off") return false;
      throw fail("true or false");
    case FieldKind::text:
      return value;
    case FieldKind::list: {
      json out = json::array();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) throw fail("comma-separated integers");
        out.push_back(v);
      }
      return out;
    }
  }
  throw fail("a value");
}

std::string format_field_value(const json& v) {
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return format_real(v.get<double>());
  if (v.is_number_integer()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_string()) return v.get<std::string>();
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + std::to_string(v[k].get<std::uint64_t>());
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

json class_report_json(const ClassReport& c) {
  return {{"action", c.action},
          {"ap", c.ap},
          {"num_ground_truth", c.num_ground_truth},
          {"num_predictions", c.num_predictions},
          {"true_positives", c.true_positives}};
}

void append_table(std::string& out, const EvalReport& r, const std::string& title) {
  char line[160];
  out += title + "\n";
  std::snprintf(line, sizeof line, "%8s %8s %8s %8s %8s\n", "action", "AP", "gt", "pred", "tp");
  out += line;
  for (const auto& c : r.classes) {
    std::snprintf(line, sizeof line, "%8zu %8.4f %8zu %8zu %8zu\n", c.action, c.ap, c.num_ground_truth,
                  c.num_predictions, c.true_positives);
    out += line;
  }
  std::snprintf(line, sizeof line, "%8s %8.4f %8zu %8zu\n", "mAP", r.map, r.num_ground_truth, r.num_predictions);
  out += line;
}

}  // namespace

// ---- scenes -----------------------------------------------------------------

SceneRecord scene_from_json(const json& doc, std::size_t feature_dim, std::size_t num_classes) {
  SceneRecord rec;
  SceneInput& in = rec.scene.input;
  try {
    in.image_id = text(require(doc, "image_id", ""), "image_id");
    in.width = number(require(doc, "width", ""), "width");
    in.height = number(require(doc, "height", ""), "height");
    const json& instances = require(doc, "instances", "");
    if (!instances.is_array()) throw ConfigError("instances: expected an array");
    std::size_t f = feature_dim;
    for (std::size_t k = 0; k < instances.size(); ++k) {
      const std::string path = at_index("instances", k);
      const json& item = instances[k];
      const std::string kind = text(require(item, "kind", path), at_path(path, "kind"));
      if (kind != "subject" && kind != "object") {
        throw ConfigError(at_path(path, "kind") + ": expected \"subject\" or \"object\", got \"" + kind + "\"");
      }
      Instance inst;
      inst.box = box_from(require(item, "box", path), at_path(path, "box"));
      inst.confidence = number(require(item, "confidence", path), at_path(path, "confidence"));
      if (inst.confidence < 0.0 || inst.confidence > 1.0) {
        throw ConfigError(at_path(path, "confidence") + ": must lie in [0, 1]");
      }
      const json& feat = require(item, "feature", path);
      const std::string fpath = at_path(path, "feature");
      if (!feat.is_array()) throw ConfigError(fpath + ": expected an array");
      if (f == 0) f = feat.size();
      if (feat.size() != f || f == 0) {
        throw ConfigError(fpath + ": length " + std::to_string(feat.size()) + ", expected " + std::to_string(f));
      }
      for (std::size_t d = 0; d < feat.size(); ++d) inst.feature.push_back(number(feat[d], at_index(fpath, d)));
      (kind == "subject" ? in.subjects : in.objects).push_back(std::move(inst));
    }

    const std::size_t n = in.subjects.size(), m = in.objects.size();
    auto labels = doc.find("labels");
    rec.labeled = labels != doc.end();
    std::size_t a = num_classes;
    if (rec.labeled) {
      if (!labels->is_array()) throw ConfigError("labels: expected an array");
      if (a == 0) {
        if (labels->empty()) throw ConfigError("labels: cannot infer the class count from an empty list");
        a = require((*labels)[0], "actions", "labels[0]").size();
      }
      rec.scene.interactions = Tensor({n, m, a});
      std::vector<bool> seen(n * m, false);
      for (std::size_t k = 0; k < labels->size(); ++k) {
        const std::string path = at_index("labels", k);
        const json& item = (*labels)[k];
        const std::size_t i = index_value(require(item, "subject", path), at_path(path, "subject"));
        const std::size_t j = index_value(require(item, "object", path), at_path(path, "object"));
        if (i >= n) throw ConfigError(at_path(path, "subject") + ": index " + std::to_string(i) + " out of range (" + std::to_string(n) + " subjects)");
        if (j >= m) throw ConfigError(at_path(path, "object") + ": index " + std::to_string(j) + " out of range (" + std::to_string(m) + " objects)");
        if (seen[i * m + j]) throw ConfigError(path + ": duplicate label for pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
        seen[i * m + j] = true;
        const json& actions = require(item, "actions", path);
        const std::string apath = at_path(path, "actions");
        if (!actions.is_array() || actions.size() != a) {
          throw ConfigError(apath + ": expected " + std::to_string(a) + " entries");
        }
        for (std::size_t c = 0; c < a; ++c) {
          const double v = number(actions[c], at_index(apath, c));
          if (v != 0.0 && v != 1.0) throw ConfigError(at_index(apath, c) + ": expected 0 or 1");
          rec.scene.interactions[(i * m + j) * a + c] = v;
        }
      }
      rec.scene.interactive = derive_interactiveness(rec.scene.interactions);
    } else if (a > 0) {
      rec.scene.interactions = Tensor({n, m, a});
      rec.scene.interactive = Tensor({n, m});
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scene: ") + e.what());
  }
  return rec;
}

json scene_to_json(const LabeledScene& scene, bool with_labels) {
  const SceneInput& in = scene.input;
  json doc = {{"image_id", in.image_id}, {"width", in.width}, {"height", in.height}};
  json instances = json::array();
  auto add = [&](const Instance& inst, const char* kind) {
    instances.push_back({{"kind", kind}, {"box", box_to(inst.box)}, {"confidence", inst.confidence}, {"feature", inst.feature}});
  };
  for (const auto& s : in.subjects) add(s, "subject");
  for (const auto& o : in.objects) add(o, "object");
  doc["instances"] = std::move(instances);
  if (with_labels) {
    json labels = json::array();
    const std::size_t m = in.objects.size();
    const std::size_t a = scene.interactions.rank() == 3 ? scene.interactions.dim(2) : 0;
    for (std::size_t i = 0; i < in.subjects.size(); ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        json actions = json::array();
        bool any = false;
        for (std::size_t c = 0; c < a; ++c) {
          const double v = scene.interactions[(i * m + j) * a + c];
          actions.push_back(static_cast<int>(v));
          any = any || v > 0.5;
        }
        if (any) labels.push_back({{"subject", i}, {"object", j}, {"actions", std::move(actions)}});
      }
    }
    doc["labels"] = std::move(labels);
  }
  return doc;
}

std::vector<SceneRecord> load_scenes(const std::filesystem::path& path, std::size_t feature_dim,
                                     std::size_t num_classes) {
  const json doc = read_json_file(path);
  std::vector<SceneRecord> out;
  auto read_one = [&](const json& item, const std::string& where) {
    try {
      out.push_back(scene_from_json(item, feature_dim, num_classes));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + where + ": " + e.what());
    }
    // Later scenes in a file must agree with the first.
    if (feature_dim == 0 && !out.back().scene.input.subjects.empty()) {
      feature_dim = out.back().scene.input.subjects.front().feature.size();
    } else if (feature_dim == 0 && !out.back().scene.input.objects.empty()) {
      feature_dim = out.back().scene.input.objects.front().feature.size();
    }
    if (num_classes == 0 && out.back().labeled) num_classes = out.back().scene.interactions.dim(2);
  };
  if (doc.is_array()) {
    for (std::size_t k = 0; k < doc.size(); ++k) read_one(doc[k], "[" + std::to_string(k) + "]");
  } else {
    read_one(doc, "");
  }
  return out;
}

void save_scenes(const std::filesystem::path& path, const std::vector<LabeledScene>& scenes, bool with_labels) {
  json doc = json::array();
  for (const auto& s : scenes) doc.push_back(scene_to_json(s, with_labels));
  write_text_file(path, doc.dump(1) + "\n");
}

// ---- predictions and ground truth -------------------------------------------

json predictions_to_json(const std::vector<PredictionRecord>& records) {
  json out = json::array();
  for (const auto& r : records) {
    out.push_back({{"image_id", r.prediction.image_id},
                   {"subject", r.subject},
                   {"object", r.object},
                   {"human_box", box_to(r.prediction.human)},
                   {"object_box", box_to(r.prediction.object)},
                   {"action", r.prediction.action},
                   {"score", r.prediction.score}});
  }
  return out;
}

std::vector<HoiPrediction> predictions_from_json(const json& doc) {
  if (!doc.is_array()) throw ConfigError("predictions: expected an array");
  std::vector<HoiPrediction> out;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const std::string path = at_index("predictions", k);
    const json& item = doc[k];
    HoiPrediction p;
    p.image_id = text(require(item, "image_id", path), at_path(path, "image_id"));
    p.human = box_from(require(item, "human_box", path), at_path(path, "human_box"));
    p.object = box_from(require(item, "object_box", path), at_path(path, "object_box"));
    p.action = index_value(require(item, "action", path), at_path(path, "action"));
    p.score = number(require(item, "score", path), at_path(path, "score"));
    out.push_back(std::move(p));
  }
  return out;
}

json ground_truth_to_json(const GroundTruthSet& gt) {
  json images = json::array(), annotations = json::array();
  for (const auto& img : gt.images) {
    images.push_back({{"image_id", img.image_id}, {"num_subjects", img.num_subjects}, {"num_objects", img.num_objects}});
  }
  for (const auto& a : gt.annotations) {
    annotations.push_back({{"image_id", a.image_id},
                           {"human_box", box_to(a.human)},
                           {"object_box", box_to(a.object)},
                           {"action", a.action}});
  }
  json doc = {{"images", std::move(images)}, {"annotations", std::move(annotations)}};
  if (gt.known_object) {
    json filter = json::object();
    for (const auto& [action, ids] : *gt.known_object) filter[std::to_string(action)] = ids;
    doc["known_object"] = std::move(filter);
  }
  return doc;
}

GroundTruthSet ground_truth_from_json(const json& doc) {
  GroundTruthSet gt;
  const json& images = require(doc, "images", "");
  const json& annotations = require(doc, "annotations", "");
  if (!images.is_array()) throw ConfigError("images: expected an array");
  if (!annotations.is_array()) throw ConfigError("annotations: expected an array");
  for (std::size_t k = 0; k < images.size(); ++k) {
    const std::string path = at_index("images", k);
    gt.images.push_back({text(require(images[k], "image_id", path), at_path(path, "image_id")),
                         index_value(require(images[k], "num_subjects", path), at_path(path, "num_subjects")),
                         index_value(require(images[k], "num_objects", path), at_path(path, "num_objects"))});
  }
  for (std::size_t k = 0; k < annotations.size(); ++k) {
    const std::string path = at_index("annotations", k);
    const json& item = annotations[k];
    gt.annotations.push_back({text(require(item, "image_id", path), at_path(path, "image_id")),
                              box_from(require(item, "human_box", path), at_path(path, "human_box")),
                              box_from(require(item, "object_box", path), at_path(path, "object_box")),
                              index_value(require(item, "action", path), at_path(path, "action"))});
  }
  if (doc.contains("known_object")) gt.known_object = known_object_from_json(doc["known_object"]);
  return gt;
}

GroundTruthSet ground_truth_of(const std::vector<LabeledScene>& scenes) {
  GroundTruthSet gt;
  for (const auto& s : scenes) {
    gt.images.push_back(image_info_of(s.input));
    auto items = ground_truth_of(s);
    gt.annotations.insert(gt.annotations.end(), items.begin(), items.end());
  }
  return gt;
}

KnownObjectFilter known_object_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("known-object filter: expected an object keyed by action id");
  KnownObjectFilter filter;
  for (const auto& [key, ids] : doc.items()) {
    std::size_t action = 0;
    const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), action);
    if (ec != std::errc() || ptr != key.data() + key.size()) {
      throw ConfigError("known-object filter: key '" + key + "' is not an action id");
    }
    if (!ids.is_array()) throw ConfigError("known-object filter." + key + ": expected an array of image ids");
    for (std::size_t k = 0; k < ids.size(); ++k) filter[action].insert(text(ids[k], key + at_index("", k)));
  }
  return filter;
}

json report_to_json(const EvalReport& r) {
  json classes = json::array();
  for (const auto& c : r.classes) classes.push_back(class_report_json(c));
  json doc = {{"iou_threshold", r.iou_threshold},
              {"mode", r.known_object ? "known-object" : "default"},
              {"map", r.map},
              {"num_ground_truth", r.num_ground_truth},
              {"num_predictions", r.num_predictions},
              {"classes", std::move(classes)}};
  if (!r.subsets.empty()) {
    json subsets = json::object();
    for (const auto& [name, sub] : r.subsets) subsets[name] = report_to_json(sub);
    doc["subsets"] = std::move(subsets);
  }
  return doc;
}

std::string report_table(const EvalReport& r) {
  char header[128];
  std::snprintf(header, sizeof header, "role AP (IoU > %.2f, %s mode)", r.iou_threshold,
                r.known_object ? "known-object" : "default");
  std::string out;
  append_table(out, r, header);
  for (const auto& [name, sub] : r.subsets) {
    out += "\n";
    append_table(out, sub, "[" + name + "]");
  }
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

// ---- training config ----------------------------------------------------------

void apply_config_text(const std::string& content, TrainConfig& cfg) {
  std::stringstream ss(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const Field* field = find_field(key);
    if (!field) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      field->set(cfg, parse_field_value(*field, value));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  TrainConfig cfg;
  try {
    apply_config_text(buf.str(), cfg);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return cfg;
}

std::string config_echo(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : config_fields()) out += std::string(f.name) + " = " + format_field_value(f.get(cfg)) + "\n";
  return out;
}

json config_to_json(const TrainConfig& cfg) {
  json doc = json::object();
  for (const auto& f : config_fields()) doc[f.name] = f.get(cfg);
  return doc;
}

TrainConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected an object");
  TrainConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    const Field* field = find_field(key);
    if (!field) throw ConfigError("config: unknown key '" + key + "'");
    try {
      field->set(cfg, value);
    } catch (const json::exception& e) {
      throw ConfigError("config." + key + ": " + e.what());
    }
  }
  return cfg;
}

}  // namespace hoigraph
