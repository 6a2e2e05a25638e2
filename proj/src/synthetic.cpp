#include "hoigraph/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <random>

#include "hoigraph/errors.hpp"

namespace hoigraph {

namespace {

constexpr Relation kRelations[] = {Relation::above, Relation::overlap, Relation::left, Relation::right};

double overlap_1d(double a1, double a2, double b1, double b2) { return std::min(a2, b2) - std::max(a1, b1); }

double center_distance(const BoundingBox& a, const BoundingBox& b) {
  return std::hypot((a.x1 + a.x2 - b.x1 - b.x2) / 2.0, (a.y1 + a.y2 - b.y1 - b.y2) / 2.0);
}

// Unit-norm directions, mutually orthogonal while count <= dim.
std::vector<std::vector<double>> make_templates(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal(rng);
    if (k < dim) {
      for (const auto& prev : out) {
        double dot = 0.0;
        for (std::size_t d = 0; d < dim; ++d) dot += v[d] * prev[d];
        for (std::size_t d = 0; d < dim; ++d) v[d] -= dot * prev[d];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

class SceneBuilder {
 public:
  SceneBuilder(const SynthConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t pick(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }

  // Translates the box into the image without resizing it.
  BoundingBox fit(double cx, double cy, double w, double h) const {
    w = std::min(w, cfg_.image_width - 1.0);
    h = std::min(h, cfg_.image_height - 1.0);
    const double x1 = std::clamp(cx - w / 2.0, 0.0, cfg_.image_width - w);
    const double y1 = std::clamp(cy - h / 2.0, 0.0, cfg_.image_height - h);
    return {x1, y1, x1 + w, y1 + h};
  }

  BoundingBox random_box(double wmin, double wmax, double hmin, double hmax) {
    const double w = uniform(wmin, wmax), h = uniform(hmin, hmax);
    return fit(uniform(w / 2.0, cfg_.image_width - w / 2.0), uniform(h / 2.0, cfg_.image_height - h / 2.0), w, h);
  }

  BoundingBox random_object() { return random_box(40.0, 100.0, 40.0, 100.0); }
  BoundingBox random_subject() { return random_box(50.0, 90.0, 90.0, 160.0); }

  // Human box of size (w, h) in `rel` to object `o`, gap as a fraction of the object size.
  BoundingBox place_subject(Relation rel, const BoundingBox& o, double w, double h, double gap) {
    const double ocx = (o.x1 + o.x2) / 2.0, ocy = (o.y1 + o.y2) / 2.0;
    switch (rel) {
      case Relation::above:
        return fit(ocx + uniform(-0.2, 0.2) * o.width(), o.y1 - gap * o.height() - h / 2.0, w, h);
      case Relation::overlap:
        return fit(ocx + uniform(-0.15, 0.15) * w, ocy + uniform(-0.15, 0.15) * h, w, h);
      case Relation::left:
        return fit(o.x1 - gap * o.width() - w / 2.0, ocy + uniform(-0.2, 0.2) * o.height(), w, h);
      case Relation::right:
        return fit(o.x2 + gap * o.width() + w / 2.0, ocy + uniform(-0.2, 0.2) * o.height(), w, h);
    }
    return fit(ocx, ocy, w, h);
  }

  // Object box of size (w, h) in `rel` to human `s`, farther than a typical anchor.
  BoundingBox place_decoy(Relation rel, const BoundingBox& s, double w, double h) {
    const double scx = (s.x1 + s.x2) / 2.0, scy = (s.y1 + s.y2) / 2.0;
    const double gap = uniform(0.3, 0.5);
    const double side = chance(0.5) ? 1.0 : -1.0;
    switch (rel) {
      case Relation::above:
        return fit(scx + side * uniform(0.1, 0.25) * w, s.y2 + gap * h + h / 2.0, w, h);
      case Relation::overlap:
        return fit(scx + side * 0.3 * s.width(), scy + side * 0.3 * s.height(), std::min(w, 0.5 * s.width()),
                   std::min(h, 0.5 * s.height()));
      case Relation::left:
        return fit(s.x2 + gap * w + w / 2.0, scy + side * uniform(0.1, 0.25) * h, w, h);
      case Relation::right:
        return fit(s.x1 - gap * w - w / 2.0, scy + side * uniform(0.1, 0.25) * h, w, h);
    }
    return fit(scx, scy, w, h);
  }

  std::vector<double> noisy(const std::vector<double>* base) {
    std::normal_distribution<double> normal(0.0, cfg_.sigma > 0.0 ? cfg_.sigma : 1.0);
    std::vector<double> f(cfg_.feature_dim, 0.0);
    for (std::size_t d = 0; d < f.size(); ++d) {
      if (base) f[d] = (*base)[d];
      if (cfg_.sigma > 0.0) f[d] += normal(rng_);
    }
    return f;
  }

 private:
  const SynthConfig& cfg_;
  std::mt19937_64& rng_;
};

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("synth spec: '" + key + "' expects a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError("synth spec: '" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

}  // namespace

std::string to_string(Relation relation) {
  switch (relation) {
    case Relation::above: return "above";
    case Relation::overlap: return "overlap";
    case Relation::left: return "left";
    case Relation::right: return "right";
  }
  return "?";
}

bool relation_holds(Relation relation, const BoundingBox& h, const BoundingBox& o) {
  switch (relation) {
    case Relation::above: {
      const double gap = o.y1 - h.y2;
      return gap >= -0.25 * o.height() && gap <= 0.6 * o.height() &&
             overlap_1d(h.x1, h.x2, o.x1, o.x2) >= 0.5 * std::min(h.width(), o.width());
    }
    case Relation::overlap: {
      const double iw = overlap_1d(h.x1, h.x2, o.x1, o.x2), ih = overlap_1d(h.y1, h.y2, o.y1, o.y2);
      return iw > 0.0 && ih > 0.0 && iw * ih >= 0.5 * o.area();
    }
    case Relation::left:
    case Relation::right: {
      const double gap = relation == Relation::left ? o.x1 - h.x2 : h.x1 - o.x2;
      return gap >= -0.25 * o.width() && gap <= 0.6 * o.width() &&
             overlap_1d(h.y1, h.y2, o.y1, o.y2) >= 0.5 * std::min(h.height(), o.height());
    }
  }
  return false;
}

std::size_t class_object_type(std::size_t action) { return action / 2; }
Relation class_relation(std::size_t action) { return kRelations[(action / 2) % 4]; }

void SynthConfig::validate() const {
  if (num_classes < 2) throw ConfigError("synth: num_classes must be at least 2");
  if (feature_dim < 4) throw ConfigError("synth: feature_dim must be at least 4");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("synth: sigma must be finite and non-negative");
  if (min_subjects > max_subjects || min_objects > max_objects) throw ConfigError("synth: empty instance-count range");
  if (!(image_width >= 64.0 && image_height >= 64.0)) throw ConfigError("synth: image must be at least 64x64");
  for (double p : {p_active, p_hide, p_decoy}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth: probabilities must lie in [0, 1]");
  }
}

std::vector<LabeledScene> generate_synthetic_scenes(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 template_rng(cfg.template_seed);
  const auto subject_templates = make_templates(cfg.num_classes, cfg.feature_dim, template_rng);
  const auto object_templates = make_templates(cfg.num_object_types(), cfg.feature_dim, template_rng);
  const std::size_t active_types = (cfg.num_classes + 1) / 2;
  const std::size_t a_count = cfg.num_classes;

  std::mt19937_64 rng(cfg.seed);
  SceneBuilder b(cfg, rng);
  std::vector<LabeledScene> scenes;
  scenes.reserve(cfg.count);

  for (std::size_t s = 0; s < cfg.count; ++s) {
    const std::size_t n = b.pick(cfg.min_subjects, cfg.max_subjects);
    const std::size_t m = b.pick(cfg.min_objects, cfg.max_objects);

    std::vector<std::size_t> obj_type(m);
    std::vector<BoundingBox> obj_box(m);
    for (std::size_t j = 0; j < m; ++j) {
      obj_type[j] = b.pick(0, cfg.num_object_types() - 1);
      obj_box[j] = b.random_object();
    }

    // Subjects: anchored groups share one action per anchor object.
    std::vector<std::size_t> action(n);
    std::vector<std::ptrdiff_t> anchor(n, -1);
    std::vector<BoundingBox> subj_box(n);
    std::map<std::size_t, std::size_t> anchor_action;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> candidates;
      for (std::size_t j = 0; j < m; ++j) {
        if (obj_type[j] < active_types) candidates.push_back(j);
      }
      if (!candidates.empty() && b.chance(cfg.p_active)) {
        const std::size_t j = candidates[b.pick(0, candidates.size() - 1)];
        if (!anchor_action.contains(j)) {
          std::size_t a = 2 * obj_type[j] + b.pick(0, 1);
          if (a >= a_count) a = 2 * obj_type[j];
          anchor_action[j] = a;
        }
        anchor[i] = static_cast<std::ptrdiff_t>(j);
        action[i] = anchor_action[j];
        subj_box[i] = b.place_subject(class_relation(action[i]), obj_box[j], b.uniform(50.0, 90.0),
                                      b.uniform(90.0, 160.0), b.uniform(0.0, 0.2));
      } else {
        action[i] = b.pick(0, a_count - 1);
        subj_box[i] = b.random_subject();
      }
    }

    // Decoys: a farther object of the anchor's type in the same relation.
    std::vector<bool> reserved(m, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (anchor[i] >= 0) reserved[static_cast<std::size_t>(anchor[i])] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (anchor[i] < 0 || !b.chance(cfg.p_decoy)) continue;
      std::vector<std::size_t> free;
      for (std::size_t j = 0; j < m; ++j) {
        if (!reserved[j]) free.push_back(j);
      }
      if (free.empty()) break;
      const std::size_t j = free[b.pick(0, free.size() - 1)];
      reserved[j] = true;
      obj_type[j] = class_object_type(action[i]);
      obj_box[j] = b.place_decoy(class_relation(action[i]), subj_box[i], b.uniform(40.0, 100.0), b.uniform(40.0, 100.0));
    }

    // Hidden templates inside groups; at least one member stays visible.
    std::vector<bool> hidden(n, false);
    for (const auto& [j, a] : anchor_action) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (anchor[i] == static_cast<std::ptrdiff_t>(j)) members.push_back(i);
      }
      if (members.size() < 2) continue;
      bool any_visible = false;
      for (std::size_t i : members) {
        hidden[i] = b.chance(cfg.p_hide);
        any_visible = any_visible || !hidden[i];
      }
      if (!any_visible) hidden[members.front()] = false;
    }

    LabeledScene scene;
    SceneInput& in = scene.input;
    in.image_id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(s);
    in.width = cfg.image_width;
    in.height = cfg.image_height;
    for (std::size_t i = 0; i < n; ++i) {
      in.subjects.push_back({subj_box[i], b.uniform(0.8, 1.0), b.noisy(hidden[i] ? nullptr : &subject_templates[action[i]])});
    }
    for (std::size_t j = 0; j < m; ++j) {
      in.objects.push_back({obj_box[j], b.uniform(0.8, 1.0), b.noisy(&object_templates[obj_type[j]])});
    }

    scene.interactions = Tensor({n, m, a_count});
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = action[i];
      std::ptrdiff_t best = -1;
      double best_dist = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (obj_type[j] != class_object_type(a) || !relation_holds(class_relation(a), subj_box[i], obj_box[j])) continue;
        const double d = center_distance(subj_box[i], obj_box[j]);
        if (best < 0 || d < best_dist) {
          best = static_cast<std::ptrdiff_t>(j);
          best_dist = d;
        }
      }
      if (best >= 0) scene.interactions[(i * m + static_cast<std::size_t>(best)) * a_count + a] = 1.0;
    }
    scene.interactive = derive_interactiveness(scene.interactions);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

LabeledScene random_scene(std::size_t num_subjects, std::size_t num_objects, std::size_t feature_dim,
                          std::size_t num_classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto instance = [&] {
    Instance inst;
    const double w = 20.0 + 180.0 * unit(rng), h = 20.0 + 180.0 * unit(rng);
    inst.box.x1 = (640.0 - w) * unit(rng);
    inst.box.y1 = (480.0 - h) * unit(rng);
    inst.box.x2 = inst.box.x1 + w;
    inst.box.y2 = inst.box.y1 + h;
    inst.confidence = 0.5 + 0.5 * unit(rng);
    for (std::size_t d = 0; d < feature_dim; ++d) inst.feature.push_back(normal(rng));
    return inst;
  };
  LabeledScene scene;
  scene.input.image_id = "random";
  scene.input.width = 640.0;
  scene.input.height = 480.0;
  for (std::size_t i = 0; i < num_subjects; ++i) scene.input.subjects.push_back(instance());
  for (std::size_t j = 0; j < num_objects; ++j) scene.input.objects.push_back(instance());
  scene.interactions = Tensor({num_subjects, num_objects, num_classes});
  for (auto& v : scene.interactions.values()) v = unit(rng) < 0.3 ? 1.0 : 0.0;
  scene.interactive = derive_interactiveness(scene.interactions);
  return scene;
}

SynthConfig parse_synth_spec(const std::string& text, SynthConfig base) {
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t stop = text.find(',', start);
    if (stop == std::string::npos) stop = text.size();
    const std::string item = text.substr(start, stop - start);
    start = stop + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("synth spec: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "n" || key == "count") base.count = parse_uint(key, value);
    else if (key == "seed") base.seed = parse_uint(key, value);
    else if (key == "template_seed") base.template_seed = parse_uint(key, value);
    else if (key == "a" || key == "num_classes") base.num_classes = parse_uint(key, value);
    else if (key == "f" || key == "feature_dim") base.feature_dim = parse_uint(key, value);
    else if (key == "sigma") base.sigma = parse_real(key, value);
    else if (key == "min_subjects") base.min_subjects = parse_uint(key, value);
    else if (key == "max_subjects") base.max_subjects = parse_uint(key, value);
    else if (key == "min_objects") base.min_objects = parse_uint(key, value);
    else if (key == "max_objects") base.max_objects = parse_uint(key, value);
    else if (key == "width") base.image_width = parse_real(key, value);
    else if (key == "height") base.image_height = parse_real(key, value);
    else if (key == "background_types") base.background_types = parse_uint(key, value);
    else if (key == "p_active") base.p_active = parse_real(key, value);
    else if (key == "p_hide") base.p_hide = parse_real(key, value);
    else if (key == "p_decoy") base.p_decoy = parse_real(key, value);
    else throw ConfigError("synth spec: unknown key '" + key + "'");
  }
  base.validate();
  return base;
}

}  // namespace hoigraph
