#include <doctest.h>

#include <cmath>
#include <random>

#include "hoigraph/errors.hpp"
#include "hoigraph/synthetic.hpp"
#include "hoigraph/training.hpp"
#include "support.hpp"

using namespace hoigraph;
using hoigraph::testing::small_config;

namespace {

double bce(double p, double y) { return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p)); }

SynthConfig small_synth(std::size_t count, std::uint64_t seed) {
  SynthConfig s;
  s.count = count;
  s.seed = seed;
  s.num_classes = 3;
  s.feature_dim = 6;
  return s;
}

TrainConfig small_train(std::size_t epochs) {
  TrainConfig cfg;
  cfg.model = small_config();
  cfg.epochs = epochs;
  return cfg;
}

bool same_features(const std::vector<double>& a, const std::vector<double>& b) { return a == b; }

}  // namespace

TEST_CASE("loss examples") {
  Tape t;
  const Tensor half({1, 2, 2}, 0.5);
  const Tensor labels({1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  CHECK(interaction_loss(half, labels) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(interaction_loss(t, t.constant(half), labels).value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const Tensor w = Tensor::vector({0.9, 0.2});
  const Tensor wl = Tensor::vector({1, 0});
  CHECK(interactiveness_loss(w, wl) == doctest::Approx((bce(0.9, 1) + bce(0.2, 0)) / 2.0).epsilon(1e-15));

  const Tensor y({1, 1, 3}, std::vector<double>{0.7, 0.1, 0.4});
  const Tensor yl({1, 1, 3}, std::vector<double>{1, 0, 1});
  CHECK(interaction_loss(y, yl) == doctest::Approx((bce(0.7, 1) + bce(0.1, 0) + bce(0.4, 1)) / 3.0).epsilon(1e-14));

  CHECK(interaction_loss(Tensor({0, 2, 3}), Tensor({0, 2, 3})) == 0.0);
  CHECK(interactiveness_loss(Tensor({0}), Tensor({0})) == 0.0);
  CHECK_THROWS_AS(interaction_loss(half, Tensor({1, 2, 3})), ShapeError);
}

TEST_CASE("total loss weights the interaction term") {
  CHECK(total_loss(1.0, 2.0, 6.0) == 8.0);
  CHECK(total_loss(0.5, 0.1, 6.0) == doctest::Approx(3.1).epsilon(1e-15));
  Tape t;
  const Var l = total_loss(t.constant(Tensor::scalar(0.5)), t.constant(Tensor::scalar(0.1)), 6.0);
  CHECK(l.value()[0] == doctest::Approx(3.1).epsilon(1e-15));
}

TEST_CASE("learning rate schedule") {
  const TrainConfig cfg;
  CHECK(cfg.lambda == 6.0);
  CHECK(cfg.batch_size == 4);
  CHECK(cfg.epochs == 40);
  CHECK(learning_rate(0, cfg) == 0.001);
  CHECK(learning_rate(9, cfg) == 0.001);
  CHECK(learning_rate(10, cfg) == doctest::Approx(0.0006).epsilon(1e-15));
  CHECK(learning_rate(25, cfg) == doctest::Approx(0.00036).epsilon(1e-15));
  CHECK(learning_rate(39, cfg) == doctest::Approx(0.001 * 0.216).epsilon(1e-15));
}

TEST_CASE("training config validation") {
  TrainConfig cfg = small_train(1);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_train(1);
  cfg.lr0 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(train({}, small_train(1)), ConfigError);
}

TEST_CASE("sgd step on a quadratic") {
  ParamStore p;
  p.add("x", Tensor::vector({3.0, -2.0}));
  std::vector<Tensor> velocity;
  for (int step = 0; step < 200; ++step) {
    p.zero_grad();
    Tape t;
    const Var x = t.param(p, "x");
    backward(t, ad::total(ad::mul(x, x)), p);
    sgd_step(p, velocity, 0.1, 0.0);
  }
  CHECK(std::abs(p.value("x")[0]) < 1e-12);

  ParamStore q;
  q.add("x", Tensor::vector({1.0}));
  std::vector<Tensor> v;
  q.grad("x")[0] = 2.0;
  sgd_step(q, v, 0.5, 0.9);
  CHECK(q.value("x")[0] == 0.0);
  sgd_step(q, v, 0.5, 0.9);
  // v = 0.9 * 2 + 2 = 3.8
  CHECK(q.value("x")[0] == doctest::Approx(-1.9).epsilon(1e-15));
}

TEST_CASE("scene loss combines both terms") {
  const Model model = make_model(small_config(), 21);
  std::mt19937_64 rng(21);
  const LabeledScene scene = random_scene(2, 3, 6, 3, rng);
  Tape t;
  const double got = scene_loss(t, scene, model, 6.0).value()[0];

  Tape tf;
  const ForwardResult r = forward(tf, scene.input, model);
  const Tensor y = prediction_grid(r);
  const Tensor w = r.interactiveness.value();
  double l_ho = 0.0, l_w = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) l_ho += bce(y[k], scene.interactions[k]);
  for (std::size_t k = 0; k < w.size(); ++k) l_w += bce(w[k], scene.interactive[k]);
  CHECK(got == doctest::Approx(6.0 * l_ho / 18.0 + l_w / 6.0).epsilon(1e-13));

  ModelConfig base_cfg = small_config();
  base_cfg.use_intra = false;
  base_cfg.use_inter = false;
  const Model base = make_model(base_cfg, 21);
  Tape tb;
  const double base_loss = scene_loss(tb, scene, base, 6.0).value()[0];
  CHECK(base_loss == doctest::Approx(6.0 * interaction_loss(predict(scene.input, base), scene.interactions)).epsilon(1e-13));

  LabeledScene empty = random_scene(0, 2, 6, 3, rng);
  Tape te;
  CHECK(scene_loss(te, empty, model, 6.0).value()[0] == 0.0);
}

TEST_CASE("training is deterministic for a seed") {
  const auto data = generate_synthetic_scenes(small_synth(12, 5));
  TrainConfig cfg = small_train(2);
  cfg.seed = 3;
  const TrainResult a = train(data, cfg), b = train(data, cfg);
  REQUIRE(a.history.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) CHECK(a.history[e].mean_loss == b.history[e].mean_loss);
  for (std::size_t i = 0; i < a.model.params.count(); ++i) {
    CHECK(a.model.params.value_at(i).storage() == b.model.params.value_at(i).storage());
  }
  cfg.seed = 4;
  const TrainResult c = train(data, cfg);
  CHECK(c.history[1].mean_loss != a.history[1].mean_loss);
}

TEST_CASE("epoch history and hook") {
  const auto data = generate_synthetic_scenes(small_synth(1, 6));
  TrainConfig cfg = small_train(3);
  cfg.decay_every = 1;
  std::vector<std::size_t> seen;
  const TrainResult r = train(data, cfg, [&](const EpochReport& rep, const Model&, const std::mt19937_64&) {
    seen.push_back(rep.epoch);
  });
  CHECK(seen == std::vector<std::size_t>{0, 1, 2});
  REQUIRE(r.history.size() == 3);
  CHECK(r.history[2].learning_rate == doctest::Approx(0.001 * 0.36).epsilon(1e-15));
  for (const auto& h : r.history) CHECK(std::isfinite(h.mean_loss));
}

TEST_CASE("loss falls on a small synthetic set") {
  const auto data = generate_synthetic_scenes(small_synth(16, 7));
  TrainConfig cfg = small_train(30);
  cfg.lr0 = 0.01;
  cfg.momentum = 0.9;
  const TrainResult r = train(data, cfg);
  CHECK(r.history.back().mean_loss < 0.25 * r.history.front().mean_loss);
}

TEST_CASE("synthetic scenes are reproducible") {
  const auto a = generate_synthetic_scenes(small_synth(20, 9));
  const auto b = generate_synthetic_scenes(small_synth(20, 9));
  REQUIRE(a.size() == 20);
  for (std::size_t s = 0; s < a.size(); ++s) {
    CHECK(a[s].input.image_id == b[s].input.image_id);
    CHECK(a[s].interactions == b[s].interactions);
    REQUIRE(a[s].input.subjects.size() == b[s].input.subjects.size());
    for (std::size_t i = 0; i < a[s].input.subjects.size(); ++i) {
      CHECK(a[s].input.subjects[i].feature == b[s].input.subjects[i].feature);
    }
  }
  const auto c = generate_synthetic_scenes(small_synth(20, 10));
  CHECK(c[0].input.image_id != a[0].input.image_id);
}

TEST_CASE("synthetic labels follow the planted rule") {
  SynthConfig s = small_synth(300, 11);
  s.sigma = 0.0;
  const auto scenes = generate_synthetic_scenes(s);
  std::size_t positives = 0;
  for (const auto& scene : scenes) {
    const SceneInput& in = scene.input;
    const std::size_t n = in.subjects.size(), m = in.objects.size(), a_count = s.num_classes;
    CHECK(n >= s.min_subjects);
    CHECK(n <= s.max_subjects);
    CHECK(m >= s.min_objects);
    CHECK(m <= s.max_objects);
    for (const auto* list : {&in.subjects, &in.objects}) {
      for (const auto& inst : *list) {
        CHECK(inst.box.x1 >= 0.0);
        CHECK(inst.box.y1 >= 0.0);
        CHECK(inst.box.x2 <= s.image_width);
        CHECK(inst.box.y2 <= s.image_height);
        double norm = 0.0;
        for (double v : inst.feature) norm += v * v;
        // Noise-free features are either a unit template or hidden (all zero).
        CHECK((std::abs(norm - 1.0) < 1e-12 || (list == &in.subjects && norm == 0.0)));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t labels_of_subject = 0;
      for (std::size_t j = 0; j < m; ++j) {
        bool any = false;
        for (std::size_t a = 0; a < a_count; ++a) {
          if (scene.interactions[(i * m + j) * a_count + a] == 0.0) continue;
          any = true;
          ++labels_of_subject;
          ++positives;
          const Relation rel = class_relation(a);
          CHECK(relation_holds(rel, in.subjects[i].box, in.objects[j].box));
          // No object of the same type in the same relation is strictly closer.
          const auto centre_dist = [&](const BoundingBox& o) {
            const BoundingBox& h = in.subjects[i].box;
            return std::hypot((h.x1 + h.x2 - o.x1 - o.x2) / 2.0, (h.y1 + h.y2 - o.y1 - o.y2) / 2.0);
          };
          for (std::size_t k = 0; k < m; ++k) {
            if (k == j || !same_features(in.objects[k].feature, in.objects[j].feature)) continue;
            if (!relation_holds(rel, in.subjects[i].box, in.objects[k].box)) continue;
            CHECK(centre_dist(in.objects[k].box) >= centre_dist(in.objects[j].box));
          }
        }
        CHECK(scene.interactive[i * m + j] == (any ? 1.0 : 0.0));
      }
      CHECK(labels_of_subject <= 1);
    }
  }
  CHECK(positives > 100);
}

TEST_CASE("classes of one object type share object features") {
  SynthConfig s = small_synth(200, 12);
  s.sigma = 0.0;
  const auto scenes = generate_synthetic_scenes(s);
  std::vector<std::vector<double>> object_of(s.num_classes);
  for (const auto& scene : scenes) {
    const std::size_t m = scene.input.objects.size();
    for (std::size_t p = 0; p < scene.interactions.size(); ++p) {
      if (scene.interactions[p] == 0.0) continue;
      const std::size_t a = p % s.num_classes, j = (p / s.num_classes) % m;
      const auto& f = scene.input.objects[j].feature;
      if (object_of[a].empty()) object_of[a] = f;
      CHECK(object_of[a] == f);
    }
  }
  REQUIRE_FALSE(object_of[0].empty());
  REQUIRE_FALSE(object_of[1].empty());
  CHECK(object_of[0] == object_of[1]);
  CHECK(object_of[0] != object_of[2]);
}

TEST_CASE("synth spec parsing") {
  const SynthConfig s = parse_synth_spec("n=7,seed=3,sigma=0.25,a=6");
  CHECK(s.count == 7);
  CHECK(s.seed == 3);
  CHECK(s.sigma == 0.25);
  CHECK(s.num_classes == 6);
  CHECK_THROWS_AS(parse_synth_spec("bogus=1"), ConfigError);
  CHECK_THROWS_AS(parse_synth_spec("n=-1"), ConfigError);
  CHECK_THROWS_AS(parse_synth_spec("sigma=-0.5"), ConfigError);
}
