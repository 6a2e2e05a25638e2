#include "hoigraph/commands.hpp"

#include <CLI11.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "hoigraph/checkpoint.hpp"
#include "hoigraph/errors.hpp"
#include "hoigraph/evaluation.hpp"
#include "hoigraph/graph.hpp"
#include "hoigraph/io.hpp"
#include "hoigraph/synthetic.hpp"
#include "hoigraph/training.hpp"

namespace hoigraph {

namespace fs = std::filesystem;

namespace {

void setup_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("hoigraph");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::cfg::load_env_levels();  // SPDLOG_LEVEL=debug etc.
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::vector<LabeledScene> load_labeled(const std::vector<std::string>& paths, std::size_t f, std::size_t a) {
  std::vector<LabeledScene> out;
  for (const auto& p : paths) {
    for (auto& rec : load_scenes(p, f, a)) {
      if (!rec.labeled) throw ConfigError(p + ": scene '" + rec.scene.input.image_id + "' has no labels");
      out.push_back(std::move(rec.scene));
    }
  }
  return out;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::vector<std::string> data;
  std::string synth;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool no_intra = false, no_inter = false, no_intra_attention = false, no_w = false;
  std::string homogeneous;
  std::string out = "model.ckpt";
  std::string loss_csv = "loss_history.csv";
  std::size_t checkpoint_every = 0;
  bool echo_only = false;
};

TrainConfig resolve_train_config(const TrainArgs& args) {
  TrainConfig cfg = args.config_path.empty() ? TrainConfig{} : load_train_config(args.config_path);
  for (const auto& o : args.overrides) apply_config_text(o, cfg);
  if (args.epochs) cfg.epochs = *args.epochs;
  if (args.seed) cfg.seed = *args.seed;
  if (args.no_intra) cfg.model.use_intra = false;
  if (args.no_inter) cfg.model.use_inter = false;
  if (args.no_intra_attention) cfg.model.use_intra_attention = false;
  if (args.no_w) cfg.model.use_interactiveness_weight = false;
  if (!args.homogeneous.empty()) cfg.model.homogeneous = parse_homogeneous_mode(args.homogeneous);
  return cfg;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
  TrainConfig cfg = resolve_train_config(args);
  std::vector<LabeledScene> dataset;
  if (!args.synth.empty()) {
    SynthConfig base;
    base.num_classes = cfg.model.num_classes;
    base.feature_dim = cfg.model.feature_dim;
    const SynthConfig sc = parse_synth_spec(args.synth, base);
    cfg.model.num_classes = sc.num_classes;
    cfg.model.feature_dim = sc.feature_dim;
    dataset = generate_synthetic_scenes(sc);
  }
  cfg.validate();
  out << config_echo(cfg) << "variant = " << cfg.model.variant() << "\n";
  if (args.echo_only) return 0;

  auto from_files = load_labeled(args.data, cfg.model.feature_dim, cfg.model.num_classes);
  dataset.insert(dataset.end(), std::make_move_iterator(from_files.begin()), std::make_move_iterator(from_files.end()));
  if (dataset.empty()) throw ConfigError("train: no scenes (use --data or --synth)");
  spdlog::info("training {} on {} scenes for {} epochs", cfg.model.variant(), dataset.size(), cfg.epochs);

  const auto hook = [&](const EpochReport& r, const Model& model, const std::mt19937_64& rng) {
    spdlog::info("epoch {:3d}  lr {:.6g}  loss {:.6f}", r.epoch, r.learning_rate, r.mean_loss);
    if (args.checkpoint_every > 0 && (r.epoch + 1) % args.checkpoint_every == 0) {
      save_checkpoint(args.out, Checkpoint{cfg, model, r.epoch + 1, rng_text(rng)});
    }
  };
  const TrainResult result = train(dataset, cfg, hook);

  std::string csv = "epoch,learning_rate,mean_loss\n";
  for (const auto& r : result.history) {
    char line[128];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", r.epoch, r.learning_rate, r.mean_loss);
    csv += line;
  }
  if (!args.loss_csv.empty()) write_text_file(args.loss_csv, csv);
  save_checkpoint(args.out, Checkpoint{cfg, result.model, cfg.epochs, ""});
  out << "wrote " << args.out << " (variant " << cfg.model.variant() << ")\n";
  return 0;
}

// ---- predict ------------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::vector<std::string> scenes;
  std::string out = "predictions.json";
  double score_floor = 0.0;
  std::string debug_dump;
  std::string dump_maps;
};

int cmd_predict(const PredictArgs& args, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(args.model);
  const Model& model = ckpt.model;
  std::vector<PredictionRecord> records;
  json dump = json::array();
  if (!args.dump_maps.empty()) fs::create_directories(args.dump_maps);
  for (const auto& path : args.scenes) {
    for (const auto& rec : load_scenes(path, 0, 0)) {
      const SceneInput& scene = rec.scene.input;
      validate_scene(scene, model.config.feature_dim);
      const Tensor y = predict(scene, model);
      const Tensor scores = detection_scores(y, scene);
      const std::size_t n = scene.subjects.size(), m = scene.objects.size(), a = model.config.num_classes;
      json pairs = json::array();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          std::vector<double> row(y.data() + (i * m + j) * a, y.data() + (i * m + j + 1) * a);
          pairs.push_back({{"subject", i},
                           {"object", j},
                           {"y", row},
                           {"s_h", scene.subjects[i].confidence},
                           {"s_o", scene.objects[j].confidence}});
          for (std::size_t c = 0; c < a; ++c) {
            const double score = scores[(i * m + j) * a + c];
            if (score < args.score_floor) continue;
            records.push_back({{scene.image_id, scene.subjects[i].box, scene.objects[j].box, c, score}, i, j});
          }
          if (!args.dump_maps.empty()) {
            const fs::path file = fs::path(args.dump_maps) /
                                  (scene.image_id + "_" + std::to_string(i) + "_" + std::to_string(j) + ".pgm");
            write_text_file(file, spatial_map_pgm(build_spatial_map(scene.subjects[i].box, scene.objects[j].box)));
          }
        }
      }
      dump.push_back({{"image_id", scene.image_id}, {"pairs", std::move(pairs)}});
    }
  }
  write_text_file(args.out, predictions_to_json(records).dump(1) + "\n");
  if (!args.debug_dump.empty()) write_text_file(args.debug_dump, dump.dump(1) + "\n");
  out << "wrote " << records.size() << " predictions to " << args.out << "\n";
  return 0;
}

// ---- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string predictions;
  std::string ground_truth;
  double iou = 0.5;
  bool split = false;
  std::string known_object;
  std::string report;
};

GroundTruthSet read_ground_truth(const std::string& path) {
  const json doc = read_json_file(path);
  if (doc.is_object() && doc.contains("annotations")) return ground_truth_from_json(doc);
  // Otherwise a labelled scene file.
  std::vector<LabeledScene> scenes;
  for (auto& rec : load_scenes(path)) {
    if (!rec.labeled) throw ConfigError(path + ": scene '" + rec.scene.input.image_id + "' has no labels");
    scenes.push_back(std::move(rec.scene));
  }
  return ground_truth_of(scenes);
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const auto preds = predictions_from_json(read_json_file(args.predictions));
  const GroundTruthSet gt = read_ground_truth(args.ground_truth);
  EvalOptions options;
  options.iou_threshold = args.iou;
  options.known_object = gt.known_object;
  if (!args.known_object.empty()) options.known_object = known_object_from_json(read_json_file(args.known_object));
  const EvalReport report = args.split ? evaluate_with_complexity_split(preds, gt.annotations, gt.images, options)
                                       : evaluate_map(preds, gt.annotations, options);
  out << report_table(report);
  if (!args.report.empty()) write_text_file(args.report, report_to_json(report).dump(2) + "\n");
  return 0;
}

// ---- gradcheck ----------------------------------------------------------------

int cmd_gradcheck(const GradCheckSetup& setup, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const GradCheckReport report = run_gradcheck(setup);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char line[256];
  std::snprintf(line, sizeof line, "checked %zu entries, max relative error %.3e (%s[%zu]), %.2f s\n", report.checked,
                report.max_relative_error, report.worst_param.c_str(), report.worst_index, seconds);
  out << line;
  for (const auto& s : report.skipped) {
    std::snprintf(line, sizeof line, "  skipped kink: %s[%zu] analytic %.6e numeric %.6e\n", s.param.c_str(), s.index,
                  s.analytic, s.numeric);
    out << line;
  }
  for (const auto& s : report.non_finite) out << "  non-finite loss at " << s.param << "[" << s.index << "]\n";
  const bool ok = report.max_relative_error < setup.tolerance && report.non_finite.empty();
  if (!ok) {
    out << "FAILED: worst parameters\n";
    for (const auto& p : report.per_param) {
      if (p.max_relative_error >= setup.tolerance) {
        std::snprintf(line, sizeof line, "  %-28s %.3e at %zu\n", p.param.c_str(), p.max_relative_error, p.worst_index);
        out << line;
      }
    }
  }
  return ok ? 0 : 1;
}

// ---- synth --------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::string out = "scenes.json";
  std::string ground_truth;
  bool unlabeled = false;
};

int cmd_synth(const SynthArgs& args, std::ostream& out) {
  const SynthConfig cfg = parse_synth_spec(args.spec);
  const auto scenes = generate_synthetic_scenes(cfg);
  save_scenes(args.out, scenes, !args.unlabeled);
  if (!args.ground_truth.empty()) write_text_file(args.ground_truth, ground_truth_to_json(ground_truth_of(scenes)).dump(1) + "\n");
  out << "wrote " << scenes.size() << " scenes to " << args.out << "\n";
  return 0;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckSetup& setup) {
  ModelConfig mc;
  mc.hidden_dim = setup.hidden_dim;
  mc.feature_dim = setup.feature_dim;
  mc.num_classes = setup.num_classes;
  mc.iterations = setup.iterations;
  mc.spatial_channels = setup.spatial_channels;
  mc.validate();
  std::mt19937_64 rng(setup.seed);
  Model model = make_model(mc, rng());
  const LabeledScene scene = random_scene(setup.num_subjects, setup.num_objects, setup.feature_dim, setup.num_classes, rng);
  const double lambda = TrainConfig{}.lambda;
  const LossBuilder loss = [&](Tape& tape, const ParamStore&) { return scene_loss(tape, scene, model, lambda); };
  return finite_difference_check(loss, model.params, {setup.eps, setup.tolerance});
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  setup_logging();
  CLI::App app{"Contextual heterogeneous graph network for human-object interaction detection", "hoigraph"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--config", train_args.config_path, "key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--set", train_args.overrides, "Override one config key (key=value)");
  train_cmd->add_option("--data", train_args.data, "Labelled scene files")->check(CLI::ExistingFile);
  train_cmd->add_option("--synth", train_args.synth, "Synthetic data spec, e.g. n=200,seed=1");
  train_cmd->add_option("--epochs", train_args.epochs, "Number of epochs");
  train_cmd->add_option("--seed", train_args.seed, "Initialisation and shuffle seed");
  train_cmd->add_flag("--no-intra", train_args.no_intra, "Disable intra-class messages");
  train_cmd->add_flag("--no-inter", train_args.no_inter, "Disable inter-class messages");
  train_cmd->add_flag("--no-intra-attention", train_args.no_intra_attention, "Uniform intra-class weights");
  train_cmd->add_flag("--no-w", train_args.no_w, "Drop interactiveness weights and their loss");
  train_cmd->add_option("--homogeneous", train_args.homogeneous, "Homogeneous graph: intra or inter")
      ->check(CLI::IsMember({"intra", "inter"}));
  train_cmd->add_option("--out", train_args.out, "Checkpoint path")->capture_default_str();
  train_cmd->add_option("--loss-csv", train_args.loss_csv, "Loss history CSV path")->capture_default_str();
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every, "Also checkpoint every k epochs");
  train_cmd->add_flag("--echo-config", train_args.echo_only, "Print the resolved config and exit");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Score every pair and class of the given scenes");
  predict_cmd->add_option("--model", predict_args.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--scenes", predict_args.scenes, "Scene files")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", predict_args.out, "Prediction JSON path")->capture_default_str();
  predict_cmd->add_option("--score-floor", predict_args.score_floor, "Drop scores below this")->capture_default_str();
  predict_cmd->add_option("--debug-dump", predict_args.debug_dump, "Write per-pair y, s_h and s_o as JSON");
  predict_cmd->add_option("--dump-maps", predict_args.dump_maps, "Directory for spatial-map PGM images");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Role mAP of predictions against ground truth");
  eval_cmd->add_option("--predictions", eval_args.predictions, "Prediction JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--ground-truth", eval_args.ground_truth, "Ground-truth JSON or labelled scene file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--iou", eval_args.iou, "IoU threshold (strict)")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_flag("--split-complexity", eval_args.split, "Add complex and simple sub-reports");
  eval_cmd->add_option("--known-object", eval_args.known_object, "Per-class candidate image filter; overrides one in the ground truth")->check(CLI::ExistingFile);
  eval_cmd->add_option("--report", eval_args.report, "Also write the report as JSON");

  GradCheckSetup gc;
  std::vector<std::size_t> channels;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare backward gradients with central differences");
  grad_cmd->add_option("--eps", gc.eps, "Perturbation size")->capture_default_str();
  grad_cmd->add_option("--seed", gc.seed, "Scene and parameter seed")->capture_default_str();
  grad_cmd->add_option("--d", gc.hidden_dim, "Hidden dimension D")->capture_default_str();
  grad_cmd->add_option("--n", gc.num_subjects, "Subjects")->capture_default_str();
  grad_cmd->add_option("--m", gc.num_objects, "Objects")->capture_default_str();
  grad_cmd->add_option("--a", gc.num_classes, "Action classes")->capture_default_str();
  grad_cmd->add_option("--f", gc.feature_dim, "Raw feature length")->capture_default_str();
  grad_cmd->add_option("--t", gc.iterations, "Reasoning rounds")->capture_default_str();
  grad_cmd->add_option("--channels", channels, "Encoder widths, three values")->expected(3)->delimiter(',');
  grad_cmd->add_option("--tolerance", gc.tolerance, "Pass threshold")->capture_default_str();

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Write planted-rule synthetic scenes");
  synth_cmd->add_option("--spec", synth_args.spec, "Generator spec, e.g. n=200,seed=1,sigma=0.1");
  synth_cmd->add_option("--out", synth_args.out, "Scene file")->capture_default_str();
  synth_cmd->add_option("--ground-truth", synth_args.ground_truth, "Also write ground-truth JSON");
  synth_cmd->add_flag("--unlabeled", synth_args.unlabeled, "Omit labels");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*predict_cmd) return cmd_predict(predict_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*grad_cmd) {
      if (!channels.empty()) std::copy(channels.begin(), channels.end(), gc.spatial_channels.begin());
      return cmd_gradcheck(gc, out);
    }
    if (*synth_cmd) return cmd_synth(synth_args, out);
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace hoigraph
