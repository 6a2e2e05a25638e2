#include "hoigraph/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hoigraph/errors.hpp"

namespace hoigraph {

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay must lie in (0, 1]");
  if (decay_every == 0) throw ConfigError("decay_every must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  model.validate();
}

Var interactiveness_loss(Tape& tape, Var w, const Tensor& labels) {
  if (labels.empty()) return tape.constant(Tensor::scalar(0.0));
  return ad::binary_cross_entropy(w, labels);
}

double interactiveness_loss(const Tensor& w, const Tensor& labels) {
  Tape tape;
  return interactiveness_loss(tape, tape.constant(w), labels).value()[0];
}

Var interaction_loss(Tape& tape, Var y, const Tensor& labels) {
  if (labels.empty()) return tape.constant(Tensor::scalar(0.0));
  return ad::binary_cross_entropy(y, labels);
}

double interaction_loss(const Tensor& y, const Tensor& labels) {
  Tape tape;
  return interaction_loss(tape, tape.constant(y), labels).value()[0];
}

Var total_loss(Var l_ho, Var l_w, double lambda) { return ad::add(ad::scale(l_ho, lambda), l_w); }

double total_loss(double l_ho, double l_w, double lambda) { return lambda * l_ho + l_w; }

double learning_rate(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

Var scene_loss(Tape& tape, const LabeledScene& scene, const Model& model, double lambda) {
  const ForwardResult out = forward(tape, scene.input, model);
  if (!out.predictions.valid()) return tape.constant(Tensor::scalar(0.0));
  const Var l_ho = interaction_loss(tape, out.predictions, scene.interactions);
  if (!out.interactiveness.valid()) return ad::scale(l_ho, lambda);
  const Var l_w = interactiveness_loss(tape, out.interactiveness, scene.interactive);
  return total_loss(l_ho, l_w, lambda);
}

void sgd_step(ParamStore& params, std::vector<Tensor>& velocity, double lr, double momentum) {
  if (velocity.size() != params.count()) {
    velocity.clear();
    for (std::size_t i = 0; i < params.count(); ++i) velocity.emplace_back(params.value_at(i).shape());
  }
  for (std::size_t i = 0; i < params.count(); ++i) {
    Tensor& value = params.value_at(i);
    const Tensor& grad = params.grad_at(i);
    Tensor& vel = velocity[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      vel[k] = momentum * vel[k] + grad[k];
      value[k] -= lr * vel[k];
    }
  }
}

TrainResult train(const std::vector<LabeledScene>& dataset, const TrainConfig& cfg, const EpochHook& hook) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  for (const auto& scene : dataset) validate_labeled_scene(scene, cfg.model.feature_dim, cfg.model.num_classes);

  TrainResult result{make_model(cfg.model, cfg.seed), {}};
  Model& model = result.model;
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Tensor> velocity;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(epoch, cfg);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double share = 1.0 / static_cast<double>(stop - start);
      model.params.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const LabeledScene& scene = dataset[order[k]];
        Tape tape;
        Var loss;
        try {
          loss = ad::scale(scene_loss(tape, scene, model, cfg.lambda), share);
        } catch (const DomainError& e) {
          throw TrainingError(scene.input.image_id, e.what());
        }
        if (!std::isfinite(loss.value()[0])) throw TrainingError(scene.input.image_id, "loss is not finite");
        backward(tape, loss, model.params);
        batch_loss += loss.value()[0];
      }
      sgd_step(model.params, velocity, lr, cfg.momentum);
      epoch_loss += batch_loss;
      ++batches;
    }
    EpochReport report{epoch, lr, epoch_loss / static_cast<double>(batches)};
    result.history.push_back(report);
    if (hook) hook(report, model, shuffle_rng);
  }
  return result;
}

}  // namespace hoigraph
