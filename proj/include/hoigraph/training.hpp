#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hoigraph/graph.hpp"
#include "hoigraph/model.hpp"
#include "hoigraph/scene.hpp"

namespace hoigraph {

struct TrainConfig {
  double lambda = 6.0;
  double lr0 = 0.001;
  double decay = 0.6;
  std::size_t decay_every = 10;
  std::size_t batch_size = 4;
  std::size_t epochs = 40;
  /// 0 gives plain SGD.
  double momentum = 0.0;
  std::uint64_t seed = 0;
  ModelConfig model;

  void validate() const;
};

/// Raised when a scene produces a non-finite loss; names the scene.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& scene_id, const std::string& detail)
      : std::runtime_error("non-finite loss on scene '" + scene_id + "': " + detail), scene_id_(scene_id) {}
  const std::string& scene_id() const { return scene_id_; }

 private:
  std::string scene_id_;
};

/// Mean binary cross-entropy of interactiveness over the N*M grid; zero when
/// there are no pairs. `w` holds N*M probabilities.
Var interactiveness_loss(Tape& tape, Var w, const Tensor& labels);
double interactiveness_loss(const Tensor& w, const Tensor& labels);

/// Mean binary cross-entropy over all N*M*A entries; zero when empty.
Var interaction_loss(Tape& tape, Var y, const Tensor& labels);
double interaction_loss(const Tensor& y, const Tensor& labels);

/// lambda * l_ho + l_w
Var total_loss(Var l_ho, Var l_w, double lambda);
double total_loss(double l_ho, double l_w, double lambda);

/// lr0 * decay^floor(epoch / decay_every)
double learning_rate(std::size_t epoch, const TrainConfig& cfg);

/// Full objective for one labelled scene. The interactiveness term is present
/// only when the model computes interactiveness weights.
Var scene_loss(Tape& tape, const LabeledScene& scene, const Model& model, double lambda);

struct EpochReport {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double mean_loss = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochReport> history;
};

/// Called after every epoch with the current model and shuffle generator.
using EpochHook = std::function<void(const EpochReport&, const Model&, const std::mt19937_64&)>;

/// Minibatch SGD: per batch, gradients of the mean per-scene loss, then
/// theta <- theta - lr * grad. Deterministic for a given seed.
TrainResult train(const std::vector<LabeledScene>& dataset, const TrainConfig& cfg, const EpochHook& hook = {});

/// Applies one SGD step to `model` using its accumulated gradients.
void sgd_step(ParamStore& params, std::vector<Tensor>& velocity, double lr, double momentum);

}  // namespace hoigraph
