#pragma once

#include "affect/models.hpp"
#include "affect/seeding.hpp"
#include "affect/tensor.hpp"
#include "affect/text_features.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace affect {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  EmbeddingStrategy strategy = EmbeddingStrategy::frozen;
  // Global gradient-norm clip; 0 disables. Diagnostics only.
  double clip_norm = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bias-corrected Adam moments for a fixed parameter list.
class AdamState {
 public:
  explicit AdamState(std::span<const Tensor> params);

  std::size_t timestep() const { return t_; }

  // θ ← θ − lr·m̂/(√v̂ + ε). A parameter without a gradient buffer is
  // treated as having a zero gradient. Non-finite gradients throw
  // TrainingError before any parameter is touched.
  void step(std::span<Tensor> params, const TrainConfig& config);

 private:
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // per-example mean squared error, per epoch
  std::size_t steps = 0;
};

// Minibatch Adam on mean squared error averaged over examples and targets.
// Batches are reshuffled every epoch from derive_seed(config.seed, epoch).
TrainResult train(NeuralModel& model, std::span<const EncodedText> inputs, const Eigen::MatrixXd& targets,
                  const TrainConfig& config);

// "epoch,loss" lines with a header.
void write_loss_trace(const TrainResult& result, const std::filesystem::path& path);

}  // namespace affect
