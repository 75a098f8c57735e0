#include "affect/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <string>

namespace affect {

namespace {

constexpr std::uint64_t kDropoutStream = 0x64726f706f7574ULL;

}  // namespace

AdamState::AdamState(std::span<const Tensor> params) {
  for (const auto& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamState::step(std::span<Tensor> params, const TrainConfig& config) {
  if (params.size() != m_.size()) throw std::invalid_argument("adam: parameter list changed size");
  double norm2 = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != m_[k].size()) throw std::invalid_argument("adam: parameter shape changed");
    if (!params[k].has_grad()) continue;
    for (double g : params[k].grad()) {
      if (!std::isfinite(g)) {
        throw TrainingError("non-finite gradient in parameter " + std::to_string(k) + " " +
                            shape_string(params[k].shape()) + " at step " + std::to_string(t_ + 1));
      }
      norm2 += g * g;
    }
  }
  double clip = 1.0;
  if (config.clip_norm > 0.0 && norm2 > config.clip_norm * config.clip_norm) clip = config.clip_norm / std::sqrt(norm2);

  ++t_;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, double(t_));
  const double c2 = 1.0 - std::pow(b2, double(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].data();
    auto grad = params[k].grad();
    const bool has = !grad.empty();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = has ? grad[i] * clip : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

TrainResult train(NeuralModel& model, std::span<const EncodedText> inputs, const Eigen::MatrixXd& targets,
                  const TrainConfig& config) {
  const std::size_t n = inputs.size(), t = model.spec().n_targets;
  if (n == 0) throw std::invalid_argument("train: empty training split");
  if (std::size_t(targets.rows()) != n || std::size_t(targets.cols()) != t) {
    throw DimensionError("train: targets are " + std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()) +
                         ", expected " + std::to_string(n) + "x" + std::to_string(t));
  }
  if (config.epochs < 1 || config.batch_size < 1) throw std::invalid_argument("train: epochs and batch size must be >= 1");

  std::vector<Tensor> params = model.trainable();
  AdamState adam(params);
  TrainResult result;
  std::vector<std::size_t> order(n);
  std::vector<EncodedText> batch_inputs;
  Tape tape;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng dropout_rng(derive_seed(config.seed ^ kDropoutStream, epoch));

    double epoch_sse = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - start);
      batch_inputs.clear();
      std::vector<double> target_data;
      target_data.reserve(len * t);
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t idx = order[start + i];
        batch_inputs.push_back(inputs[idx]);
        for (std::size_t j = 0; j < t; ++j) target_data.push_back(targets(Eigen::Index(idx), Eigen::Index(j)));
      }
      Tensor target = Tensor::from({len, t}, std::move(target_data));

      for (auto& p : params) p.zero_grad();
      Tensor pred = model.forward(tape, batch_inputs, Mode::train, dropout_rng);
      Tensor loss = mse_loss(tape, pred, target);
      tape.backward(loss);
      adam.step(params, config);
      ++result.steps;
      epoch_sse += loss.item() * double(len);
    }
    const double epoch_loss = epoch_sse / double(n);
    if (!std::isfinite(epoch_loss)) throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch + 1));
    result.epoch_loss.push_back(epoch_loss);
  }
  return result;
}

void write_loss_trace(const TrainResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss trace " + path.string());
  out << "epoch,loss\n" << std::setprecision(6);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) out << (e + 1) << ',' << result.epoch_loss[e] << '\n';
}

}  // namespace affect
