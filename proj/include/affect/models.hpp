#pragma once

#include "affect/embeddings.hpp"
#include "affect/tensor.hpp"
#include "affect/text_features.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace affect {

enum class ModelKind { ridge_ngram, ridge_bv, ffn, cnn, gru, lstm, cnn_lstm };
enum class EmbeddingStrategy { frozen, tuned, learned };

std::string_view to_string(ModelKind kind);
std::string_view to_string(EmbeddingStrategy strategy);
std::optional<ModelKind> parse_model_kind(std::string_view name);
std::optional<EmbeddingStrategy> parse_strategy(std::string_view name);
bool is_neural(ModelKind kind);

// Architecture sizes. Defaults are the fixed settings used for every corpus;
// tests shrink them for gradient checks.
struct Hyperparameters {
  std::size_t ffn_hidden1 = 256;
  std::size_t ffn_hidden2 = 128;
  std::size_t conv_channels = 128;
  std::size_t recurrent_units = 128;
  std::size_t dense_units = 128;
  std::size_t pool_size = 2;
  std::size_t pool_stride = 1;
  double embedding_dropout = 0.2;
  double dense_dropout = 0.5;

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

struct ModelSpec {
  ModelKind kind = ModelKind::gru;
  std::size_t input_dim = 0;  // embedding dim (neural, ridge_bv) or n-gram count
  std::size_t n_targets = 1;
  Hyperparameters hyper;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Dense layer x·W + b.
struct DenseWeights {
  Tensor w;  // in × out
  Tensor b;  // out
};

// Gates ordered [update | reset | candidate].
struct GruWeights {
  Tensor w;     // D × 3H
  Tensor u_zr;  // H × 2H, recurrent weights of update and reset gates
  Tensor u_h;   // H × H, recurrent weights of the candidate
  Tensor b;     // 3H
};

// Gates ordered [input | forget | cell | output].
struct LstmWeights {
  Tensor w;  // D × 4H
  Tensor u;  // H × 4H
  Tensor b;  // 4H
};

struct LstmState {
  Tensor h;
  Tensor c;
};

Tensor dense(Tape& tape, const Tensor& x, const DenseWeights& layer);

// One GRU step from x[1×D] and h[1×H]:
//   z = σ(xWz + hUz + bz), r = σ(xWr + hUr + br)
//   n = tanh(xWn + (r⊙h)Un + bn), h' = z⊙h + (1−z)⊙n
Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const GruWeights& w);
// One LSTM step: i, f, o = σ(·), g = tanh(·), c' = f⊙c + i⊙g, h' = o⊙tanh(c').
LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& state, const LstmWeights& w);

// Hidden state after the last row of seq[T×D], starting from zeros.
Tensor gru_last_state(Tape& tape, const Tensor& seq, const GruWeights& w);
Tensor lstm_last_state(Tape& tape, const Tensor& seq, const LstmWeights& w);

class NeuralModel {
 public:
  const ModelSpec& spec() const { return spec_; }
  EmbeddingStrategy strategy() const { return strategy_; }
  std::uint64_t seed() const { return seed_; }

  // Layer parameters, excluding the embedding matrix.
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  // Everything the optimizer updates: layer parameters, plus the embedding
  // matrix unless the strategy is frozen.
  std::vector<Tensor> trainable();

  const Tensor& embedding() const { return embedding_; }

  // predictions[B × n_targets]. Eval mode never touches rng.
  Tensor forward(Tape& tape, std::span<const EncodedText> batch, Mode mode, Rng& rng) const;

 private:
  friend NeuralModel build_model(const ModelSpec&, const EmbeddingTable&, EmbeddingStrategy, std::uint64_t);
  friend NeuralModel load_model(const std::filesystem::path&, const EmbeddingTable&);

  Tensor encode_example(Tape& tape, const EncodedText& text, Mode mode, Rng& rng) const;
  Tensor& param(std::string_view name);
  const Tensor& param(std::string_view name) const;

  ModelSpec spec_;
  EmbeddingStrategy strategy_ = EmbeddingStrategy::frozen;
  std::uint64_t seed_ = 0;
  Tensor embedding_;
  std::vector<NamedTensor> params_;
};

// Glorot-uniform weights, zero biases. The embedding matrix is copied from
// `table` and becomes trainable for the tuned and learned strategies (row 0
// stays zero).
NeuralModel build_model(const ModelSpec& spec, const EmbeddingTable& table, EmbeddingStrategy strategy,
                        std::uint64_t seed);

// Eval-mode predictions in batches, as an n × n_targets matrix.
Eigen::MatrixXd predict(const NeuralModel& model, std::span<const EncodedText> inputs, std::size_t batch = 64);

// Writes <prefix>.bin (little-endian float64 parameters, manifest order) and
// <prefix>.json (kind, dims, seed, strategy, parameter layout). The
// embedding matrix is included only when it is trainable.
void save_model(const NeuralModel& model, const std::filesystem::path& prefix);
NeuralModel load_model(const std::filesystem::path& prefix, const EmbeddingTable& table);

}  // namespace affect
