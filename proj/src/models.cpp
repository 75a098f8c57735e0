#include "affect/models.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace affect {

namespace {

constexpr std::pair<ModelKind, std::string_view> kKindNames[] = {
    {ModelKind::ridge_ngram, "ridge_ngram"}, {ModelKind::ridge_bv, "ridge_bv"}, {ModelKind::ffn, "ffn"},
    {ModelKind::cnn, "cnn"},                 {ModelKind::gru, "gru"},           {ModelKind::lstm, "lstm"},
    {ModelKind::cnn_lstm, "cnn_lstm"},
};

constexpr std::pair<EmbeddingStrategy, std::string_view> kStrategyNames[] = {
    {EmbeddingStrategy::frozen, "frozen"},
    {EmbeddingStrategy::tuned, "tuned"},
    {EmbeddingStrategy::learned, "learned"},
};

Tensor glorot(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> unit(-limit, limit);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.data()) v = unit(rng);
  return t;
}

Tensor glorot(Rng& rng, std::size_t in, std::size_t out) { return glorot(rng, {in, out}, in, out); }
Tensor zero_bias(std::size_t n) { return Tensor::zeros({n}, true); }

Tensor gru_step(Tape& tape, const Tensor& xz, const Tensor& xr, const Tensor& xn, const Tensor& h,
                const GruWeights& w) {
  const std::size_t H = w.u_h.rows();
  Tensor hzr = matmul(tape, h, w.u_zr);
  Tensor z = activation(tape, Activation::sigmoid, add(tape, xz, slice_cols(tape, hzr, 0, H)));
  Tensor r = activation(tape, Activation::sigmoid, add(tape, xr, slice_cols(tape, hzr, H, 2 * H)));
  Tensor n = activation(tape, Activation::tanh, add(tape, xn, matmul(tape, mul(tape, r, h), w.u_h)));
  return add(tape, mul(tape, z, h), mul(tape, one_minus(tape, z), n));
}

LstmState lstm_step(Tape& tape, const Tensor (&x)[4], const LstmState& s, const LstmWeights& w) {
  const std::size_t H = w.u.rows();
  Tensor hu = matmul(tape, s.h, w.u);
  auto gate = [&](std::size_t k, Activation act) {
    return activation(tape, act, add(tape, x[k], slice_cols(tape, hu, k * H, (k + 1) * H)));
  };
  Tensor i = gate(0, Activation::sigmoid);
  Tensor f = gate(1, Activation::sigmoid);
  Tensor g = gate(2, Activation::tanh);
  Tensor o = gate(3, Activation::sigmoid);
  Tensor c = add(tape, mul(tape, f, s.c), mul(tape, i, g));
  Tensor h = mul(tape, o, activation(tape, Activation::tanh, c));
  return {h, c};
}

void write_le_doubles(std::ostream& out, std::span<const double> values) {
  std::vector<unsigned char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + std::size_t(b)] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
}

void read_le_doubles(std::istream& in, std::span<double> values) {
  std::vector<unsigned char> buf(values.size() * 8);
  if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()))) {
    throw std::runtime_error("model blob is truncated");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t(buf[i * 8 + std::size_t(b)]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  for (auto [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

std::string_view to_string(EmbeddingStrategy strategy) {
  for (auto [s, name] : kStrategyNames)
    if (s == strategy) return name;
  return "unknown";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  for (auto [k, n] : kKindNames)
    if (n == name) return k;
  if (name == "cnn-lstm") return ModelKind::cnn_lstm;
  return std::nullopt;
}

std::optional<EmbeddingStrategy> parse_strategy(std::string_view name) {
  for (auto [s, n] : kStrategyNames)
    if (n == name) return s;
  return std::nullopt;
}

bool is_neural(ModelKind kind) { return kind != ModelKind::ridge_ngram && kind != ModelKind::ridge_bv; }

Tensor dense(Tape& tape, const Tensor& x, const DenseWeights& layer) {
  return add_bias(tape, matmul(tape, x, layer.w), layer.b);
}

Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const GruWeights& w) {
  const std::size_t H = w.u_h.rows();
  Tensor xp = add_bias(tape, matmul(tape, x, w.w), w.b);
  return gru_step(tape, slice_cols(tape, xp, 0, H), slice_cols(tape, xp, H, 2 * H), slice_cols(tape, xp, 2 * H, 3 * H),
                  h, w);
}

LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& state, const LstmWeights& w) {
  const std::size_t H = w.u.rows();
  Tensor xp = add_bias(tape, matmul(tape, x, w.w), w.b);
  const Tensor parts[4] = {slice_cols(tape, xp, 0, H), slice_cols(tape, xp, H, 2 * H),
                           slice_cols(tape, xp, 2 * H, 3 * H), slice_cols(tape, xp, 3 * H, 4 * H)};
  return lstm_step(tape, parts, state, w);
}

Tensor gru_last_state(Tape& tape, const Tensor& seq, const GruWeights& w) {
  const std::size_t H = w.u_h.rows();
  Tensor xp = add_bias(tape, matmul(tape, seq, w.w), w.b);
  Tensor xz = slice_cols(tape, xp, 0, H);
  Tensor xr = slice_cols(tape, xp, H, 2 * H);
  Tensor xn = slice_cols(tape, xp, 2 * H, 3 * H);
  Tensor h = Tensor::zeros({1, H});
  for (std::size_t t = 0; t < seq.rows(); ++t) {
    h = gru_step(tape, select_row(tape, xz, t), select_row(tape, xr, t), select_row(tape, xn, t), h, w);
  }
  return h;
}

Tensor lstm_last_state(Tape& tape, const Tensor& seq, const LstmWeights& w) {
  const std::size_t H = w.u.rows();
  Tensor xp = add_bias(tape, matmul(tape, seq, w.w), w.b);
  Tensor gates[4];
  for (std::size_t k = 0; k < 4; ++k) gates[k] = slice_cols(tape, xp, k * H, (k + 1) * H);
  LstmState s{Tensor::zeros({1, H}), Tensor::zeros({1, H})};
  for (std::size_t t = 0; t < seq.rows(); ++t) {
    const Tensor row[4] = {select_row(tape, gates[0], t), select_row(tape, gates[1], t), select_row(tape, gates[2], t),
                           select_row(tape, gates[3], t)};
    s = lstm_step(tape, row, s, w);
  }
  return s.h;
}

std::size_t NeuralModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<Tensor> NeuralModel::trainable() {
  std::vector<Tensor> out;
  for (const auto& p : params_) out.push_back(p.value);
  if (strategy_ != EmbeddingStrategy::frozen) out.push_back(embedding_);
  return out;
}

Tensor& NeuralModel::param(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p.value;
  throw std::out_of_range("model has no parameter '" + std::string(name) + "'");
}

const Tensor& NeuralModel::param(std::string_view name) const {
  return const_cast<NeuralModel*>(this)->param(name);
}

Tensor NeuralModel::encode_example(Tape& tape, const EncodedText& text, Mode mode, Rng& rng) const {
  const auto& hp = spec_.hyper;
  auto ids = text.valid();
  switch (spec_.kind) {
    case ModelKind::ffn: {
      std::vector<std::int32_t> known;
      for (auto id : ids)
        if (id != 0) known.push_back(id);
      if (known.empty()) known.push_back(0);
      return mean_rows(tape, gather_rows(tape, embedding_, known));
    }
    case ModelKind::cnn: {
      Tensor x = dropout(tape, gather_rows(tape, embedding_, ids), hp.embedding_dropout, mode, rng);
      Tensor c = activation(tape, Activation::relu, conv1d_same(tape, x, param("conv.w"), param("conv.b")));
      return global_max_pool(tape, c);
    }
    case ModelKind::gru: {
      Tensor x = dropout(tape, gather_rows(tape, embedding_, ids), hp.embedding_dropout, mode, rng);
      return gru_last_state(tape, x, {param("gru.w"), param("gru.u_zr"), param("gru.u_h"), param("gru.b")});
    }
    case ModelKind::lstm: {
      Tensor x = dropout(tape, gather_rows(tape, embedding_, ids), hp.embedding_dropout, mode, rng);
      return lstm_last_state(tape, x, {param("lstm.w"), param("lstm.u"), param("lstm.b")});
    }
    case ModelKind::cnn_lstm: {
      // Sequences shorter than the pool window are extended with pad frames.
      std::vector<std::int32_t> padded(ids.begin(), ids.end());
      if (padded.size() < hp.pool_size) padded.resize(hp.pool_size, 0);
      Tensor x = dropout(tape, gather_rows(tape, embedding_, padded), hp.embedding_dropout, mode, rng);
      Tensor c = activation(tape, Activation::relu, conv1d_same(tape, x, param("conv.w"), param("conv.b")));
      Tensor p = dropout(tape, max_pool_time(tape, c, hp.pool_size, hp.pool_stride), hp.dense_dropout, mode, rng);
      return lstm_last_state(tape, p, {param("lstm.w"), param("lstm.u"), param("lstm.b")});
    }
    default:
      throw std::invalid_argument("not a neural model kind: " + std::string(to_string(spec_.kind)));
  }
}

Tensor NeuralModel::forward(Tape& tape, std::span<const EncodedText> batch, Mode mode, Rng& rng) const {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  const auto& hp = spec_.hyper;
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (const auto& text : batch) rows.push_back(encode_example(tape, text, mode, rng));
  Tensor h = stack_rows(tape, rows);

  auto hidden = [&](const Tensor& x, std::string_view layer) {
    const std::string name(layer);
    Tensor y = dense(tape, x, {param(name + ".w"), param(name + ".b")});
    return dropout(tape, activation(tape, Activation::relu, y), hp.dense_dropout, mode, rng);
  };
  if (spec_.kind == ModelKind::ffn) {
    h = hidden(h, "ffn1");
    h = hidden(h, "ffn2");
  } else {
    h = dropout(tape, h, hp.dense_dropout, mode, rng);
    h = hidden(h, "dense");
  }
  return dense(tape, h, {param("head.w"), param("head.b")});
}

NeuralModel build_model(const ModelSpec& spec, const EmbeddingTable& table, EmbeddingStrategy strategy,
                        std::uint64_t seed) {
  if (!is_neural(spec.kind)) {
    throw std::invalid_argument("build_model: " + std::string(to_string(spec.kind)) + " is not a neural model kind");
  }
  if (spec.input_dim != table.dim()) {
    throw DimensionError("build_model: spec input_dim " + std::to_string(spec.input_dim) +
                         " does not match embedding dim " + std::to_string(table.dim()));
  }
  if (spec.n_targets < 1) throw std::invalid_argument("build_model: n_targets must be >= 1");

  NeuralModel m;
  m.spec_ = spec;
  m.strategy_ = strategy;
  m.seed_ = seed;
  m.embedding_ = Tensor::from({table.rows(), table.dim()},
                              std::vector<double>(table.matrix().begin(), table.matrix().end()),
                              strategy != EmbeddingStrategy::frozen);

  const auto& hp = spec.hyper;
  const std::size_t D = spec.input_dim;
  Rng rng(seed);
  auto add = [&](std::string name, Tensor t) { m.params_.push_back({std::move(name), std::move(t)}); };
  auto add_dense = [&](const std::string& name, std::size_t in, std::size_t out) {
    add(name + ".w", glorot(rng, in, out));
    add(name + ".b", zero_bias(out));
  };
  auto add_conv = [&] {
    add("conv.w", glorot(rng, {3, D, hp.conv_channels}, 3 * D, 3 * hp.conv_channels));
    add("conv.b", zero_bias(hp.conv_channels));
  };
  auto add_lstm = [&](std::size_t in) {
    const std::size_t H = hp.recurrent_units;
    add("lstm.w", glorot(rng, in, 4 * H));
    add("lstm.u", glorot(rng, H, 4 * H));
    add("lstm.b", zero_bias(4 * H));
  };

  std::size_t features = 0;
  switch (spec.kind) {
    case ModelKind::ffn:
      add_dense("ffn1", D, hp.ffn_hidden1);
      add_dense("ffn2", hp.ffn_hidden1, hp.ffn_hidden2);
      features = hp.ffn_hidden2;
      break;
    case ModelKind::cnn:
      add_conv();
      add_dense("dense", hp.conv_channels, hp.dense_units);
      features = hp.dense_units;
      break;
    case ModelKind::gru: {
      const std::size_t H = hp.recurrent_units;
      add("gru.w", glorot(rng, D, 3 * H));
      add("gru.u_zr", glorot(rng, H, 2 * H));
      add("gru.u_h", glorot(rng, H, H));
      add("gru.b", zero_bias(3 * H));
      add_dense("dense", H, hp.dense_units);
      features = hp.dense_units;
      break;
    }
    case ModelKind::lstm:
      add_lstm(D);
      add_dense("dense", hp.recurrent_units, hp.dense_units);
      features = hp.dense_units;
      break;
    case ModelKind::cnn_lstm:
      add_conv();
      add_lstm(hp.conv_channels);
      add_dense("dense", hp.recurrent_units, hp.dense_units);
      features = hp.dense_units;
      break;
    default:
      break;
  }
  add_dense("head", features, spec.n_targets);
  return m;
}

Eigen::MatrixXd predict(const NeuralModel& model, std::span<const EncodedText> inputs, std::size_t batch) {
  const std::size_t n = inputs.size(), t = model.spec().n_targets;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t));
  Tape tape(false);
  Rng unused(0);
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t len = std::min(batch, n - start);
    Tensor y = model.forward(tape, inputs.subspan(start, len), Mode::eval, unused);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < t; ++j) out(Eigen::Index(start + i), Eigen::Index(j)) = y[i * t + j];
  }
  return out;
}

void save_model(const NeuralModel& model, const std::filesystem::path& prefix) {
  using nlohmann::json;
  const auto& spec = model.spec();
  const auto& hp = spec.hyper;
  json manifest = {
      {"kind", to_string(spec.kind)},
      {"input_dim", spec.input_dim},
      {"n_targets", spec.n_targets},
      {"seed", model.seed()},
      {"strategy", to_string(model.strategy())},
      {"hyperparameters",
       {{"ffn_hidden1", hp.ffn_hidden1},
        {"ffn_hidden2", hp.ffn_hidden2},
        {"conv_channels", hp.conv_channels},
        {"recurrent_units", hp.recurrent_units},
        {"dense_units", hp.dense_units},
        {"pool_size", hp.pool_size},
        {"pool_stride", hp.pool_stride},
        {"embedding_dropout", hp.embedding_dropout},
        {"dense_dropout", hp.dense_dropout}}},
  };

  std::vector<NamedTensor> blobs = model.parameters();
  if (model.strategy() != EmbeddingStrategy::frozen) blobs.push_back({"embedding", model.embedding()});
  json layout = json::array();
  std::size_t offset = 0;
  for (const auto& p : blobs) {
    layout.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.size();
  }
  manifest["parameters"] = layout;
  manifest["total"] = offset;

  std::ofstream bin(prefix.string() + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + prefix.string() + ".bin");
  for (const auto& p : blobs) write_le_doubles(bin, p.value.data());
  std::ofstream js(prefix.string() + ".json");
  if (!js) throw std::runtime_error("cannot write " + prefix.string() + ".json");
  js << manifest.dump(2) << '\n';
}

NeuralModel load_model(const std::filesystem::path& prefix, const EmbeddingTable& table) {
  using nlohmann::json;
  std::ifstream js(prefix.string() + ".json");
  if (!js) throw std::runtime_error("cannot open " + prefix.string() + ".json");
  const json manifest = json::parse(js);

  ModelSpec spec;
  auto kind = parse_model_kind(manifest.at("kind").get<std::string>());
  auto strategy = parse_strategy(manifest.at("strategy").get<std::string>());
  if (!kind || !strategy) throw std::runtime_error("model manifest has an unknown kind or strategy");
  spec.kind = *kind;
  spec.input_dim = manifest.at("input_dim").get<std::size_t>();
  spec.n_targets = manifest.at("n_targets").get<std::size_t>();
  const auto& hp = manifest.at("hyperparameters");
  spec.hyper.ffn_hidden1 = hp.at("ffn_hidden1").get<std::size_t>();
  spec.hyper.ffn_hidden2 = hp.at("ffn_hidden2").get<std::size_t>();
  spec.hyper.conv_channels = hp.at("conv_channels").get<std::size_t>();
  spec.hyper.recurrent_units = hp.at("recurrent_units").get<std::size_t>();
  spec.hyper.dense_units = hp.at("dense_units").get<std::size_t>();
  spec.hyper.pool_size = hp.at("pool_size").get<std::size_t>();
  spec.hyper.pool_stride = hp.at("pool_stride").get<std::size_t>();
  spec.hyper.embedding_dropout = hp.at("embedding_dropout").get<double>();
  spec.hyper.dense_dropout = hp.at("dense_dropout").get<double>();

  NeuralModel m = build_model(spec, table, *strategy, manifest.at("seed").get<std::uint64_t>());
  std::ifstream bin(prefix.string() + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + prefix.string() + ".bin");
  for (const auto& entry : manifest.at("parameters")) {
    const auto name = entry.at("name").get<std::string>();
    Tensor target = name == "embedding" ? m.embedding_ : m.param(name);
    if (entry.at("shape").get<Shape>() != target.shape()) {
      throw std::runtime_error("model blob: shape mismatch for parameter '" + name + "'");
    }
    read_le_doubles(bin, target.data());
  }
  return m;
}

}  // namespace affect
