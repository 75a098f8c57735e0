#include "affect/embeddings.hpp"
#include "affect/models.hpp"
#include "affect/text_features.hpp"
#include "gradcheck.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace affect;
using affect::testing::check_gradients;

namespace {

constexpr ModelKind kNeural[] = {ModelKind::ffn, ModelKind::cnn, ModelKind::gru, ModelKind::lstm, ModelKind::cnn_lstm};

Hyperparameters small_hyper() {
  Hyperparameters h;
  h.ffn_hidden1 = 6;
  h.ffn_hidden2 = 5;
  h.conv_channels = 4;
  h.recurrent_units = 3;
  h.dense_units = 5;
  return h;
}

EmbeddingTable words(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::vector<std::string> vocab;
  for (std::size_t i = 0; i < n; ++i) vocab.push_back("w" + std::to_string(i));
  return random_table(vocab, dim, seed);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("model kind names round trip") {
  for (auto k : {ModelKind::ridge_ngram, ModelKind::ridge_bv, ModelKind::ffn, ModelKind::cnn, ModelKind::gru,
                 ModelKind::lstm, ModelKind::cnn_lstm})
    CHECK(parse_model_kind(to_string(k)) == k);
  CHECK(parse_model_kind("cnn-lstm") == ModelKind::cnn_lstm);
  CHECK_FALSE(parse_model_kind("transformer").has_value());
  for (auto s : {EmbeddingStrategy::frozen, EmbeddingStrategy::tuned, EmbeddingStrategy::learned})
    CHECK(parse_strategy(to_string(s)) == s);
  CHECK_FALSE(is_neural(ModelKind::ridge_bv));
  CHECK(is_neural(ModelKind::cnn_lstm));
}

TEST_CASE("parameter counts") {
  auto table = words(5, 300, 1);
  auto ffn = build_model({ModelKind::ffn, 300, 3, {}}, table, EmbeddingStrategy::frozen, 0);
  CHECK(ffn.parameter_count() == 300 * 256 + 256 + 256 * 128 + 128 + 128 * 3 + 3);
  CHECK(ffn.parameter_count() == 110339);

  Hyperparameters h;
  h.recurrent_units = 3;
  auto gru = build_model({ModelKind::gru, 2, 1, h}, words(4, 2, 1), EmbeddingStrategy::frozen, 0);
  std::size_t recurrent = 0;
  for (const auto& p : gru.parameters())
    if (p.name.rfind("gru.", 0) == 0) recurrent += p.value.size();
  CHECK(recurrent == 3 * (3 * (2 + 3) + 3));
  CHECK(recurrent == 54);
}

TEST_CASE("build_model validates its inputs") {
  auto table = words(3, 4, 1);
  CHECK_THROWS_AS(build_model({ModelKind::gru, 5, 1, {}}, table, EmbeddingStrategy::frozen, 0), DimensionError);
  CHECK_THROWS(build_model({ModelKind::ridge_bv, 4, 1, {}}, table, EmbeddingStrategy::frozen, 0));
}

TEST_CASE("same seed gives identical parameters; initialization is Glorot with zero bias") {
  auto table = words(6, 4, 2);
  for (auto kind : kNeural) {
    auto a = build_model({kind, 4, 2, small_hyper()}, table, EmbeddingStrategy::frozen, 11);
    auto b = build_model({kind, 4, 2, small_hyper()}, table, EmbeddingStrategy::frozen, 11);
    REQUIRE(a.parameters().size() == b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      const auto& p = a.parameters()[i];
      CHECK(values(p.value) == values(b.parameters()[i].value));
      if (p.name.size() > 2 && p.name.substr(p.name.size() - 2) == ".b")
        for (double v : p.value.data()) CHECK(v == 0.0);
    }
  }
  Hyperparameters h = small_hyper();
  auto m = build_model({ModelKind::ffn, 4, 1, h}, table, EmbeddingStrategy::frozen, 3);
  const double limit = std::sqrt(6.0 / (4.0 + 6.0));
  for (double v : m.parameters()[0].value.data()) CHECK(std::abs(v) <= limit);
}

TEST_CASE("all-zero parameters give zero predictions") {
  auto table = words(6, 4, 2);
  std::vector<EncodedText> inputs{encode_sequence({"w1", "w2", "w3"}, table, 8), encode_sequence({"w4"}, table, 8)};
  for (auto kind : kNeural) {
    auto m = build_model({kind, 4, 2, small_hyper()}, table, EmbeddingStrategy::frozen, 1);
    for (const auto& p : m.parameters())
      for (double& v : Tensor(p.value).data()) v = 0.0;
    auto pred = predict(m, inputs);
    CHECK(pred.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("GRU on a length-1 sequence equals one cell step from the zero state") {
  auto table = words(3, 2, 4);
  Hyperparameters h = small_hyper();
  auto m = build_model({ModelKind::gru, 2, 1, h}, table, EmbeddingStrategy::frozen, 5);
  // Nonzero biases so every term of the cell is exercised.
  std::mt19937_64 rng(1);
  for (const auto& p : m.parameters())
    for (double& v : Tensor(p.value).data()) v = std::uniform_real_distribution<double>(-1, 1)(rng);

  const std::size_t H = 3;
  auto get = [&](const std::string& name) {
    for (const auto& p : m.parameters())
      if (p.name == name) return values(p.value);
    FAIL("missing " << name);
    return std::vector<double>{};
  };
  const auto W = get("gru.w"), Uzr = get("gru.u_zr"), Uh = get("gru.u_h"), B = get("gru.b");
  const auto x = table.row(2);
  // From h = 0: z = σ(xWz + bz), n = tanh(xWn + bn), h' = (1 − z)·n.
  std::vector<double> h1(H);
  for (std::size_t j = 0; j < H; ++j) {
    double az = B[j], an = B[2 * H + j];
    for (std::size_t d = 0; d < 2; ++d) {
      az += x[d] * W[d * 3 * H + j];
      an += x[d] * W[d * 3 * H + 2 * H + j];
    }
    h1[j] = (1.0 - sigmoid(az)) * std::tanh(an);
  }
  Tape tape(false);
  Tensor seq = Tensor::from({1, 2}, {x[0], x[1]});
  GruWeights w{Tensor::from({2, 3 * H}, W), Tensor::from({H, 2 * H}, Uzr), Tensor::from({H, H}, Uh),
               Tensor::from({3 * H}, B)};
  Tensor last = gru_last_state(tape, seq, w);
  for (std::size_t j = 0; j < H; ++j) CHECK(last[j] == doctest::Approx(h1[j]).epsilon(1e-14));

  // A second step exercises the reset gate against the same formulas.
  Tensor h1t = Tensor::from({1, H}, h1);
  Tensor x2 = Tensor::from({1, 2}, {x[1], -x[0]});
  Tensor h2 = gru_cell(tape, x2, h1t, w);
  for (std::size_t j = 0; j < H; ++j) {
    double az = B[j], ar = B[H + j], an = B[2 * H + j];
    for (std::size_t d = 0; d < 2; ++d) {
      az += x2[d] * W[d * 3 * H + j];
      ar += x2[d] * W[d * 3 * H + H + j];
      an += x2[d] * W[d * 3 * H + 2 * H + j];
    }
    for (std::size_t k = 0; k < H; ++k) {
      az += h1[k] * Uzr[k * 2 * H + j];
      ar += h1[k] * Uzr[k * 2 * H + H + j];
    }
    // Reset gate of every unit is needed for the candidate.
    std::vector<double> r(H);
    for (std::size_t q = 0; q < H; ++q) {
      double a = B[H + q];
      for (std::size_t d = 0; d < 2; ++d) a += x2[d] * W[d * 3 * H + H + q];
      for (std::size_t k = 0; k < H; ++k) a += h1[k] * Uzr[k * 2 * H + H + q];
      r[q] = sigmoid(a);
    }
    for (std::size_t k = 0; k < H; ++k) an += r[k] * h1[k] * Uh[k * H + j];
    const double z = sigmoid(az);
    CHECK(h2[j] == doctest::Approx(z * h1[j] + (1 - z) * std::tanh(an)).epsilon(1e-14));
    (void)ar;
  }
}

TEST_CASE("LSTM cell matches its equations") {
  std::mt19937_64 rng(6);
  const std::size_t D = 2, H = 2;
  auto rnd = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = std::uniform_real_distribution<double>(-1, 1)(rng);
    return v;
  };
  const auto W = rnd(D * 4 * H), U = rnd(H * 4 * H), B = rnd(4 * H), x = rnd(D), h = rnd(H), c = rnd(H);
  Tape tape(false);
  LstmWeights w{Tensor::from({D, 4 * H}, W), Tensor::from({H, 4 * H}, U), Tensor::from({4 * H}, B)};
  auto s = lstm_cell(tape, Tensor::from({1, D}, x), {Tensor::from({1, H}, h), Tensor::from({1, H}, c)}, w);
  for (std::size_t j = 0; j < H; ++j) {
    double a[4];
    for (std::size_t g = 0; g < 4; ++g) {
      a[g] = B[g * H + j];
      for (std::size_t d = 0; d < D; ++d) a[g] += x[d] * W[d * 4 * H + g * H + j];
      for (std::size_t k = 0; k < H; ++k) a[g] += h[k] * U[k * 4 * H + g * H + j];
    }
    const double cn = sigmoid(a[1]) * c[j] + sigmoid(a[0]) * std::tanh(a[2]);
    CHECK(s.c[j] == doctest::Approx(cn).epsilon(1e-14));
    CHECK(s.h[j] == doctest::Approx(sigmoid(a[3]) * std::tanh(cn)).epsilon(1e-14));
  }
}

TEST_CASE("padding invariance for every neural kind") {
  auto table = words(20, 4, 7);
  const TokenSeq texts[] = {{"w1", "w2", "oov", "w5"}, {"w3"}, {}, {"oov"}, {"w1", "w1", "w9", "w10", "w11", "w12"}};
  for (auto kind : kNeural) {
    auto m = build_model({kind, 4, 2, small_hyper()}, table, EmbeddingStrategy::frozen, 2);
    std::vector<EncodedText> short_inputs, long_inputs;
    for (const auto& t : texts) {
      short_inputs.push_back(encode_sequence(t, table, 16));
      long_inputs.push_back(encode_sequence(t, table, 128));
    }
    CHECK(predict(m, short_inputs) == predict(m, long_inputs));
  }
}

TEST_CASE("eval-mode forward is pure and batch independent") {
  auto table = words(10, 4, 3);
  std::vector<EncodedText> inputs;
  for (int i = 0; i < 5; ++i) inputs.push_back(encode_sequence({"w" + std::to_string(i), "w9"}, table, 6));
  for (auto kind : kNeural) {
    auto m = build_model({kind, 4, 2, small_hyper()}, table, EmbeddingStrategy::tuned, 2);
    Rng a(1), b(1);
    Tape tape(false);
    auto y1 = m.forward(tape, inputs, Mode::eval, a);
    CHECK(a() == b());
    auto y2 = m.forward(tape, inputs, Mode::eval, a);
    CHECK(values(y1) == values(y2));
    auto p1 = predict(m, inputs, 64), p2 = predict(m, inputs, 2);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("predictions are affine in the head parameters") {
  auto table = words(10, 4, 3);
  std::vector<EncodedText> inputs{encode_sequence({"w1", "w2"}, table, 6), encode_sequence({"w3"}, table, 6)};
  for (auto kind : kNeural) {
    auto m = build_model({kind, 4, 2, small_hyper()}, table, EmbeddingStrategy::frozen, 4);
    Tensor hw, hb;
    for (const auto& p : m.parameters()) {
      if (p.name == "head.w") hw = p.value;
      if (p.name == "head.b") hb = p.value;
    }
    std::mt19937_64 rng(9);
    auto set_head = [&](std::uint64_t s) {
      std::mt19937_64 r(s);
      for (double& v : hw.data()) v = std::uniform_real_distribution<double>(-1, 1)(r);
      for (double& v : hb.data()) v = std::uniform_real_distribution<double>(-1, 1)(r);
      return std::pair{values(hw), values(hb)};
    };
    auto [w1, b1] = set_head(1);
    auto f1 = predict(m, inputs);
    auto [w2, b2] = set_head(2);
    auto f2 = predict(m, inputs);
    for (std::size_t i = 0; i < w1.size(); ++i) hw.data()[i] = w1[i] + w2[i];
    for (std::size_t i = 0; i < b1.size(); ++i) hb.data()[i] = b1[i] + b2[i];
    auto f12 = predict(m, inputs);
    CHECK((f12 - f1 - f2).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("frozen strategy keeps the embedding out of the trainable set") {
  auto table = words(4, 3, 1);
  auto frozen = build_model({ModelKind::cnn, 3, 1, small_hyper()}, table, EmbeddingStrategy::frozen, 1);
  auto tuned = build_model({ModelKind::cnn, 3, 1, small_hyper()}, table, EmbeddingStrategy::tuned, 1);
  CHECK(tuned.trainable().size() == frozen.trainable().size() + 1);
  CHECK_FALSE(frozen.embedding().requires_grad());
  CHECK(values(frozen.embedding()) == std::vector<double>(table.matrix().begin(), table.matrix().end()));
}

TEST_CASE("full-model MSE gradients pass the finite-difference check") {
  std::mt19937_64 rng(31);
  for (auto kind : kNeural) {
    auto table = words(6, 3, rng());
    auto m = build_model({kind, 3, 2, small_hyper()}, table, EmbeddingStrategy::tuned, rng());
    std::vector<EncodedText> batch{encode_sequence({"w1", "w2", "w3"}, table, 5), encode_sequence({"w4", "w5"}, table, 5)};
    Tensor target = affect::testing::random_tensor(rng, {2, 2}, 1.0, false);
    std::vector<Tensor> params = m.trainable();
    // Row 0 of the embedding is the constant pad vector.
    auto pad_row = [&](std::size_t k, std::size_t i) { return params[k].same_node(m.embedding()) && i < 3; };
    // Zero biases would put relu inputs exactly on the kink whenever dropout
    // clears a whole row; move every parameter off its initial value.
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k].size(); ++i)
        if (!pad_row(k, i)) params[k][i] += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    const std::uint64_t drop_seed = rng();
    auto res = check_gradients(
        params,
        [&](Tape& t) {
          Rng r(drop_seed);
          return mse_loss(t, m.forward(t, batch, Mode::train, r), target);
        },
        1e-5, pad_row);
    INFO(to_string(kind));
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("save and load round trip") {
  auto table = words(8, 3, 5);
  const auto dir = std::filesystem::temp_directory_path() / "affect_tests";
  std::filesystem::create_directories(dir);
  std::vector<EncodedText> inputs{encode_sequence({"w1", "w7"}, table, 6), encode_sequence({"w2"}, table, 6)};
  for (auto kind : kNeural) {
    for (auto strategy : {EmbeddingStrategy::frozen, EmbeddingStrategy::tuned}) {
      auto m = build_model({kind, 3, 2, small_hyper()}, table, strategy, 77);
      Tensor(m.embedding()).data()[4] += strategy == EmbeddingStrategy::tuned ? 0.5 : 0.0;
      const auto prefix = dir / ("model_" + std::string(to_string(kind)));
      save_model(m, prefix);
      auto back = load_model(prefix, table);
      CHECK(back.spec().kind == kind);
      CHECK(back.seed() == 77);
      CHECK(back.strategy() == strategy);
      CHECK(predict(back, inputs) == predict(m, inputs));
      std::ifstream manifest(prefix.string() + ".json");
      auto j = nlohmann::json::parse(manifest);
      CHECK(j.at("kind") == std::string(to_string(kind)));
      CHECK(j.at("seed") == 77);
    }
  }
}
