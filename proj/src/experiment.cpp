#include "affect/experiment.hpp"

#include "affect/seeding.hpp"

#include <stdexcept>
#include <string>

namespace affect {

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696eULL;

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = m.row(Eigen::Index(rows[i]));
  return out;
}

SparseMatrix sparse_design(const std::vector<SparseVec>& vecs, std::size_t cols) {
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < vecs.size(); ++i)
    for (const auto& [j, v] : vecs[i].entries) trips.emplace_back(Eigen::Index(i), Eigen::Index(j), v);
  SparseMatrix x(static_cast<Eigen::Index>(vecs.size()), static_cast<Eigen::Index>(cols));
  x.setFromTriplets(trips.begin(), trips.end());
  return x;
}

Learner ngram_learner(const Corpus& corpus, const LearnerOptions& options) {
  return [&corpus, grid = options.lambda_grid](const Split& split) {
    std::vector<TokenSeq> train_tokens;
    train_tokens.reserve(split.train.size());
    for (auto i : split.train) train_tokens.push_back(corpus.tokens[i]);
    const NgramVocab vocab = fit_ngram_vocab(train_tokens);
    std::vector<SparseVec> train_vecs, test_vecs;
    for (const auto& t : train_tokens) train_vecs.push_back(ngram_features(t, vocab));
    for (auto i : split.test) test_vecs.push_back(ngram_features(corpus.tokens[i], vocab));
    const RidgeModel model =
        ridge_fit_auto(sparse_design(train_vecs, vocab.size()), rows_of(corpus.gold, split.train), grid, split.seed);
    return model.predict(sparse_design(test_vecs, vocab.size()));
  };
}

Learner bv_learner(const Corpus& corpus, const EmbeddingTable& table, const LearnerOptions& options) {
  auto features = std::make_shared<Eigen::MatrixXd>(static_cast<Eigen::Index>(corpus.size()),
                                                    static_cast<Eigen::Index>(table.dim()));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto v = bag_of_vectors(corpus.tokens[i], table);
    for (std::size_t j = 0; j < v.size(); ++j) (*features)(Eigen::Index(i), Eigen::Index(j)) = v[j];
  }
  return [&corpus, features, grid = options.lambda_grid](const Split& split) {
    const RidgeModel model =
        ridge_fit_auto(rows_of(*features, split.train), rows_of(corpus.gold, split.train), grid, split.seed);
    return model.predict(rows_of(*features, split.test));
  };
}

Learner neural_learner(const Corpus& corpus, const EmbeddingTable* table, const LearnerOptions& options) {
  const bool learned = options.strategy == EmbeddingStrategy::learned;
  std::shared_ptr<const EmbeddingTable> index_table;
  std::shared_ptr<const std::vector<std::string>> vocab;
  if (learned) {
    vocab = std::make_shared<std::vector<std::string>>(corpus.vocabulary());
    const std::size_t dim = table != nullptr ? table->dim() : options.learned_dim;
    index_table = std::make_shared<EmbeddingTable>(random_table(*vocab, dim, 0));
  } else {
    if (table == nullptr) throw std::invalid_argument("pre-trained embeddings required for this strategy");
    index_table = std::shared_ptr<const EmbeddingTable>(table, [](const EmbeddingTable*) {});
  }
  auto encoded = std::make_shared<std::vector<EncodedText>>();
  encoded->reserve(corpus.size());
  for (const auto& t : corpus.tokens) encoded->push_back(encode_sequence(t, *index_table, options.max_len));

  return [&corpus, options, learned, index_table, vocab, encoded](const Split& split) {
    std::vector<EncodedText> train_inputs, test_inputs;
    for (auto i : split.train) train_inputs.push_back((*encoded)[i]);
    for (auto i : split.test) test_inputs.push_back((*encoded)[i]);
    const Eigen::MatrixXd y = rows_of(corpus.gold, split.train);

    std::optional<EmbeddingTable> fresh;
    if (learned) fresh = random_table(*vocab, index_table->dim(), derive_seed(split.seed, 0));
    const EmbeddingTable& init = fresh ? *fresh : *index_table;

    const std::size_t t = std::size_t(y.cols());
    const std::size_t groups = options.per_variable ? t : 1;
    Eigen::MatrixXd pred(static_cast<Eigen::Index>(split.test.size()), static_cast<Eigen::Index>(t));
    for (std::size_t g = 0; g < groups; ++g) {
      ModelSpec spec{options.kind, init.dim(), options.per_variable ? 1 : t, options.hyper};
      const std::uint64_t seed = derive_seed(split.seed, g + 1);
      NeuralModel model = build_model(spec, init, options.strategy, seed);
      TrainConfig cfg = options.train;
      cfg.seed = derive_seed(seed, kTrainStream);
      cfg.strategy = options.strategy;
      const Eigen::MatrixXd target = options.per_variable ? Eigen::MatrixXd(y.col(Eigen::Index(g))) : y;
      const TrainResult result = train(model, train_inputs, target, cfg);
      if (!options.trace_dir.empty()) {
        std::string name = options.trace_tag.empty() ? std::string(to_string(options.kind)) : options.trace_tag;
        name += "_" + std::string(to_string(options.strategy)) + "_seed" + std::to_string(split.seed);
        if (options.per_variable) name += "_v" + std::to_string(g);
        write_loss_trace(result, options.trace_dir / (name + ".csv"));
      }
      const Eigen::MatrixXd p = predict(model, test_inputs);
      if (options.per_variable) {
        pred.col(Eigen::Index(g)) = p.col(0);
      } else {
        pred = p;
      }
    }
    return pred;
  };
}

}  // namespace

std::vector<std::string> Corpus::vocabulary() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& seq : tokens)
    for (const auto& tok : seq)
      if (seen.insert(tok).second) out.push_back(tok);
  return out;
}

std::unordered_set<std::string> Corpus::token_set() const {
  std::unordered_set<std::string> out;
  for (const auto& seq : tokens) out.insert(seq.begin(), seq.end());
  return out;
}

Corpus make_corpus(Dataset dataset) {
  Corpus c;
  c.tokens.reserve(dataset.size());
  for (const auto& r : dataset.records) c.tokens.push_back(tokenize(r.text));
  c.gold = dataset.gold();
  c.dataset = std::move(dataset);
  return c;
}

bool needs_embeddings(ModelKind kind, EmbeddingStrategy strategy) {
  if (kind == ModelKind::ridge_ngram) return false;
  if (kind == ModelKind::ridge_bv) return true;
  return strategy != EmbeddingStrategy::learned;
}

Learner make_learner(const Corpus& corpus, const EmbeddingTable* table, const LearnerOptions& options) {
  switch (options.kind) {
    case ModelKind::ridge_ngram:
      return ngram_learner(corpus, options);
    case ModelKind::ridge_bv:
      if (table == nullptr) throw std::invalid_argument("ridge_bv requires pre-trained embeddings");
      return bv_learner(corpus, *table, options);
    default:
      return neural_learner(corpus, table, options);
  }
}

}  // namespace affect
