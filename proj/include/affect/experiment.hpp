#pragma once

// Glue between datasets, feature extractors, models and the evaluation
// protocols. A Corpus tokenizes once; learners built from it are cheap to
// call from several threads.

#include "affect/dataset.hpp"
#include "affect/embeddings.hpp"
#include "affect/evaluation.hpp"
#include "affect/models.hpp"
#include "affect/ridge.hpp"
#include "affect/text_features.hpp"
#include "affect/training.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace affect {

struct Corpus {
  Dataset dataset;
  std::vector<TokenSeq> tokens;
  Eigen::MatrixXd gold;

  std::size_t size() const { return tokens.size(); }
  // Distinct tokens in first-appearance order.
  std::vector<std::string> vocabulary() const;
  std::unordered_set<std::string> token_set() const;
};

Corpus make_corpus(Dataset dataset);

struct LearnerOptions {
  ModelKind kind = ModelKind::gru;
  EmbeddingStrategy strategy = EmbeddingStrategy::frozen;
  Hyperparameters hyper;
  TrainConfig train;  // seed is overwritten per split
  std::size_t max_len = kDefaultMaxLen;
  // Dimension of randomly initialized tables when no pre-trained table is given.
  std::size_t learned_dim = 300;
  // One single-output network per variable instead of one multi-output network.
  bool per_variable = false;
  std::vector<double> lambda_grid = default_lambda_grid();
  // When non-empty, neural learners write one loss trace per trained network here.
  std::filesystem::path trace_dir;
  std::string trace_tag;
};

// True when the learner needs a pre-trained table.
bool needs_embeddings(ModelKind kind, EmbeddingStrategy strategy);

// The returned learner keeps references to `corpus` and `table`; both must
// outlive it. `table` may be null unless needs_embeddings() holds.
Learner make_learner(const Corpus& corpus, const EmbeddingTable* table, const LearnerOptions& options);

}  // namespace affect
