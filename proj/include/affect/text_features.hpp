#pragma once

#include "affect/embeddings.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace affect {

using TokenSeq = std::vector<std::string>;

inline constexpr std::size_t kDefaultMaxLen = 128;
// Joins the tokens of an n-gram key; never produced by the tokenizer.
inline constexpr char kNgramSeparator = '\x1f';

// Lowercases, splits on Unicode whitespace and peels leading/trailing
// punctuation into single-character tokens. A leading '#' or '@' directly
// followed by a word character stays attached.
TokenSeq tokenize(std::string_view text);

class NgramVocab {
 public:
  std::size_t size() const { return keys_.size(); }
  const std::vector<std::string>& keys() const { return keys_; }
  std::optional<std::uint32_t> find(const std::string& key) const;
  // Returns the column of key, adding it if new.
  std::uint32_t intern(const std::string& key);

 private:
  std::vector<std::string> keys_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct SparseVec {
  std::vector<std::pair<std::uint32_t, double>> entries;  // strictly increasing indices
};

// Visits every n-gram key (n = 1..3) of tokens, n-major then by position.
template <typename Fn>
void for_each_ngram(const TokenSeq& tokens, Fn&& fn) {
  std::string key;
  for (std::size_t n = 1; n <= 3; ++n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      key = tokens[i];
      for (std::size_t j = 1; j < n; ++j) {
        key += kNgramSeparator;
        key += tokens[i + j];
      }
      fn(key);
    }
  }
}

// Columns for all uni/bi/trigrams of the corpus in first-occurrence order.
NgramVocab fit_ngram_vocab(std::span<const TokenSeq> corpus);
// L2-normalized n-gram counts; unseen n-grams are dropped.
SparseVec ngram_features(const TokenSeq& tokens, const NgramVocab& vocab);

// Mean of in-vocabulary embeddings; the zero vector when none is known.
std::vector<double> bag_of_vectors(const TokenSeq& tokens, const EmbeddingTable& table);

struct EncodedText {
  std::vector<std::int32_t> ids;  // exactly max_len entries, 0 = pad/OOV row
  std::size_t valid_len = 1;      // >= 1; an empty text is one pad frame

  std::span<const std::int32_t> valid() const { return {ids.data(), valid_len}; }
};

EncodedText encode_sequence(const TokenSeq& tokens, const EmbeddingTable& table, std::size_t max_len = kDefaultMaxLen);

}  // namespace affect
