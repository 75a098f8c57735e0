#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace affect {

enum class EmbeddingSource { word2vec_bin, fasttext_text, random };

std::string_view to_string(EmbeddingSource source);

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Token -> row map over a dense (1 + vocab) × dim matrix. Row 0 is reserved
// for padding and out-of-vocabulary tokens and is always zero; token i of
// `tokens` lives in row i + 1.
class EmbeddingTable {
 public:
  EmbeddingTable(std::size_t dim, EmbeddingSource source);

  std::size_t dim() const { return dim_; }
  EmbeddingSource source() const { return source_; }
  std::size_t vocab_size() const { return tokens_.size(); }
  std::size_t rows() const { return tokens_.size() + 1; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<std::int32_t> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }

  std::span<const double> row(std::size_t r) const { return {matrix_.data() + r * dim_, dim_}; }
  std::span<const double> matrix() const { return matrix_; }

  // Appends a token and returns its row; returns the existing row for a
  // duplicate without touching the stored vector.
  std::int32_t add(std::string token, std::span<const double> vec);
  // Overwrites a non-reserved row.
  void set_row(std::size_t r, std::span<const double> vec);

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::size_t dim_;
  EmbeddingSource source_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<double> matrix_;
};

struct EmbeddingLoadOptions {
  // When set, only tokens (after optional case folding) in this set are kept.
  const std::unordered_set<std::string>* keep = nullptr;
  // Lowercases tokens on load; the first casing seen wins.
  bool fold_case = false;
  // Receives non-fatal diagnostics such as duplicate tokens.
  std::vector<std::string>* warnings = nullptr;
};

// word2vec binary: "<vocab> <dim>\n", then per entry the token bytes up to a
// space, dim little-endian float32 values and an optional '\n'.
EmbeddingTable load_word2vec_bin(const std::filesystem::path& path, const EmbeddingLoadOptions& options = {});
void write_word2vec_bin(const EmbeddingTable& table, const std::filesystem::path& path);

// FastText .vec: "<n> <dim>\n", then n lines "token v1 ... vdim".
EmbeddingTable load_fasttext_text(const std::filesystem::path& path, const EmbeddingLoadOptions& options = {});
void write_fasttext_text(const EmbeddingTable& table, const std::filesystem::path& path);

// Rows uniform in (-0.05, 0.05); duplicate tokens are kept once.
EmbeddingTable random_table(std::span<const std::string> vocab, std::size_t dim, std::uint64_t seed);

}  // namespace affect
