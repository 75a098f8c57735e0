#include "affect/text_features.hpp"

#include "affect/unicode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace affect {

namespace {

bool is_sigil(char32_t cp) { return cp == '#' || cp == '@'; }

void emit_chunk(const std::vector<char32_t>& chunk, TokenSeq& out) {
  std::size_t begin = 0, end = chunk.size();
  std::vector<std::string> trailing;
  while (begin < end && utf8::is_punct(chunk[begin])) {
    if (is_sigil(chunk[begin]) && begin + 1 < end && !utf8::is_punct(chunk[begin + 1])) break;
    out.push_back(utf8::encode(chunk[begin]));
    ++begin;
  }
  while (end > begin && utf8::is_punct(chunk[end - 1])) {
    trailing.push_back(utf8::encode(chunk[end - 1]));
    --end;
  }
  if (end > begin) out.push_back(utf8::encode(std::vector<char32_t>(chunk.begin() + std::ptrdiff_t(begin), chunk.begin() + std::ptrdiff_t(end))));
  out.insert(out.end(), trailing.rbegin(), trailing.rend());
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::vector<char32_t> chunk;
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_space(cp)) {
      if (!chunk.empty()) emit_chunk(chunk, out);
      chunk.clear();
    } else {
      chunk.push_back(utf8::to_lower(cp));
    }
  }
  if (!chunk.empty()) emit_chunk(chunk, out);
  return out;
}

std::optional<std::uint32_t> NgramVocab::find(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t NgramVocab::intern(const std::string& key) {
  auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(keys_.size()));
  if (inserted) keys_.push_back(key);
  return it->second;
}

NgramVocab fit_ngram_vocab(std::span<const TokenSeq> corpus) {
  if (corpus.empty()) throw std::invalid_argument("fit_ngram_vocab: empty training corpus");
  NgramVocab vocab;
  for (const auto& doc : corpus) for_each_ngram(doc, [&](const std::string& key) { vocab.intern(key); });
  return vocab;
}

SparseVec ngram_features(const TokenSeq& tokens, const NgramVocab& vocab) {
  std::map<std::uint32_t, double> counts;
  for_each_ngram(tokens, [&](const std::string& key) {
    if (auto col = vocab.find(key)) counts[*col] += 1.0;
  });
  double norm2 = 0.0;
  for (const auto& [col, c] : counts) norm2 += c * c;
  SparseVec out;
  out.entries.reserve(counts.size());
  const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
  for (const auto& [col, c] : counts) out.entries.emplace_back(col, c * inv);
  return out;
}

std::vector<double> bag_of_vectors(const TokenSeq& tokens, const EmbeddingTable& table) {
  std::vector<double> mean(table.dim(), 0.0);
  std::size_t known = 0;
  for (const auto& tok : tokens) {
    auto row = table.find(tok);
    if (!row) continue;
    auto vec = table.row(std::size_t(*row));
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += vec[d];
    ++known;
  }
  if (known > 0)
    for (auto& v : mean) v /= double(known);
  return mean;
}

EncodedText encode_sequence(const TokenSeq& tokens, const EmbeddingTable& table, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("encode_sequence: max_len must be >= 1");
  EncodedText enc;
  enc.ids.assign(max_len, 0);
  const std::size_t n = std::min(tokens.size(), max_len);
  for (std::size_t i = 0; i < n; ++i) enc.ids[i] = table.find(tokens[i]).value_or(0);
  enc.valid_len = std::max<std::size_t>(n, 1);
  return enc;
}

}  // namespace affect
