#include "affect/embeddings.hpp"

#include "affect/unicode.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace affect {

namespace {

std::size_t parse_count(std::string_view text, const std::string& what) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw EmbeddingError("malformed header: bad " + what + " '" + std::string(text) + "'");
  return value;
}

// Splits on ASCII blanks, dropping empty fields.
std::vector<std::string_view> split_blanks(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

std::pair<std::size_t, std::size_t> parse_header(const std::string& line, const std::filesystem::path& path) {
  auto fields = split_blanks(line);
  if (fields.size() != 2) throw EmbeddingError(path.string() + ": malformed header '" + line + "' (expected '<count> <dim>')");
  const auto count = parse_count(fields[0], "count");
  const auto dim = parse_count(fields[1], "dimension");
  if (dim == 0) throw EmbeddingError(path.string() + ": embedding dimension must be >= 1");
  return {count, dim};
}

// Shared insertion policy for both loaders.
class TableBuilder {
 public:
  TableBuilder(std::size_t dim, EmbeddingSource source, const EmbeddingLoadOptions& options)
      : table_(dim, source), options_(options) {}

  // Returns the key a raw token will be stored under, or nullopt if filtered out.
  std::optional<std::string> key_for(std::string raw) const {
    std::string key = options_.fold_case ? utf8::to_lower(raw) : std::move(raw);
    if (options_.keep != nullptr && !options_.keep->contains(key)) return std::nullopt;
    return key;
  }

  void insert(std::string key, std::span<const double> vec, bool exact_duplicate_possible, std::size_t entry) {
    if (table_.contains(key)) {
      if (exact_duplicate_possible && options_.warnings != nullptr) {
        options_.warnings->push_back("duplicate token '" + key + "' at entry " + std::to_string(entry) +
                                     "; keeping the first vector");
      }
      return;
    }
    table_.add(std::move(key), vec);
  }

  EmbeddingTable finish() { return std::move(table_); }

 private:
  EmbeddingTable table_;
  const EmbeddingLoadOptions& options_;
};

float load_le_float(const unsigned char* p) {
  const std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                             (std::uint32_t(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void store_le_float(float value, unsigned char* p) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

std::string_view to_string(EmbeddingSource source) {
  switch (source) {
    case EmbeddingSource::word2vec_bin: return "word2vec-bin";
    case EmbeddingSource::fasttext_text: return "fasttext-text";
    case EmbeddingSource::random: return "random";
  }
  return "unknown";
}

EmbeddingTable::EmbeddingTable(std::size_t dim, EmbeddingSource source)
    : dim_(dim), source_(source), matrix_(dim, 0.0) {
  if (dim == 0) throw EmbeddingError("embedding dimension must be >= 1");
}

std::optional<std::int32_t> EmbeddingTable::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int32_t EmbeddingTable::add(std::string token, std::span<const double> vec) {
  if (vec.size() != dim_) {
    throw EmbeddingError("vector for '" + token + "' has " + std::to_string(vec.size()) + " entries, expected " +
                         std::to_string(dim_));
  }
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const auto row = static_cast<std::int32_t>(tokens_.size() + 1);
  index_.emplace(token, row);
  tokens_.push_back(std::move(token));
  matrix_.insert(matrix_.end(), vec.begin(), vec.end());
  return row;
}

void EmbeddingTable::set_row(std::size_t r, std::span<const double> vec) {
  if (r == 0 || r >= rows()) throw EmbeddingError("set_row: row " + std::to_string(r) + " is reserved or out of range");
  if (vec.size() != dim_) throw EmbeddingError("set_row: wrong vector length");
  std::copy(vec.begin(), vec.end(), matrix_.begin() + std::ptrdiff_t(r * dim_));
}

EmbeddingTable load_word2vec_bin(const std::filesystem::path& path, const EmbeddingLoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmbeddingError("cannot open embeddings file " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw EmbeddingError(path.string() + ": missing header");
  const auto [count, dim] = parse_header(header, path);

  TableBuilder builder(dim, EmbeddingSource::word2vec_bin, options);
  std::vector<unsigned char> raw(4 * dim);
  std::vector<double> vec(dim);
  std::string token;
  for (std::size_t entry = 0; entry < count; ++entry) {
    token.clear();
    for (;;) {
      const int c = in.get();
      if (c == EOF) throw EmbeddingError(path.string() + ": truncated file in token of entry " + std::to_string(entry));
      if (c == ' ') break;
      if (c == '\n' && token.empty()) continue;
      token += static_cast<char>(c);
    }
    if (token.empty()) throw EmbeddingError(path.string() + ": empty token at entry " + std::to_string(entry));
    if (!in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()))) {
      throw EmbeddingError(path.string() + ": truncated vector payload at entry " + std::to_string(entry) + " ('" +
                           utf8::sanitize(token) + "')");
    }
    if (in.peek() == '\n') in.get();
    auto key = builder.key_for(utf8::sanitize(token));
    if (!key) continue;
    for (std::size_t d = 0; d < dim; ++d) vec[d] = double(load_le_float(raw.data() + 4 * d));
    builder.insert(std::move(*key), vec, !options.fold_case, entry);
  }
  return builder.finish();
}

void write_word2vec_bin(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EmbeddingError("cannot write " + path.string());
  out << table.vocab_size() << ' ' << table.dim() << '\n';
  std::vector<unsigned char> raw(4 * table.dim());
  for (std::size_t r = 1; r < table.rows(); ++r) {
    out << table.tokens()[r - 1] << ' ';
    auto row = table.row(r);
    for (std::size_t d = 0; d < row.size(); ++d) store_le_float(static_cast<float>(row[d]), raw.data() + 4 * d);
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    out << '\n';
  }
  if (!out) throw EmbeddingError("failed writing " + path.string());
}

EmbeddingTable load_fasttext_text(const std::filesystem::path& path, const EmbeddingLoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmbeddingError("cannot open embeddings file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw EmbeddingError(path.string() + ": missing header");
  const auto [count, dim] = parse_header(line, path);

  TableBuilder builder(dim, EmbeddingSource::fasttext_text, options);
  std::vector<double> vec(dim);
  std::size_t entries = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (entries == count) {
      throw EmbeddingError(path.string() + ": more data lines than the header count " + std::to_string(count) +
                           " (line " + std::to_string(line_no) + ")");
    }
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0) {
      throw EmbeddingError(path.string() + ": line " + std::to_string(line_no) + ": missing token or vector");
    }
    auto fields = split_blanks(std::string_view(line).substr(space + 1));
    if (fields.size() != dim) {
      throw EmbeddingError(path.string() + ": line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                           " values, found " + std::to_string(fields.size()));
    }
    const std::size_t entry = entries++;
    auto key = builder.key_for(utf8::sanitize(line.substr(0, space)));
    if (!key) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      auto f = fields[d];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), vec[d]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw EmbeddingError(path.string() + ": line " + std::to_string(line_no) + ": bad number '" +
                             std::string(f) + "'");
      }
    }
    builder.insert(std::move(*key), vec, !options.fold_case, entry);
  }
  if (entries != count) {
    throw EmbeddingError(path.string() + ": header announces " + std::to_string(count) + " entries, file has " +
                         std::to_string(entries));
  }
  return builder.finish();
}

void write_fasttext_text(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EmbeddingError("cannot write " + path.string());
  out << table.vocab_size() << ' ' << table.dim() << '\n';
  for (std::size_t r = 1; r < table.rows(); ++r) {
    out << table.tokens()[r - 1];
    for (double v : table.row(r)) out << ' ' << format_double(v);
    out << '\n';
  }
  if (!out) throw EmbeddingError("failed writing " + path.string());
}

EmbeddingTable random_table(std::span<const std::string> vocab, std::size_t dim, std::uint64_t seed) {
  if (vocab.empty()) throw EmbeddingError("random_table: empty vocabulary");
  EmbeddingTable table(dim, EmbeddingSource::random);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-0.05, 0.05);
  std::vector<double> vec(dim);
  for (const auto& token : vocab) {
    if (table.contains(token)) continue;
    for (auto& v : vec) v = unit(rng);
    table.add(token, vec);
  }
  return table;
}

}  // namespace affect
