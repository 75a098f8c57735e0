#include "affect/dataset.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace affect {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string format_number(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string range_text(const VariableRange& var) {
  return "[" + format_number(var.lo) + ", " + format_number(var.hi) + "]";
}

AnnotationSchema make(AnnotationFormat format, std::initializer_list<const char*> names, double lo, double hi) {
  AnnotationSchema s;
  s.format = format;
  for (const char* n : names) s.variables.push_back({n, lo, hi});
  return s;
}

}  // namespace

std::string_view to_string(AnnotationFormat format) {
  switch (format) {
    case AnnotationFormat::vad: return "VAD";
    case AnnotationFormat::be4: return "BE4";
    case AnnotationFormat::be5: return "BE5";
    case AnnotationFormat::be6: return "BE6";
    case AnnotationFormat::custom: return "custom";
  }
  return "unknown";
}

AnnotationSchema AnnotationSchema::vad() { return make(AnnotationFormat::vad, {"valence", "arousal", "dominance"}, 1, 9); }
AnnotationSchema AnnotationSchema::be4() { return make(AnnotationFormat::be4, {"joy", "anger", "sadness", "fear"}, 0, 1); }
AnnotationSchema AnnotationSchema::be5() {
  return make(AnnotationFormat::be5, {"joy", "anger", "sadness", "fear", "disgust"}, 1, 5);
}
AnnotationSchema AnnotationSchema::be6() {
  return make(AnnotationFormat::be6, {"joy", "anger", "sadness", "fear", "disgust", "surprise"}, 0, 100);
}

AnnotationSchema AnnotationSchema::vad_be5() {
  AnnotationSchema s = vad();
  s.format = AnnotationFormat::custom;
  for (auto& v : be5().variables) s.variables.push_back(v);
  return s;
}

AnnotationSchema AnnotationSchema::parse(std::string_view spec) {
  if (spec == "vad" || spec == "VAD") return vad();
  if (spec == "be4" || spec == "BE4") return be4();
  if (spec == "be5" || spec == "BE5") return be5();
  if (spec == "be6" || spec == "BE6") return be6();
  if (spec == "vad+be5" || spec == "VAD+BE5" || spec == "vad_be5") return vad_be5();

  AnnotationSchema s;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    auto item = spec.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    const auto c1 = item.find(':');
    const auto c2 = c1 == std::string_view::npos ? c1 : item.find(':', c1 + 1);
    if (c1 == 0 || c2 == std::string_view::npos) {
      throw std::invalid_argument("bad schema entry '" + std::string(item) + "' (expected name:lo:hi or a preset)");
    }
    VariableRange var{std::string(item.substr(0, c1)), 0, 0};
    auto lo_text = item.substr(c1 + 1, c2 - c1 - 1);
    auto hi_text = item.substr(c2 + 1);
    auto r1 = std::from_chars(lo_text.data(), lo_text.data() + lo_text.size(), var.lo);
    auto r2 = std::from_chars(hi_text.data(), hi_text.data() + hi_text.size(), var.hi);
    if (r1.ec != std::errc() || r2.ec != std::errc() || r1.ptr != lo_text.data() + lo_text.size() ||
        r2.ptr != hi_text.data() + hi_text.size() || !(var.lo <= var.hi)) {
      throw std::invalid_argument("bad range in schema entry '" + std::string(item) + "'");
    }
    s.variables.push_back(std::move(var));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return s;
}

std::optional<std::size_t> AnnotationSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < variables.size(); ++i)
    if (variables[i].name == name) return i;
  return std::nullopt;
}

std::vector<std::string> AnnotationSchema::names() const {
  std::vector<std::string> out;
  for (const auto& v : variables) out.push_back(v.name);
  return out;
}

Eigen::MatrixXd Dataset::gold() const {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(n_targets()));
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < n_targets(); ++j) g(Eigen::Index(i), Eigen::Index(j)) = records[i].scores[j];
  return g;
}

Dataset parse_dataset(std::istream& in, const AnnotationSchema& schema, bool strict) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("empty input: missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_tabs(line);
  if (header.size() < 2 || header[0] != "text") {
    throw DataError("header must be 'text' followed by at least one variable name", line_no);
  }

  Dataset ds;
  ds.schema.format = schema.format;
  for (std::size_t c = 1; c < header.size(); ++c) {
    auto idx = schema.index_of(header[c]);
    if (!idx) throw DataError("unknown variable '" + std::string(header[c]) + "' in header", line_no);
    if (ds.schema.index_of(header[c])) throw DataError("duplicate variable '" + std::string(header[c]) + "' in header", line_no);
    ds.schema.variables.push_back(schema.variables[*idx]);
  }

  const std::size_t columns = header.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != columns) {
      throw DataError("expected " + std::to_string(columns) + " tab-separated columns, found " +
                          std::to_string(fields.size()),
                      line_no);
    }
    Record rec{std::string(fields[0]), {}, line_no};
    rec.scores.reserve(columns - 1);
    for (std::size_t c = 1; c < columns; ++c) {
      const auto& var = ds.schema.variables[c - 1];
      auto f = fields[c];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size()) {
        throw DataError("variable '" + var.name + "': not a decimal number '" + std::string(f) + "'", line_no);
      }
      if (strict && !var.contains(v)) {
        throw DataError("variable '" + var.name + "': value " + std::string(f) + " outside range " + range_text(var),
                        line_no);
      }
      rec.scores.push_back(v);
    }
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) throw DataError("dataset has no records");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const AnnotationSchema& schema, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  try {
    return parse_dataset(in, schema, strict);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<Violation> validate(const Dataset& dataset) {
  std::vector<Violation> out;
  const auto& vars = dataset.schema.variables;
  if (dataset.records.empty()) out.push_back({0, "", 0.0, 0.0, 0.0, "dataset has no records"});
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& rec = dataset.records[i];
    if (rec.scores.size() != vars.size()) {
      out.push_back({i, "", 0.0, 0.0, 0.0,
                     "record " + std::to_string(i) + ": " + std::to_string(rec.scores.size()) + " scores for " +
                         std::to_string(vars.size()) + " variables"});
      continue;
    }
    for (std::size_t j = 0; j < vars.size(); ++j) {
      const double v = rec.scores[j];
      if (vars[j].contains(v)) continue;  // false for NaN
      out.push_back({i, vars[j].name, v, vars[j].lo, vars[j].hi,
                     "record " + std::to_string(i) + (rec.line ? " (line " + std::to_string(rec.line) + ")" : "") +
                         ": " + vars[j].name + "=" + format_number(v) + " outside " + range_text(vars[j])});
    }
  }
  return out;
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  out << "text";
  for (const auto& v : dataset.schema.variables) out << '\t' << v.name;
  out << '\n';
  for (const auto& rec : dataset.records) {
    if (rec.text.find_first_of("\t\r\n") != std::string::npos) {
      throw DataError("record text contains a tab or newline: '" + rec.text + "'");
    }
    out << rec.text;
    for (double v : rec.scores) out << '\t' << format_number(v);
    out << '\n';
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(dataset, out);
}

}  // namespace affect
