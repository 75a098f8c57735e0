#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace affect {

enum class AnnotationFormat { vad, be4, be5, be6, custom };

std::string_view to_string(AnnotationFormat format);

struct VariableRange {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const VariableRange&, const VariableRange&) = default;
};

struct AnnotationSchema {
  AnnotationFormat format = AnnotationFormat::custom;
  std::vector<VariableRange> variables;

  static AnnotationSchema vad();  // valence, arousal, dominance on [1, 9]
  static AnnotationSchema be4();  // joy, anger, sadness, fear on [0, 1]
  static AnnotationSchema be5();  // BE4 + disgust on [1, 5]
  static AnnotationSchema be6();  // BE5 + surprise on [0, 100]
  static AnnotationSchema vad_be5();  // VAD [1, 9] followed by BE5 [1, 5]

  // Accepts a preset name (vad, be4, be5, be6, vad+be5) or a custom list
  // "name:lo:hi,name:lo:hi,...".
  static AnnotationSchema parse(std::string_view spec);

  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<std::string> names() const;

  friend bool operator==(const AnnotationSchema&, const AnnotationSchema&) = default;
};

struct Record {
  std::string text;
  std::vector<double> scores;  // aligned with the dataset schema's variables
  std::size_t line = 0;        // 1-based source line, 0 when not loaded from a file

  // Equality ignores provenance.
  friend bool operator==(const Record& a, const Record& b) { return a.text == b.text && a.scores == b.scores; }
};

// Records plus the schema restricted to the variables actually present in
// the source header, in header order.
struct Dataset {
  AnnotationSchema schema;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
  std::size_t n_targets() const { return schema.variables.size(); }
  // size() × n_targets() gold matrix.
  Eigen::MatrixXd gold() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

class DataError : public std::runtime_error {
 public:
  DataError(const std::string& message, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Violation {
  std::size_t record = 0;
  std::string variable;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::string message;
};

// Parses the tab-separated format: a header "text<TAB>var..." followed by
// one record per line. Variables must belong to `schema`. In strict mode an
// out-of-range or NaN score raises DataError naming the line and variable;
// otherwise such values are kept for validate() to report.
Dataset parse_dataset(std::istream& in, const AnnotationSchema& schema, bool strict = true);
Dataset load_dataset(const std::filesystem::path& path, const AnnotationSchema& schema, bool strict = true);

// Violations in record order, then variable order.
std::vector<Violation> validate(const Dataset& dataset);

// Inverse of parse_dataset. Texts containing tabs or newlines are rejected.
void write_dataset(const Dataset& dataset, std::ostream& out);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace affect
