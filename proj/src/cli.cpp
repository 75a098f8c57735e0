#include "affect/cli.hpp"

#include "affect/experiment.hpp"
#include "affect/seeding.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

namespace affect::cli {

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string data;
  std::string schema = "vad";
  bool lenient = false;
  std::string embeddings;
  std::string embeddings_format;
  bool vocab_filter = true;
  std::string models;
  std::string strategy = "frozen";
  std::string strategies = "frozen,tuned,learned";
  std::size_t folds = 10;
  std::size_t reps = 10;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double clip_norm = 0.0;
  std::size_t learned_dim = 300;
  bool per_variable = false;
  std::string trace;
  std::string out;
  std::string grid;
  // fixed
  std::string train;
  std::string test;
  std::size_t seeds = 10;
  // ttest
  std::string results;
  std::optional<double> mu0;
  std::string model;
  std::string filter_strategy;
};

const char* kAllModels = "ridge_ngram,ridge_bv,ffn,cnn,gru,lstm,cnn_lstm";
const char* kNeuralModels = "ffn,cnn,gru,lstm,cnn_lstm";

std::string fmt(double v) {
  if (v == 0.0) v = 0.0;  // no negative zero
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<ModelKind> parse_models(const std::string& list) {
  std::vector<ModelKind> out;
  for (const auto& name : split_list(list)) {
    auto k = parse_model_kind(name);
    if (!k) throw ConfigError("unknown model kind '" + name + "'");
    if (std::find(out.begin(), out.end(), *k) == out.end()) out.push_back(*k);
  }
  if (out.empty()) throw ConfigError("no models requested");
  return out;
}

std::vector<EmbeddingStrategy> parse_strategies(const std::string& list) {
  std::vector<EmbeddingStrategy> out;
  for (const auto& name : split_list(list)) {
    auto s = parse_strategy(name);
    if (!s) throw ConfigError("unknown embedding strategy '" + name + "'");
    if (std::find(out.begin(), out.end(), *s) == out.end()) out.push_back(*s);
  }
  if (out.empty()) throw ConfigError("no strategies requested");
  return out;
}

std::filesystem::path sidecar(const std::string& out, const std::string& suffix) {
  std::filesystem::path p(out);
  std::string stem = p.extension() == ".csv" ? p.stem().string() : p.filename().string();
  return p.parent_path() / (stem + suffix);
}

// Applies key=value lines to options not given on the command line.
void apply_config(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#' || line[first] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(0, key.find_first_not_of(" \t-"));
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t") + 1);
    if (key == "config") throw ConfigError(path + ":" + std::to_string(lineno) + ": config files cannot nest");
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void add_data(CLI::App& sub, Options& o) {
  sub.add_option("--data", o.data, "Dataset TSV (text column plus one column per variable)");
  sub.add_option("--schema", o.schema, "Annotation schema: vad, be4, be5, be6, vad_be5 or name:lo:hi,...")
      ->capture_default_str();
  sub.add_flag("--lenient", o.lenient, "Accept out-of-range scores instead of failing");
}

void add_embeddings(CLI::App& sub, Options& o) {
  sub.add_option("--embeddings", o.embeddings, "Pre-trained embedding file");
  sub.add_option("--embeddings-format", o.embeddings_format, "word2vec-bin or fasttext-text (default: by extension)");
  sub.add_flag("--vocab-filter,!--no-vocab-filter", o.vocab_filter,
               "Load only embedding rows for tokens occurring in the data (default on)");
}

void add_training(CLI::App& sub, Options& o) {
  sub.add_option("--seed", o.seed, "Base seed")->capture_default_str();
  sub.add_option("--jobs", o.jobs, "Parallel train/test executions")->capture_default_str()->check(CLI::PositiveNumber);
  sub.add_option("--max-len", o.max_len, "Sequence length for neural inputs")->capture_default_str()->check(CLI::PositiveNumber);
  sub.add_option("--epochs", o.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  sub.add_option("--batch-size", o.batch_size, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
  sub.add_option("--lr", o.learning_rate, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  sub.add_option("--clip-norm", o.clip_norm, "Global gradient-norm clip, 0 = off")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub.add_option("--learned-dim", o.learned_dim, "Embedding dimension for the learned strategy without --embeddings")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub.add_flag("--per-variable", o.per_variable, "Train one network per variable");
  sub.add_option("--trace", o.trace, "Directory for per-network loss traces");
}

void add_output(CLI::App& sub, Options& o) { sub.add_option("--out", o.out, "Output CSV path"); }

void add_config(CLI::App& sub, Options& o) { sub.add_option("--config", o.config, "key=value file; flags take precedence"); }

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ConfigError(flag + " is required");
}

AnnotationSchema schema_of(const Options& o) {
  try {
    return AnnotationSchema::parse(o.schema);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad --schema: ") + e.what());
  }
}

Dataset load_data(const std::string& path, const Options& o) {
  if (!std::filesystem::exists(path)) throw ConfigError("data file not found: " + path);
  return load_dataset(path, schema_of(o), !o.lenient);
}

EmbeddingTable load_table(const Options& o, const Corpus* corpus, std::ostream& err) {
  if (!std::filesystem::exists(o.embeddings)) throw ConfigError("embeddings file not found: " + o.embeddings);
  std::string format = o.embeddings_format;
  if (format.empty()) format = std::filesystem::path(o.embeddings).extension() == ".bin" ? "word2vec-bin" : "fasttext-text";
  std::unordered_set<std::string> keep;
  std::vector<std::string> warnings;
  EmbeddingLoadOptions opts;
  opts.fold_case = true;
  opts.warnings = &warnings;
  if (o.vocab_filter && corpus != nullptr) {
    keep = corpus->token_set();
    opts.keep = &keep;
  }
  EmbeddingTable table(1, EmbeddingSource::random);
  if (format == "word2vec-bin") {
    table = load_word2vec_bin(o.embeddings, opts);
  } else if (format == "fasttext-text") {
    table = load_fasttext_text(o.embeddings, opts);
  } else {
    throw ConfigError("unknown --embeddings-format '" + format + "'");
  }
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  return table;
}

LearnerOptions learner_options(const Options& o, ModelKind kind, EmbeddingStrategy strategy) {
  LearnerOptions lo;
  lo.kind = kind;
  lo.strategy = strategy;
  lo.max_len = o.max_len;
  lo.learned_dim = o.learned_dim;
  lo.per_variable = o.per_variable;
  lo.train.epochs = o.epochs;
  lo.train.batch_size = o.batch_size;
  lo.train.learning_rate = o.learning_rate;
  lo.train.clip_norm = o.clip_norm;
  lo.train.strategy = strategy;
  if (!o.trace.empty()) {
    std::filesystem::create_directories(o.trace);
    lo.trace_dir = o.trace;
    lo.trace_tag = std::string(to_string(kind));
  }
  return lo;
}

// Resolved configuration as one comment line. Output paths, parallelism and
// trace locations are left out so that they cannot change the bytes written.
std::string header(const std::string& command, const Options& o, const std::vector<std::string>& extra = {}) {
  std::ostringstream s;
  s << "# affect " << command;
  auto kv = [&](const char* k, const std::string& v) {
    if (!v.empty()) s << ' ' << k << '=' << v;
  };
  kv("data", o.data);
  kv("train", o.train);
  kv("test", o.test);
  kv("schema", o.schema);
  kv("lenient", o.lenient ? "true" : "false");
  kv("embeddings", o.embeddings);
  kv("embeddings-format", o.embeddings_format);
  kv("vocab-filter", o.vocab_filter ? "true" : "false");
  kv("models", o.models);
  kv("seed", std::to_string(o.seed));
  kv("max-len", std::to_string(o.max_len));
  kv("epochs", std::to_string(o.epochs));
  kv("batch-size", std::to_string(o.batch_size));
  kv("lr", fmt(o.learning_rate));
  kv("clip-norm", fmt(o.clip_norm));
  kv("learned-dim", std::to_string(o.learned_dim));
  kv("per-variable", o.per_variable ? "true" : "false");
  for (const auto& e : extra) s << ' ' << e;
  return s.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

struct Loaded {
  Corpus corpus;
  std::optional<EmbeddingTable> table;
};

Loaded load_inputs(const Options& o, Dataset dataset, bool need_table, std::ostream& err) {
  Loaded l{make_corpus(std::move(dataset)), std::nullopt};
  if (need_table) {
    if (o.embeddings.empty()) throw ConfigError("--embeddings is required for the requested models");
    l.table = load_table(o, &l.corpus, err);
    if (l.table->vocab_size() == 0) err << "warning: no dataset token found in " << o.embeddings << '\n';
  } else if (!o.embeddings.empty()) {
    l.table = load_table(o, &l.corpus, err);
  }
  return l;
}

int cmd_cv(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.data, "--data");
  require(o.out, "--out");
  const auto models = parse_models(o.models.empty() ? kAllModels : o.models);
  const auto strategy = parse_strategies(o.strategy).front();
  bool need = false;
  for (auto m : models) need = need || needs_embeddings(m, strategy);
  Loaded in = load_inputs(o, load_data(o.data, o), need, err);
  const std::size_t n = in.corpus.size();
  if (n < o.folds) throw ConfigError(std::to_string(n) + " instances cannot fill " + std::to_string(o.folds) + " folds");
  if (o.folds < 2 || o.reps < 1) throw ConfigError("--folds must be >= 2 and --reps >= 1");
  const CvPlan plan = plan_repeated_cv(n, o.folds, o.reps, o.seed);
  const auto names = in.corpus.dataset.schema.names();
  const EmbeddingTable* table = in.table ? &*in.table : nullptr;

  std::vector<std::pair<ModelKind, EvalReport>> reports;
  for (auto m : models) {
    const Learner learner = make_learner(in.corpus, table, learner_options(o, m, strategy));
    reports.emplace_back(m, run_repeated_cv(plan, learner, in.corpus.gold, names, o.jobs));
  }

  const std::string hdr = header("cv", o,
                                 {"strategy=" + std::string(to_string(strategy)), "folds=" + std::to_string(o.folds),
                                  "reps=" + std::to_string(o.reps)});
  auto agg = open_out(o.out);
  agg << hdr << "\nmodel,variable,mean_r,degenerate_cells,split_hash\n";
  auto folds = open_out(sidecar(o.out, ".folds.csv"));
  folds << hdr << "\nmodel,repetition,fold,variable,r,degenerate\n";
  auto reps = open_out(sidecar(o.out, ".reps.csv"));
  reps << hdr << "\nmodel,repetition,mean_r\n";
  for (const auto& [kind, rep] : reports) {
    const std::string m(to_string(kind));
    const auto vm = rep.variable_means();
    for (std::size_t v = 0; v < names.size(); ++v) {
      std::size_t deg = 0;
      for (const auto& c : rep.cells) deg += (c.variable == v && c.degenerate) ? 1 : 0;
      agg << m << ',' << names[v] << ',' << fmt(vm[v]) << ',' << deg << ',' << hex(rep.split_hash) << '\n';
    }
    agg << m << ",MEAN," << fmt(rep.grand_mean()) << ',' << rep.degenerate_count() << ',' << hex(rep.split_hash) << '\n';
    for (const auto& c : rep.cells) {
      folds << m << ',' << c.rep + 1 << ',' << c.fold + 1 << ',' << names[c.variable] << ',' << fmt(c.r) << ','
            << (c.degenerate ? 1 : 0) << '\n';
    }
    const auto rm = rep.repetition_means();
    for (std::size_t r = 0; r < rm.size(); ++r) reps << m << ',' << r + 1 << ',' << fmt(rm[r]) << '\n';
    out << m << ": mean r = " << fmt(rep.grand_mean());
    if (rep.degenerate_count()) out << " (" << rep.degenerate_count() << " zero-variance cells)";
    out << '\n';
  }
  return kExitOk;
}

int cmd_strategies(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.data, "--data");
  require(o.out, "--out");
  const auto models = parse_models(o.models.empty() ? kNeuralModels : o.models);
  for (auto m : models) {
    if (!is_neural(m)) {
      throw ConfigError("embedding strategies are only applicable to neural models, not " + std::string(to_string(m)));
    }
  }
  const auto strategies = parse_strategies(o.strategies);
  bool need = false;
  for (auto s : strategies) need = need || s != EmbeddingStrategy::learned;
  Loaded in = load_inputs(o, load_data(o.data, o), need, err);
  const std::size_t n = in.corpus.size();
  if (n < o.folds) throw ConfigError(std::to_string(n) + " instances cannot fill " + std::to_string(o.folds) + " folds");
  if (o.folds < 2 || o.reps < 1) throw ConfigError("--folds must be >= 2 and --reps >= 1");
  const CvPlan plan = plan_repeated_cv(n, o.folds, o.reps, o.seed);
  const auto names = in.corpus.dataset.schema.names();
  const EmbeddingTable* table = in.table ? &*in.table : nullptr;

  const std::string hdr = header("strategies", o,
                                 {"strategies=" + o.strategies, "folds=" + std::to_string(o.folds),
                                  "reps=" + std::to_string(o.reps)});
  auto csv = open_out(o.out);
  csv << hdr << "\nstrategy";
  for (auto m : models) csv << ',' << to_string(m);
  csv << ",Mean\n";
  auto reps = open_out(sidecar(o.out, ".reps.csv"));
  reps << hdr << "\nmodel,strategy,repetition,mean_r\n";
  for (auto s : strategies) {
    csv << to_string(s);
    double total = 0.0;
    for (auto m : models) {
      const Learner learner = make_learner(in.corpus, table, learner_options(o, m, s));
      const EvalReport rep = run_repeated_cv(plan, learner, in.corpus.gold, names, o.jobs);
      csv << ',' << fmt(rep.grand_mean());
      total += rep.grand_mean();
      const auto rm = rep.repetition_means();
      for (std::size_t r = 0; r < rm.size(); ++r)
        reps << to_string(m) << ',' << to_string(s) << ',' << r + 1 << ',' << fmt(rm[r]) << '\n';
    }
    const double mean = total / double(models.size());
    csv << ',' << fmt(mean) << '\n';
    out << to_string(s) << ": mean r = " << fmt(mean) << '\n';
  }
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.data, "--data");
  require(o.out, "--out");
  const auto models = parse_models(o.models.empty() ? kAllModels : o.models);
  const auto strategy = parse_strategies(o.strategy).front();
  std::vector<std::size_t> grid;
  if (o.grid.empty()) {
    grid = default_sweep_grid();
  } else {
    for (const auto& item : split_list(o.grid)) {
      std::size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(item, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != item.size() || v == 0) throw ConfigError("bad --grid entry '" + item + "'");
      grid.push_back(std::size_t(v));
    }
  }
  if (o.reps < 1) throw ConfigError("--reps must be >= 1");
  bool need = false;
  for (auto m : models) need = need || needs_embeddings(m, strategy);
  Dataset dataset = load_data(o.data, o);
  for (auto N : grid) {
    if (N >= dataset.size()) {
      throw ConfigError("training size " + std::to_string(N) + " must be smaller than the dataset (" +
                        std::to_string(dataset.size()) + " instances)");
    }
  }
  Loaded in = load_inputs(o, std::move(dataset), need, err);
  const EmbeddingTable* table = in.table ? &*in.table : nullptr;
  std::vector<NamedLearner> learners;
  for (auto m : models)
    learners.push_back({std::string(to_string(m)), make_learner(in.corpus, table, learner_options(o, m, strategy))});
  const SweepReport rep =
      training_size_sweep(in.corpus.size(), in.corpus.gold, grid, o.reps, o.seed, learners, o.jobs);

  std::string grid_str;
  for (auto N : grid) grid_str += (grid_str.empty() ? "" : ",") + std::to_string(N);
  const std::string hdr = header("sweep", o,
                                 {"strategy=" + std::string(to_string(strategy)), "grid=" + grid_str,
                                  "reps=" + std::to_string(o.reps)});
  auto csv = open_out(o.out);
  csv << hdr << "\nmodel,N,mean_r,n_reps\n";
  auto reps = open_out(sidecar(o.out, ".reps.csv"));
  reps << hdr << "\nmodel,N,repetition,mean_r\n";
  for (std::size_t m = 0; m < rep.models.size(); ++m) {
    for (std::size_t g = 0; g < rep.grid.size(); ++g) {
      csv << rep.models[m] << ',' << rep.grid[g] << ',' << fmt(rep.mean(m, g)) << ',' << rep.reps << '\n';
      for (std::size_t r = 0; r < rep.reps; ++r)
        reps << rep.models[m] << ',' << rep.grid[g] << ',' << r + 1 << ',' << fmt(rep.score(m, g, r)) << '\n';
    }
    out << rep.models[m] << ": " << rep.grid.size() << " training sizes x " << rep.reps << " repetitions\n";
  }
  return kExitOk;
}

int cmd_fixed(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.train, "--train");
  require(o.test, "--test");
  require(o.out, "--out");
  if (o.seeds < 1) throw ConfigError("--seeds must be >= 1");
  const auto models = parse_models(o.models.empty() ? kAllModels : o.models);
  const auto strategy = parse_strategies(o.strategy).front();
  Dataset train = load_data(o.train, o);
  Dataset test = load_data(o.test, o);
  if (train.schema != test.schema) throw DataError("train and test files carry different variables");
  std::set<std::string> train_texts;
  for (const auto& r : train.records) train_texts.insert(r.text);
  for (const auto& r : test.records) {
    if (train_texts.count(r.text)) throw DataError("test instance also occurs in the training data", r.line);
  }
  std::vector<std::size_t> train_idx(train.size()), test_idx(test.size());
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::iota(test_idx.begin(), test_idx.end(), train.size());
  Dataset merged = std::move(train);
  merged.records.insert(merged.records.end(), test.records.begin(), test.records.end());
  bool need = false;
  for (auto m : models) need = need || needs_embeddings(m, strategy);
  Loaded in = load_inputs(o, std::move(merged), need, err);
  const EmbeddingTable* table = in.table ? &*in.table : nullptr;
  const auto names = in.corpus.dataset.schema.names();
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < o.seeds; ++s) seeds.push_back(derive_seed(o.seed, s));

  const std::string hdr = header("fixed", o,
                                 {"strategy=" + std::string(to_string(strategy)), "seeds=" + std::to_string(o.seeds)});
  auto csv = open_out(o.out);
  csv << hdr << "\nmodel,variable,mean_r,degenerate,n_seeds\n";
  auto reps = open_out(sidecar(o.out, ".reps.csv"));
  reps << hdr << "\nmodel,repetition,seed,mean_r\n";
  for (auto m : models) {
    const Learner learner = make_learner(in.corpus, table, learner_options(o, m, strategy));
    const FixedSplitReport rep = run_fixed_split(learner, train_idx, test_idx, in.corpus.gold, names, seeds, o.jobs);
    const std::string name(to_string(m));
    const auto vm = rep.variable_means();
    for (std::size_t v = 0; v < names.size(); ++v) {
      csv << name << ',' << names[v] << ',' << fmt(vm[v]) << ',' << rep.degenerate_by_variable[v] << ',' << seeds.size()
          << '\n';
    }
    csv << name << ",MEAN," << fmt(rep.mean()) << ',' << rep.degenerate << ',' << seeds.size() << '\n';
    const auto sm = rep.seed_means();
    for (std::size_t s = 0; s < sm.size(); ++s) reps << name << ',' << s + 1 << ',' << seeds[s] << ',' << fmt(sm[s]) << '\n';
    out << name << ": mean r = " << fmt(rep.mean()) << '\n';
  }
  return kExitOk;
}

int cmd_ttest(const Options& o, std::ostream& out, std::ostream& err, const CLI::App& sub) {
  if (o.results.empty() || !o.mu0) {
    err << sub.help();
    throw ConfigError(o.results.empty() ? "--results is required" : "--mu0 is required");
  }
  std::filesystem::path path = o.results;
  if (!std::filesystem::exists(path)) throw ConfigError("results file not found: " + path.string());

  auto read_table = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> cells;
      std::stringstream s(line);
      std::string cell;
      while (std::getline(s, cell, ',')) cells.push_back(cell);
      if (!line.empty() && line.back() == ',') cells.emplace_back();
      rows.push_back(std::move(cells));
    }
    return rows;
  };
  auto rows = read_table(path);
  auto has = [](const std::vector<std::string>& h, const char* c) { return std::find(h.begin(), h.end(), c) != h.end(); };
  if (rows.empty() || !has(rows[0], "repetition")) {
    const auto alt = sidecar(path.string(), ".reps.csv");
    if (std::filesystem::exists(alt)) {
      path = alt;
      rows = read_table(path);
    }
  }
  if (rows.empty() || !has(rows[0], "repetition") || !has(rows[0], "mean_r")) {
    throw DataError("results file has no per-repetition means (columns repetition, mean_r): " + path.string());
  }
  const auto& h = rows[0];
  auto col = [&](const char* name) -> std::optional<std::size_t> {
    auto it = std::find(h.begin(), h.end(), name);
    return it == h.end() ? std::nullopt : std::optional<std::size_t>(std::size_t(it - h.begin()));
  };
  const auto c_model = col("model"), c_strategy = col("strategy"), c_n = col("N");
  const std::size_t c_r = *col("mean_r");
  std::vector<double> samples;
  std::set<std::string> groups;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != h.size()) throw DataError("malformed row in " + path.string(), i + 1);
    if (!o.model.empty() && c_model && r[*c_model] != o.model) continue;
    if (!o.filter_strategy.empty() && c_strategy && r[*c_strategy] != o.filter_strategy) continue;
    std::string group = (c_model ? r[*c_model] : "") + "|" + (c_strategy ? r[*c_strategy] : "") + "|" + (c_n ? r[*c_n] : "");
    groups.insert(group);
    try {
      samples.push_back(std::stod(r[c_r]));
    } catch (const std::exception&) {
      throw DataError("non-numeric mean_r '" + r[c_r] + "' in " + path.string(), i + 1);
    }
  }
  if (groups.size() > 1) throw ConfigError("results mix several models or settings; select one with --model/--strategy");
  if (samples.size() < 2) {
    throw ConfigError("need at least 2 repetition means, found " + std::to_string(samples.size()));
  }
  TTestResult res;
  try {
    res = one_sample_t_test(samples, *o.mu0);
  } catch (const std::invalid_argument&) {
    // All repetitions agree: no evidence against mu0 when they equal it.
    const double m = samples.front();
    if (m != *o.mu0) throw ConfigError("repetition means have zero variance; t is undefined");
    res = {0.0, double(samples.size() - 1), 1.0};
  }
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / double(samples.size());
  std::ostringstream line;
  line << "ttest";
  if (!o.model.empty()) line << " model=" << o.model;
  if (!o.filter_strategy.empty()) line << " strategy=" << o.filter_strategy;
  line << " n=" << samples.size() << " mean=" << fmt(mean) << " mu0=" << fmt(*o.mu0) << " t=" << fmt(res.t)
       << " df=" << fmt(res.df) << " p=" << fmt(res.p);
  out << line.str() << '\n';
  std::ofstream app(path, std::ios::app | std::ios::binary);
  if (!app) throw ConfigError("cannot append to " + path.string());
  app << "# " << line.str() << '\n';
  return kExitOk;
}

int cmd_validate(const Options& o, std::ostream& out) {
  require(o.data, "--data");
  if (!std::filesystem::exists(o.data)) throw ConfigError("data file not found: " + o.data);
  const Dataset ds = load_dataset(o.data, schema_of(o), false);
  const auto violations = validate(ds);
  for (const auto& v : violations) out << v.message << '\n';
  if (!violations.empty()) {
    out << violations.size() << " violation(s) in " << ds.size() << " records\n";
    return kExitData;
  }
  out << "ok: " << ds.size() << " records;";
  for (const auto& v : ds.schema.variables) out << ' ' << v.name << '[' << fmt(v.lo) << ',' << fmt(v.hi) << ']';
  out << '\n';
  return kExitOk;
}

int cmd_embed_info(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.embeddings, "--embeddings");
  const EmbeddingTable t = load_table(o, nullptr, err);
  out << "source: " << to_string(t.source()) << "\nvocab: " << t.vocab_size() << "\ndim: " << t.dim() << '\n';
  const std::size_t show = std::min<std::size_t>(5, t.vocab_size());
  if (show > 0) {
    out << "first tokens:";
    for (std::size_t i = 0; i < show; ++i) out << ' ' << t.tokens()[i];
    out << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Emotion regression experiments: cross-validation, embedding strategies, training-size sweeps, t-tests"};
  app.name("affect");
  app.require_subcommand(1);

  Options cv_o, st_o, sw_o, fx_o, tt_o, va_o, ei_o;
  sw_o.reps = 100;

  auto* cv = app.add_subcommand("cv", "Repeated k-fold cross-validation over model kinds");
  add_config(*cv, cv_o);
  add_data(*cv, cv_o);
  add_embeddings(*cv, cv_o);
  cv->add_option("--models", cv_o.models, std::string("Comma-separated model kinds (default ") + kAllModels + ")");
  cv->add_option("--strategy", cv_o.strategy, "frozen, tuned or learned")->capture_default_str();
  cv->add_option("--folds", cv_o.folds, "Folds per repetition")->capture_default_str();
  cv->add_option("--reps", cv_o.reps, "Repetitions")->capture_default_str();
  add_training(*cv, cv_o);
  add_output(*cv, cv_o);

  auto* st = app.add_subcommand("strategies", "Compare frozen, tuned and learned embeddings under cross-validation");
  add_config(*st, st_o);
  add_data(*st, st_o);
  add_embeddings(*st, st_o);
  st->add_option("--models", st_o.models, std::string("Neural model kinds (default ") + kNeuralModels + ")");
  st->add_option("--strategies", st_o.strategies, "Comma-separated strategies")->capture_default_str();
  st->add_option("--folds", st_o.folds, "Folds per repetition")->capture_default_str();
  st->add_option("--reps", st_o.reps, "Repetitions")->capture_default_str();
  add_training(*st, st_o);
  add_output(*st, st_o);

  auto* sw = app.add_subcommand("sweep", "Performance against training-set size");
  add_config(*sw, sw_o);
  add_data(*sw, sw_o);
  add_embeddings(*sw, sw_o);
  sw->add_option("--models", sw_o.models, "Comma-separated model kinds");
  sw->add_option("--strategy", sw_o.strategy, "frozen, tuned or learned")->capture_default_str();
  sw->add_option("--grid", sw_o.grid, "Comma-separated training sizes (default 1,10,...,100,200,...,900)");
  sw->add_option("--reps", sw_o.reps, "Samples per training size")->capture_default_str();
  add_training(*sw, sw_o);
  add_output(*sw, sw_o);

  auto* fx = app.add_subcommand("fixed", "Train on one file, test on another, over several seeds");
  add_config(*fx, fx_o);
  fx->add_option("--train", fx_o.train, "Training TSV (merge train and dev beforehand)");
  fx->add_option("--test", fx_o.test, "Test TSV");
  fx->add_option("--schema", fx_o.schema, "Annotation schema")->capture_default_str();
  fx->add_flag("--lenient", fx_o.lenient, "Accept out-of-range scores");
  add_embeddings(*fx, fx_o);
  fx->add_option("--models", fx_o.models, "Comma-separated model kinds");
  fx->add_option("--strategy", fx_o.strategy, "frozen, tuned or learned")->capture_default_str();
  fx->add_option("--seeds", fx_o.seeds, "Number of seeds")->capture_default_str();
  add_training(*fx, fx_o);
  add_output(*fx, fx_o);

  auto* tt = app.add_subcommand("ttest", "Two-tailed one-sample t-test over per-repetition means");
  add_config(*tt, tt_o);
  tt->add_option("--results", tt_o.results, "Results CSV or its .reps.csv sidecar");
  tt->add_option("--mu0", tt_o.mu0, "Reference mean (required)");
  tt->add_option("--model", tt_o.model, "Restrict to one model");
  tt->add_option("--strategy", tt_o.filter_strategy, "Restrict to one strategy");

  auto* va = app.add_subcommand("validate", "Check a dataset against its annotation schema");
  add_config(*va, va_o);
  add_data(*va, va_o);

  auto* ei = app.add_subcommand("embed-info", "Summarize an embedding file");
  add_config(*ei, ei_o);
  add_embeddings(*ei, ei_o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kExitConfig;
  }

  try {
    auto run_sub = [&](CLI::App* sub, Options& o) {
      if (!o.config.empty()) apply_config(*sub, o.config);
    };
    if (cv->parsed()) return run_sub(cv, cv_o), cmd_cv(cv_o, out, err);
    if (st->parsed()) return run_sub(st, st_o), cmd_strategies(st_o, out, err);
    if (sw->parsed()) return run_sub(sw, sw_o), cmd_sweep(sw_o, out, err);
    if (fx->parsed()) return run_sub(fx, fx_o), cmd_fixed(fx_o, out, err);
    if (tt->parsed()) return run_sub(tt, tt_o), cmd_ttest(tt_o, out, err, *tt);
    if (va->parsed()) return run_sub(va, va_o), cmd_validate(va_o, out);
    if (ei->parsed()) return run_sub(ei, ei_o), cmd_embed_info(ei_o, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const EmbeddingError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace affect::cli
