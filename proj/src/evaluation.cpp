#include "affect/evaluation.hpp"

#include "affect/seeding.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace affect {

namespace {

constexpr std::uint64_t kModelSeedStream = 0x6d6f64656cULL;

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index c, const std::vector<std::size_t>* rows = nullptr) {
  std::vector<double> out;
  if (rows == nullptr) {
    out.resize(std::size_t(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[std::size_t(i)] = m(i, c);
  } else {
    out.reserve(rows->size());
    for (auto r : *rows) out.push_back(m(Eigen::Index(r), c));
  }
  return out;
}

void check_predictions(const Eigen::MatrixXd& pred, std::size_t rows, std::size_t cols) {
  if (std::size_t(pred.rows()) != rows || std::size_t(pred.cols()) != cols) {
    throw std::runtime_error("learner returned " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                             " predictions, expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

}  // namespace

PearsonResult pearson(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size()) {
    throw std::invalid_argument("pearson: length mismatch (" + std::to_string(pred.size()) + " vs " +
                                std::to_string(gold.size()) + ")");
  }
  if (pred.size() < 2) throw std::invalid_argument("pearson: need at least 2 points, got " + std::to_string(pred.size()));
  const double mp = mean_of(pred), mg = mean_of(gold);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i] - mp, dy = gold[i] - mg;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

double pearson_r(std::span<const double> pred, std::span<const double> gold) { return pearson(pred, gold).r; }

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_cdf: degrees of freedom must be > 0");
  return boost::math::cdf(boost::math::students_t_distribution<double>(df), t);
}

TTestResult one_sample_t_test(std::span<const double> samples, double mu0) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("t-test: need at least 2 samples");
  const double mean = mean_of(samples);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  if (ss == 0.0) throw std::invalid_argument("t-test: samples have zero variance");
  const double sd = std::sqrt(ss / double(n - 1));
  TTestResult res;
  res.df = double(n - 1);
  res.t = (mean - mu0) / (sd / std::sqrt(double(n)));
  const boost::math::students_t_distribution<double> dist(res.df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(res.t)));
  res.p = std::clamp(p, std::numeric_limits<double>::min(), 1.0);
  return res;
}

std::vector<std::size_t> CvPlan::test_indices(std::size_t rep, std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (fold_of.at(rep)[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> CvPlan::train_indices(std::size_t rep, std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (fold_of.at(rep)[i] != fold) out.push_back(i);
  return out;
}

std::uint64_t CvPlan::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  mix(n), mix(k), mix(reps);
  for (const auto& rep : fold_of)
    for (auto f : rep) mix(f);
  return h;
}

CvPlan plan_repeated_cv(std::size_t n, std::size_t k, std::size_t reps, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("cv plan: need at least 2 folds");
  if (n < k) {
    throw std::invalid_argument("cv plan: " + std::to_string(n) + " instances cannot fill " + std::to_string(k) + " folds");
  }
  if (reps < 1) throw std::invalid_argument("cv plan: need at least 1 repetition");
  CvPlan plan{n, k, reps, seed, {}};
  std::vector<std::size_t> perm(n);
  for (std::size_t r = 0; r < reps; ++r) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, r));
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::uint32_t> folds(n);
    for (std::size_t i = 0; i < n; ++i) folds[perm[i]] = static_cast<std::uint32_t>(i % k);
    plan.fold_of.push_back(std::move(folds));
  }
  return plan;
}

std::vector<double> EvalReport::variable_means() const {
  std::vector<double> sums(variables.size(), 0.0);
  std::vector<std::size_t> counts(variables.size(), 0);
  for (const auto& c : cells) {
    sums[c.variable] += c.r;
    ++counts[c.variable];
  }
  for (std::size_t v = 0; v < sums.size(); ++v) sums[v] = counts[v] ? sums[v] / double(counts[v]) : 0.0;
  return sums;
}

double EvalReport::grand_mean() const { return mean_of(variable_means()); }

std::vector<double> EvalReport::repetition_means() const {
  std::vector<double> sums(reps, 0.0);
  std::vector<std::size_t> counts(reps, 0);
  for (const auto& c : cells) {
    sums[c.rep] += c.r;
    ++counts[c.rep];
  }
  // Every (rep, fold) cell carries one entry per variable, so the flat mean
  // equals the mean over variables of per-variable fold means.
  for (std::size_t r = 0; r < reps; ++r) sums[r] = counts[r] ? sums[r] / double(counts[r]) : 0.0;
  return sums;
}

std::size_t EvalReport::degenerate_count() const {
  return std::size_t(std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return c.degenerate; }));
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = count;
  std::exception_ptr err;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> threads;
  for (std::size_t j = 0; j < std::min(jobs, count); ++j) threads.emplace_back(worker);
  threads.clear();
  if (err) std::rethrow_exception(err);
}

EvalReport run_repeated_cv(const CvPlan& plan, const Learner& learner, const Eigen::MatrixXd& gold,
                           std::vector<std::string> variables, std::size_t jobs) {
  if (std::size_t(gold.rows()) != plan.n) {
    throw std::invalid_argument("cv: plan covers " + std::to_string(plan.n) + " instances, dataset has " +
                                std::to_string(gold.rows()));
  }
  if (variables.size() != std::size_t(gold.cols())) throw std::invalid_argument("cv: variable names do not match gold columns");
  const std::size_t nv = variables.size();
  EvalReport report;
  report.variables = std::move(variables);
  report.reps = plan.reps;
  report.folds = plan.k;
  report.split_hash = plan.hash();
  report.cells.resize(plan.reps * plan.k * nv);

  parallel_for(plan.reps * plan.k, jobs, [&](std::size_t cell) {
    const std::size_t rep = cell / plan.k, fold = cell % plan.k;
    Split split{plan.train_indices(rep, fold), plan.test_indices(rep, fold),
                derive_seed(plan.seed ^ kModelSeedStream, cell)};
    const Eigen::MatrixXd pred = learner(split);
    check_predictions(pred, split.test.size(), nv);
    for (std::size_t v = 0; v < nv; ++v) {
      auto res = pearson(column(pred, Eigen::Index(v)), column(gold, Eigen::Index(v), &split.test));
      report.cells[cell * nv + v] = {rep, fold, v, res.r, res.degenerate};
    }
  });
  return report;
}

std::vector<double> FixedSplitReport::variable_means() const {
  std::vector<double> out(variables.size(), 0.0);
  for (const auto& row : per_seed)
    for (std::size_t v = 0; v < row.size(); ++v) out[v] += row[v] / double(per_seed.size());
  return out;
}

double FixedSplitReport::mean() const { return mean_of(variable_means()); }

std::vector<double> FixedSplitReport::seed_means() const {
  std::vector<double> out;
  for (const auto& row : per_seed) out.push_back(mean_of(row));
  return out;
}

FixedSplitReport run_fixed_split(const Learner& learner, const std::vector<std::size_t>& train,
                                 const std::vector<std::size_t>& test, const Eigen::MatrixXd& gold,
                                 std::vector<std::string> variables, std::span<const std::uint64_t> seeds,
                                 std::size_t jobs) {
  if (train.empty() || test.empty()) throw std::invalid_argument("fixed split: train and test must be non-empty");
  if (seeds.empty()) throw std::invalid_argument("fixed split: no seeds");
  std::vector<std::size_t> a = train, b = test;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  if (!common.empty()) {
    throw std::invalid_argument("fixed split: train and test overlap (" + std::to_string(common.size()) + " instances)");
  }
  const std::size_t nv = variables.size();
  if (nv != std::size_t(gold.cols())) throw std::invalid_argument("fixed split: variable names do not match gold columns");

  FixedSplitReport report;
  report.variables = std::move(variables);
  report.seeds.assign(seeds.begin(), seeds.end());
  report.per_seed.assign(seeds.size(), std::vector<double>(nv, 0.0));
  std::vector<std::vector<char>> degenerate(seeds.size(), std::vector<char>(nv, 0));
  parallel_for(seeds.size(), jobs, [&](std::size_t s) {
    const Split split{train, test, seeds[s]};
    const Eigen::MatrixXd pred = learner(split);
    check_predictions(pred, test.size(), nv);
    for (std::size_t v = 0; v < nv; ++v) {
      auto res = pearson(column(pred, Eigen::Index(v)), column(gold, Eigen::Index(v), &test));
      report.per_seed[s][v] = res.r;
      degenerate[s][v] = res.degenerate ? 1 : 0;
    }
  });
  report.degenerate_by_variable.assign(nv, 0);
  for (const auto& row : degenerate)
    for (std::size_t v = 0; v < nv; ++v) report.degenerate_by_variable[v] += std::size_t(row[v]);
  report.degenerate = std::accumulate(report.degenerate_by_variable.begin(), report.degenerate_by_variable.end(),
                                      std::size_t{0});
  return report;
}

std::vector<std::size_t> default_sweep_grid() {
  std::vector<std::size_t> grid{1};
  for (std::size_t n = 10; n <= 100; n += 10) grid.push_back(n);
  for (std::size_t n = 200; n <= 900; n += 100) grid.push_back(n);
  return grid;
}

double SweepReport::score(std::size_t model, std::size_t n_index, std::size_t rep) const {
  return scores.at((model * grid.size() + n_index) * reps + rep);
}

double SweepReport::mean(std::size_t model, std::size_t n_index) const {
  double s = 0.0;
  for (std::size_t r = 0; r < reps; ++r) s += score(model, n_index, r);
  return s / double(reps);
}

std::vector<std::size_t> sweep_sample(std::size_t n, std::size_t n_train, std::size_t rep, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(derive_seed(seed, n_train), rep));
  std::shuffle(perm.begin(), perm.end(), rng);
  perm.resize(n_train);
  std::sort(perm.begin(), perm.end());
  return perm;
}

SweepReport training_size_sweep(std::size_t n, const Eigen::MatrixXd& gold, std::span<const std::size_t> grid,
                                std::size_t reps, std::uint64_t seed, std::span<const NamedLearner> learners,
                                std::size_t jobs) {
  if (std::size_t(gold.rows()) != n) throw std::invalid_argument("sweep: gold rows do not match dataset size");
  if (reps < 1) throw std::invalid_argument("sweep: need at least 1 repetition");
  for (auto N : grid) {
    if (N < 1 || N >= n) {
      throw std::invalid_argument("sweep: training size " + std::to_string(N) + " must lie in [1, " +
                                  std::to_string(n - 1) + "]");
    }
  }
  SweepReport report;
  for (const auto& l : learners) report.models.push_back(l.name);
  report.grid.assign(grid.begin(), grid.end());
  report.reps = reps;
  report.scores.assign(learners.size() * grid.size() * reps, 0.0);
  const std::size_t nv = std::size_t(gold.cols());

  parallel_for(grid.size() * reps, jobs, [&](std::size_t cell) {
    const std::size_t gi = cell / reps, rep = cell % reps;
    Split split;
    split.train = sweep_sample(n, grid[gi], rep, seed);
    std::vector<bool> in_train(n, false);
    for (auto i : split.train) in_train[i] = true;
    for (std::size_t i = 0; i < n; ++i)
      if (!in_train[i]) split.test.push_back(i);
    split.seed = derive_seed(seed ^ kModelSeedStream, cell);
    for (std::size_t m = 0; m < learners.size(); ++m) {
      const Eigen::MatrixXd pred = learners[m].learner(split);
      check_predictions(pred, split.test.size(), nv);
      double total = 0.0;
      for (std::size_t v = 0; v < nv; ++v)
        total += pearson(column(pred, Eigen::Index(v)), column(gold, Eigen::Index(v), &split.test)).r;
      report.scores[(m * grid.size() + gi) * reps + rep] = total / double(nv);
    }
  });
  return report;
}

}  // namespace affect
