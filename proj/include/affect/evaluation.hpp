#pragma once

// Scoring and resampling protocols: Pearson r, repeated k-fold CV,
// fixed-split evaluation over seeds, training-size sweeps and the
// one-sample t-test. Models enter only through the Learner callback, so the
// protocols are independent of what is being evaluated.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace affect {

struct PearsonResult {
  double r = 0.0;
  bool degenerate = false;  // one side had zero variance; r is reported as 0
};

// Sample Pearson correlation. Throws std::invalid_argument on length
// mismatch or fewer than two points.
PearsonResult pearson(std::span<const double> pred, std::span<const double> gold);
double pearson_r(std::span<const double> pred, std::span<const double> gold);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-tailed, in (0, 1]
};

double student_t_cdf(double t, double df);
// t = (mean − mu0)/(s/√n) with n − 1 degrees of freedom.
TTestResult one_sample_t_test(std::span<const double> samples, double mu0);

// Seeded fold assignments shared by every model under comparison.
struct CvPlan {
  std::size_t n = 0;
  std::size_t k = 10;
  std::size_t reps = 10;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::uint32_t>> fold_of;  // reps × n

  std::vector<std::size_t> test_indices(std::size_t rep, std::size_t fold) const;
  std::vector<std::size_t> train_indices(std::size_t rep, std::size_t fold) const;
  // FNV-1a over all assignments; equal plans hash equal.
  std::uint64_t hash() const;
};

// Per repetition: a seeded shuffle of 0..n−1 dealt round-robin into k folds.
CvPlan plan_repeated_cv(std::size_t n, std::size_t k = 10, std::size_t reps = 10, std::uint64_t seed = 0);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;  // for model initialization and training
};

// Trains on split.train and returns |test| × n_targets predictions.
using Learner = std::function<Eigen::MatrixXd(const Split&)>;

struct CellResult {
  std::size_t rep = 0;
  std::size_t fold = 0;
  std::size_t variable = 0;
  double r = 0.0;
  bool degenerate = false;
};

struct EvalReport {
  std::vector<std::string> variables;
  std::size_t reps = 0;
  std::size_t folds = 0;
  std::uint64_t split_hash = 0;
  std::vector<CellResult> cells;  // ordered by (rep, fold, variable)

  std::vector<double> variable_means() const;
  // Mean over variables of the per-variable means.
  double grand_mean() const;
  // For each repetition, mean over its folds, then over variables.
  std::vector<double> repetition_means() const;
  std::size_t degenerate_count() const;
};

// Runs `jobs` worker threads over (rep, fold) cells; results do not depend on
// completion order.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& body);

EvalReport run_repeated_cv(const CvPlan& plan, const Learner& learner, const Eigen::MatrixXd& gold,
                           std::vector<std::string> variables, std::size_t jobs = 1);

struct FixedSplitReport {
  std::vector<std::string> variables;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> per_seed;  // seeds × variables
  std::size_t degenerate = 0;
  std::vector<std::size_t> degenerate_by_variable;

  std::vector<double> variable_means() const;
  double mean() const;
  // Mean over variables for each seed.
  std::vector<double> seed_means() const;
};

FixedSplitReport run_fixed_split(const Learner& learner, const std::vector<std::size_t>& train,
                                 const std::vector<std::size_t>& test, const Eigen::MatrixXd& gold,
                                 std::vector<std::string> variables, std::span<const std::uint64_t> seeds,
                                 std::size_t jobs = 1);

// {1, 10, 20, ..., 100, 200, ..., 900}.
std::vector<std::size_t> default_sweep_grid();

struct NamedLearner {
  std::string name;
  Learner learner;
};

struct SweepReport {
  std::vector<std::string> models;
  std::vector<std::size_t> grid;
  std::size_t reps = 0;
  // models × grid × reps, each the mean r over variables on the held-out rest.
  std::vector<double> scores;

  double score(std::size_t model, std::size_t n_index, std::size_t rep) const;
  double mean(std::size_t model, std::size_t n_index) const;
};

// For each N and repetition, samples N training rows without replacement
// and tests on the complement; every model sees the same samples.
SweepReport training_size_sweep(std::size_t n, const Eigen::MatrixXd& gold, std::span<const std::size_t> grid,
                                std::size_t reps, std::uint64_t seed, std::span<const NamedLearner> learners,
                                std::size_t jobs = 1);
// The training indices used for (N, rep) by training_size_sweep.
std::vector<std::size_t> sweep_sample(std::size_t n, std::size_t n_train, std::size_t rep, std::uint64_t seed);

}  // namespace affect
