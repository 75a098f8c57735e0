#include "affect/evaluation.hpp"
#include "affect/experiment.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

using namespace affect;

namespace {

Eigen::MatrixXd random_gold(std::size_t n, std::size_t t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(Eigen::Index(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(Eigen::Index(i)) = m.row(Eigen::Index(idx[i]));
  return out;
}

// Returns the gold values of the test rows.
Learner oracle_learner(const Eigen::MatrixXd& gold) {
  return [&gold](const Split& s) { return rows_of(gold, s.test); };
}

Learner constant_learner(std::size_t targets) {
  return [targets](const Split& s) { return Eigen::MatrixXd::Constant(Eigen::Index(s.test.size()), Eigen::Index(targets), 3.0); };
}

// Word vectors in 4 dimensions; gold is a linear map of the mean vector.
Corpus linear_corpus(std::size_t n, EmbeddingTable& table, std::uint64_t seed) {
  std::vector<std::string> vocab;
  for (int i = 0; i < 40; ++i) vocab.push_back("w" + std::to_string(i));
  table = random_table(vocab, 4, 77);
  std::mt19937_64 rng(seed);
  std::ostringstream tsv;
  tsv << "text\tx\ty\n";
  for (std::size_t i = 0; i < n; ++i) {
    TokenSeq toks;
    std::string text;
    const std::size_t len = 1 + rng() % 5;
    for (std::size_t j = 0; j < len; ++j) {
      toks.push_back(vocab[rng() % vocab.size()]);
      text += (j ? " " : "") + toks.back();
    }
    const auto bv = bag_of_vectors(toks, table);
    tsv << text << '\t' << 100 * (bv[0] + 2 * bv[1]) << '\t' << 100 * (bv[2] - bv[3]) << '\n';
  }
  std::istringstream in(tsv.str());
  return make_corpus(parse_dataset(in, AnnotationSchema::parse("x:-100:100,y:-100:100")));
}

}  // namespace

TEST_CASE("pearson examples") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(pearson_r(x, std::vector<double>{2, 4, 6, 8, 10}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson_r(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(pearson_r(x, std::vector<double>{1, 3, 2, 5, 4}) == doctest::Approx(0.8).epsilon(1e-14));
  auto d = pearson(x, std::vector<double>{3, 3, 3, 3, 3});
  CHECK(d.degenerate);
  CHECK(d.r == 0.0);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
}

TEST_CASE("pearson is symmetric, affine invariant and matches the direct formula") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 50;
    std::vector<double> a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = g(rng);
      b[i] = 0.5 * a[i] + g(rng);
    }
    const double r = pearson_r(a, b);
    CHECK(r == doctest::Approx(testing::pearson_direct(a, b)).epsilon(1e-12));
    CHECK(r == doctest::Approx(pearson_r(b, a)).epsilon(1e-14));
    CHECK(std::abs(r) <= 1.0);
    for (std::size_t i = 0; i < n; ++i) c[i] = 3.0 * a[i] - 7.0;
    CHECK(pearson_r(c, b) == doctest::Approx(r).epsilon(1e-12));
    for (std::size_t i = 0; i < n; ++i) c[i] = -2.0 * a[i] + 1.0;
    CHECK(pearson_r(c, b) == doctest::Approx(-r).epsilon(1e-12));
  }
}

TEST_CASE("one-sample t-test") {
  const std::vector<double> flat{1, 2, 3, 4, 5};
  auto z = one_sample_t_test(flat, 3.0);
  CHECK(z.t == 0.0);
  CHECK(z.df == 4.0);
  CHECK(z.p == doctest::Approx(1.0));

  const std::vector<double> s{2, 4, 4, 4, 5, 5, 7, 9};
  auto r = one_sample_t_test(s, 4.0);
  // mean 5, s² = 32/7, t = 1/√(32/56).
  CHECK(r.t == doctest::Approx(1.0 / std::sqrt(32.0 / 56.0)).epsilon(1e-14));
  CHECK(r.t == doctest::Approx(1.3229).epsilon(1e-4));
  CHECK(r.df == 7.0);
  CHECK(r.p == doctest::Approx(2.0 * (1.0 - testing::student_t_cdf_simpson(r.t, 7.0))).epsilon(1e-8));

  auto neg = one_sample_t_test(s, 6.0);
  CHECK(neg.t == doctest::Approx(-r.t).epsilon(1e-14));
  CHECK(neg.p == doctest::Approx(r.p).epsilon(1e-12));

  CHECK_THROWS(one_sample_t_test(std::vector<double>{1.0}, 0.0));
  CHECK_THROWS(one_sample_t_test(std::vector<double>{2.0, 2.0}, 0.0));
  auto tiny = one_sample_t_test(std::vector<double>{100.0, 100.0 + 1e-9, 100.0 - 1e-9}, 0.0);
  CHECK(tiny.p > 0.0);
}

TEST_CASE("t distribution cdf matches numerical integration") {
  for (int df = 1; df <= 50; ++df)
    for (double t : {-4.0, -1.5, -0.3, 0.0, 0.7, 2.0, 6.0}) {
      CHECK(student_t_cdf(t, df) == doctest::Approx(testing::student_t_cdf_simpson(t, df)).epsilon(1e-8));
    }
}

TEST_CASE("cv plan partitions every repetition") {
  auto plan = plan_repeated_cv(192, 10, 10, 0);
  REQUIRE(plan.fold_of.size() == 10);
  for (std::size_t rep = 0; rep < 10; ++rep) {
    std::multiset<std::size_t> sizes;
    std::vector<int> seen(192, 0);
    for (std::size_t f = 0; f < 10; ++f) {
      const auto test = plan.test_indices(rep, f);
      const auto train = plan.train_indices(rep, f);
      sizes.insert(test.size());
      CHECK(test.size() + train.size() == 192);
      CHECK(std::is_sorted(test.begin(), test.end()));
      for (auto i : test) ++seen[i];
      std::vector<std::size_t> both;
      std::set_intersection(test.begin(), test.end(), train.begin(), train.end(), std::back_inserter(both));
      CHECK(both.empty());
    }
    CHECK(sizes.count(19) == 8);
    CHECK(sizes.count(20) == 2);
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
  CHECK(plan.fold_of[0] != plan.fold_of[1]);

  auto ten = plan_repeated_cv(10, 10, 3, 5);
  for (std::size_t f = 0; f < 10; ++f) CHECK(ten.test_indices(0, f).size() == 1);
}

TEST_CASE("cv plan is a pure function of its arguments") {
  auto a = plan_repeated_cv(57, 5, 4, 99), b = plan_repeated_cv(57, 5, 4, 99);
  CHECK(a.fold_of == b.fold_of);
  CHECK(a.hash() == b.hash());
  auto c = plan_repeated_cv(57, 5, 4, 100);
  CHECK(a.hash() != c.hash());
  CHECK_THROWS(plan_repeated_cv(5, 10, 1, 0));
  CHECK_THROWS(plan_repeated_cv(20, 1, 1, 0));
  CHECK_THROWS(plan_repeated_cv(20, 5, 0, 0));
}

TEST_CASE("repeated cv with oracle and constant learners") {
  const auto gold = random_gold(60, 2, 1);
  auto plan = plan_repeated_cv(60, 5, 3, 2);
  auto good = run_repeated_cv(plan, oracle_learner(gold), gold, {"a", "b"});
  CHECK(good.cells.size() == 3 * 5 * 2);
  CHECK(good.grand_mean() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(good.degenerate_count() == 0);
  CHECK(good.split_hash == plan.hash());
  CHECK(good.repetition_means().size() == 3);

  auto flat = run_repeated_cv(plan, constant_learner(2), gold, {"a", "b"});
  CHECK(flat.grand_mean() == 0.0);
  CHECK(flat.degenerate_count() == 30);

  CHECK_THROWS(run_repeated_cv(plan, constant_learner(3), gold, {"a", "b"}));
}

TEST_CASE("repeated cv results do not depend on the job count") {
  const auto gold = random_gold(40, 1, 8);
  auto plan = plan_repeated_cv(40, 4, 3, 1);
  // Noise keyed on the split seed only.
  Learner noisy = [&gold](const Split& s) {
    std::mt19937_64 rng(s.seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXd p = rows_of(gold, s.test);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] += g(rng);
    return p;
  };
  auto one = run_repeated_cv(plan, noisy, gold, {"v"}, 1);
  auto four = run_repeated_cv(plan, noisy, gold, {"v"}, 4);
  REQUIRE(one.cells.size() == four.cells.size());
  for (std::size_t i = 0; i < one.cells.size(); ++i) CHECK(one.cells[i].r == four.cells[i].r);
}

TEST_CASE("parallel_for propagates the first failure") {
  CHECK_THROWS_WITH(parallel_for(10, 3,
                                 [](std::size_t i) {
                                   if (i == 4 || i == 7) throw std::runtime_error("cell " + std::to_string(i));
                                 }),
                    "cell 4");
  std::vector<int> hit(50, 0);
  parallel_for(50, 4, [&](std::size_t i) { hit[i] = 1; });
  CHECK(std::count(hit.begin(), hit.end(), 1) == 50);
}

TEST_CASE("ridge on mean word vectors recovers a linear signal") {
  EmbeddingTable table(1, EmbeddingSource::random);
  auto corpus = linear_corpus(300, table, 3);
  LearnerOptions opts;
  opts.kind = ModelKind::ridge_bv;
  auto learner = make_learner(corpus, &table, opts);
  auto report = run_repeated_cv(plan_repeated_cv(300, 10, 1, 0), learner, corpus.gold, corpus.dataset.schema.names());
  CHECK(report.grand_mean() > 0.9);
}

TEST_CASE("fixed split evaluation") {
  const auto gold = random_gold(30, 2, 4);
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < 30; ++i) (i < 20 ? train : test).push_back(i);
  const std::vector<std::uint64_t> seeds{1, 2, 3};

  auto exact = run_fixed_split(oracle_learner(gold), train, test, gold, {"a", "b"}, seeds);
  for (const auto& row : exact.per_seed)
    for (double r : row) CHECK(r == doctest::Approx(1.0));

  Learner noisy = [&gold](const Split& s) {
    std::mt19937_64 rng(s.seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXd p = rows_of(gold, s.test);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] += g(rng);
    return p;
  };
  auto rep = run_fixed_split(noisy, train, test, gold, {"a", "b"}, seeds, 2);
  CHECK(rep.per_seed[0] != rep.per_seed[1]);
  double by_hand = 0.0;
  for (const auto& row : rep.per_seed) by_hand += (row[0] + row[1]) / 2.0;
  CHECK(rep.mean() == doctest::Approx(by_hand / 3.0).epsilon(1e-14));

  const std::vector<std::uint64_t> single{rep.seeds[1]};
  auto one = run_fixed_split(noisy, train, test, gold, {"a", "b"}, single);
  CHECK(one.per_seed[0] == rep.per_seed[1]);

  std::vector<std::size_t> overlap = test;
  overlap.push_back(train[0]);
  CHECK_THROWS(run_fixed_split(noisy, train, overlap, gold, {"a", "b"}, seeds));
}

TEST_CASE("fixed split with ridge is the same for every seed") {
  EmbeddingTable table(1, EmbeddingSource::random);
  auto corpus = linear_corpus(80, table, 5);
  LearnerOptions opts;
  opts.kind = ModelKind::ridge_ngram;
  auto learner = make_learner(corpus, &table, opts);
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < 80; ++i) (i % 4 ? train : test).push_back(i);
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  auto rep = run_fixed_split(learner, train, test, corpus.gold, corpus.dataset.schema.names(), seeds);
  for (const auto& row : rep.per_seed) CHECK(row == rep.per_seed[0]);
}

TEST_CASE("training size sweep") {
  const auto grid = default_sweep_grid();
  CHECK(grid.size() == 19);
  CHECK(grid.front() == 1);
  CHECK(grid[1] == 10);
  CHECK(grid[10] == 100);
  CHECK(grid.back() == 900);

  const auto gold = random_gold(50, 2, 6);
  const std::vector<NamedLearner> learners{{"oracle", oracle_learner(gold)}, {"flat", constant_learner(2)}};
  const std::vector<std::size_t> sizes{1, 10, 30};
  auto rep = training_size_sweep(50, gold, sizes, 4, 3, learners);
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    CHECK(rep.mean(0, k) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.mean(1, k) == 0.0);
  }
  auto again = training_size_sweep(50, gold, sizes, 4, 3, learners, 3);
  CHECK(again.scores == rep.scores);

  auto s = sweep_sample(50, 10, 2, 3);
  CHECK(s.size() == 10);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  CHECK(s == sweep_sample(50, 10, 2, 3));
  CHECK(s != sweep_sample(50, 10, 1, 3));

  // N = n − 1 leaves one test row, too few for a correlation.
  const std::vector<std::size_t> last{49};
  CHECK_THROWS_AS(training_size_sweep(50, gold, last, 1, 3, learners), std::invalid_argument);
  const std::vector<std::size_t> too_big{50};
  CHECK_THROWS(training_size_sweep(50, gold, too_big, 1, 3, learners));
}

TEST_CASE("sweep with one training example and a neural model stays finite") {
  EmbeddingTable table(1, EmbeddingSource::random);
  auto corpus = linear_corpus(40, table, 7);
  LearnerOptions opts;
  opts.kind = ModelKind::ffn;
  opts.hyper.ffn_hidden1 = 8;
  opts.hyper.ffn_hidden2 = 4;
  opts.train.epochs = 5;
  const std::vector<NamedLearner> learners{{"ffn", make_learner(corpus, &table, opts)}};
  const std::vector<std::size_t> sizes{1};
  auto rep = training_size_sweep(40, corpus.gold, sizes, 3, 0, learners);
  for (double v : rep.scores) CHECK(std::isfinite(v));
}
