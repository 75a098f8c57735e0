#include "affect/ridge.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace affect;
using affect::testing::Mat;
using affect::testing::ridge_normal_equations;

namespace {

Eigen::MatrixXd to_eigen(const Mat& m) {
  Eigen::MatrixXd out(Eigen::Index(m.size()), Eigen::Index(m[0].size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) out(Eigen::Index(i), Eigen::Index(j)) = m[i][j];
  return out;
}

Eigen::MatrixXd column(const std::vector<double>& v) {
  Eigen::MatrixXd out(Eigen::Index(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) out(Eigen::Index(i), 0) = v[i];
  return out;
}

}  // namespace

TEST_CASE("ridge_fit examples") {
  Eigen::MatrixXd x(2, 1);
  x << 1, 2;
  Eigen::MatrixXd y(2, 1);
  y << 1, 2;
  auto exact = ridge_fit(x, y, 0.0);
  CHECK(exact.weights(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact.intercept(0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  auto shrunk = ridge_fit(x, y, 1.0);
  CHECK(shrunk.weights(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(shrunk.intercept(0) == doctest::Approx(1.5 - 1.5 / 3.0).epsilon(1e-12));
  CHECK(shrunk.lambda == std::vector<double>{1.0});
}

TEST_CASE("ridge_fit shrinks towards zero at large lambda") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(40, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  for (Eigen::Index j = 0; j < 4; ++j) {
    x.col(j).array() -= x.col(j).mean();
    x.col(j) /= std::sqrt(x.col(j).squaredNorm() / 40.0);
  }
  Eigen::MatrixXd y = x * Eigen::Vector4d(1, -2, 0.5, 3);
  const double free = ridge_fit(x, y, 0.0).weights.norm();
  const double tight = ridge_fit(x, y, 1e4).weights.norm();
  CHECK(tight < 1e-2 * free);
}

TEST_CASE("ridge_fit matches the normal-equation oracle, primal and dual, dense and sparse") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  const auto grid = default_lambda_grid();
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng() % 20, p = 1 + rng() % 30;
    const double lambda = grid[rng() % grid.size()];
    Mat xm(n, std::vector<double>(p));
    std::vector<double> yv(n);
    for (auto& row : xm)
      for (auto& v : row) v = (rng() % 3 == 0) ? 0.0 : g(rng);
    for (auto& v : yv) v = g(rng);
    const auto oracle = ridge_normal_equations(xm, yv, lambda);
    const Eigen::MatrixXd x = to_eigen(xm);
    auto dense = ridge_fit(x, column(yv), lambda);
    SparseMatrix sx = x.sparseView();
    auto sparse = ridge_fit(sx, column(yv), lambda);
    for (std::size_t j = 0; j < p; ++j) {
      CHECK(dense.weights(Eigen::Index(j), 0) == doctest::Approx(oracle.w[j]).epsilon(1e-8).scale(1.0));
      CHECK(sparse.weights(Eigen::Index(j), 0) == doctest::Approx(oracle.w[j]).epsilon(1e-8).scale(1.0));
    }
    CHECK(dense.intercept(0) == doctest::Approx(oracle.intercept).epsilon(1e-8).scale(1.0));
    CHECK(sparse.intercept(0) == doctest::Approx(oracle.intercept).epsilon(1e-8).scale(1.0));
    const Eigen::MatrixXd pd = dense.predict(x), ps = sparse.predict(sx);
    CHECK((pd - ps).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("ridge_fit with lambda 0 interpolates a full-rank square system") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (std::size_t p : {1u, 3u, 6u}) {
    Eigen::MatrixXd x(Eigen::Index(p + 1), Eigen::Index(p));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    Eigen::MatrixXd y(Eigen::Index(p + 1), 1);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = g(rng);
    auto m = ridge_fit(x, y, 0.0);
    CHECK((m.predict(x) - y).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("ridge_fit reports singular systems at lambda 0") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 2, 2, 4, 3, 6;
  Eigen::MatrixXd y(3, 1);
  y << 1, 2, 3;
  CHECK_THROWS_AS(ridge_fit(x, y, 0.0), SingularSystemError);
  CHECK_NOTHROW(ridge_fit(x, y, 1e-4));
  CHECK_THROWS(ridge_fit(x, y, -1.0));
}

TEST_CASE("multi-target fit equals per-target fits") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(15, 4), y(15, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = g(rng);
  const std::vector<double> lambdas{0.1, 10.0, 1e-3};
  auto joint = ridge_fit(x, y, lambdas);
  for (Eigen::Index t = 0; t < 3; ++t) {
    auto single = ridge_fit(x, Eigen::MatrixXd(y.col(t)), lambdas[std::size_t(t)]);
    CHECK((joint.weights.col(t) - single.weights.col(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("lambda selection") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g;
  const auto grid = default_lambda_grid();
  CHECK(grid.size() == 9);
  CHECK(grid.front() == 1e-4);
  CHECK(grid.back() == 1e4);

  Eigen::MatrixXd x(60, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  Eigen::VectorXd y = x * Eigen::VectorXd::LinSpaced(5, -2, 2);
  CHECK(ridge_select_lambda(x, y, grid, 1) <= 1e-2);

  double log_sum = 0.0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    Eigen::VectorXd noise(60);
    for (auto& v : noise) v = g(rng);
    log_sum += std::log10(ridge_select_lambda(x, noise, grid, std::uint64_t(s)));
  }
  CHECK(log_sum / seeds >= 2.0);

  const std::vector<double> one{7.0};
  CHECK(ridge_select_lambda(x, y, one) == 7.0);

  Eigen::MatrixXd tiny = x.topRows(3);
  Eigen::VectorXd ytiny = y.head(3);
  const double chosen = ridge_select_lambda(tiny, ytiny, grid);
  CHECK(std::find(grid.begin(), grid.end(), chosen) != grid.end());
}

TEST_CASE("lambda selection is deterministic and per target") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(30, 3), y(30, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  y.col(0) = x * Eigen::Vector3d(1, 2, 3);
  for (Eigen::Index i = 0; i < 30; ++i) y(i, 1) = g(rng);
  const auto grid = default_lambda_grid();
  auto a = ridge_select_lambdas(x, y, grid, 4);
  CHECK(a == ridge_select_lambdas(x, y, grid, 4));
  CHECK(a[0] < a[1]);
  SparseMatrix sx = x.sparseView();
  CHECK(ridge_select_lambdas(sx, y, grid, 4) == a);
  auto fit = ridge_fit_auto(x, y, grid, 4);
  CHECK(fit.lambda == a);
}
