#include "affect/ridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>

namespace affect {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

RowVectorXd col_means(const MatrixXd& x) { return x.colwise().mean(); }

RowVectorXd col_means(const SparseMatrix& x) {
  RowVectorXd mu = RowVectorXd::Zero(x.cols());
  for (Index r = 0; r < x.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(x, r); it; ++it) mu(it.col()) += it.value();
  return mu / double(x.rows());
}

MatrixXd take_rows(const MatrixXd& x, const std::vector<Index>& rows) {
  MatrixXd out(Index(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(Index(i)) = x.row(rows[i]);
  return out;
}

SparseMatrix take_rows(const SparseMatrix& x, const std::vector<Index>& rows) {
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (SparseMatrix::InnerIterator it(x, rows[i]); it; ++it) trips.emplace_back(Index(i), it.col(), it.value());
  SparseMatrix out(Index(rows.size()), x.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// XcᵀXc.
MatrixXd primal_gram(const MatrixXd& x, const RowVectorXd& mu) {
  MatrixXd xc = x.rowwise() - mu;
  return xc.transpose() * xc;
}
MatrixXd primal_gram(const SparseMatrix& x, const RowVectorXd& mu) {
  MatrixXd g = MatrixXd(SparseMatrix(x.transpose() * x));
  g.noalias() -= double(x.rows()) * mu.transpose() * mu;
  return g;
}

// (Z - 1μ)(X - 1μ)ᵀ; with Z = X this is the centered dual Gram matrix.
MatrixXd centered_kernel(const MatrixXd& z, const MatrixXd& x, const RowVectorXd& mu) {
  return (z.rowwise() - mu) * (x.rowwise() - mu).transpose();
}
MatrixXd centered_kernel(const SparseMatrix& z, const SparseMatrix& x, const RowVectorXd& mu) {
  MatrixXd k = MatrixXd(SparseMatrix(z * x.transpose()));
  const VectorXd az = z * mu.transpose();
  const VectorXd ax = x * mu.transpose();
  const double mm = mu.squaredNorm();
  k.colwise() -= az;
  k.rowwise() -= ax.transpose();
  k.array() += mm;
  return k;
}

// (Z - 1μ) V for a dense V.
MatrixXd centered_times(const MatrixXd& z, const RowVectorXd& mu, const MatrixXd& v) { return (z.rowwise() - mu) * v; }
MatrixXd centered_times(const SparseMatrix& z, const RowVectorXd& mu, const MatrixXd& v) {
  MatrixXd out = z * v;
  out.rowwise() -= mu * v;
  return out;
}

// (X - 1μ)ᵀ A.
MatrixXd centered_transpose_times(const MatrixXd& x, const RowVectorXd& mu, const MatrixXd& a) {
  return (x.rowwise() - mu).transpose() * a;
}
MatrixXd centered_transpose_times(const SparseMatrix& x, const RowVectorXd& mu, const MatrixXd& a) {
  MatrixXd out = x.transpose() * a;
  out -= mu.transpose() * a.colwise().sum();
  return out;
}

MatrixXd solve_regularized(const MatrixXd& a, const MatrixXd& b, double lambda) {
  if (lambda > 0.0) {
    MatrixXd reg = a;
    reg.diagonal().array() += lambda;
    Eigen::LLT<MatrixXd> llt(reg);
    if (llt.info() == Eigen::Success) return llt.solve(b);
    return reg.ldlt().solve(b);
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
  if (qr.rank() < a.rows()) {
    throw SingularSystemError("ridge: singular normal equations with lambda = 0 (rank " + std::to_string(qr.rank()) +
                              " of " + std::to_string(a.rows()) + "); use lambda > 0");
  }
  return qr.solve(b);
}

// Least squares on the centered design itself; better conditioned than the
// normal equations when λ = 0.
MatrixXd solve_unregularized(const MatrixXd& x, const RowVectorXd& mu, const MatrixXd& yc) {
  MatrixXd xc = x.rowwise() - mu;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(xc);
  if (qr.rank() < xc.cols()) {
    throw SingularSystemError("ridge: rank-deficient centered design with lambda = 0 (rank " +
                              std::to_string(qr.rank()) + " of " + std::to_string(xc.cols()) + "); use lambda > 0");
  }
  return qr.solve(yc);
}
MatrixXd solve_unregularized(const SparseMatrix& x, const RowVectorXd& mu, const MatrixXd& yc) {
  if (x.cols() > x.rows()) throw SingularSystemError("ridge: more features than rows with lambda = 0; use lambda > 0");
  return solve_regularized(primal_gram(x, mu), centered_transpose_times(x, mu, yc), 0.0);
}

template <typename Design>
RidgeModel fit_impl(const Design& x, const MatrixXd& y, std::span<const double> lambdas) {
  const Index n = x.rows(), p = x.cols(), t = y.cols();
  if (n < 1) throw std::invalid_argument("ridge_fit: need at least one row");
  if (y.rows() != n) throw std::invalid_argument("ridge_fit: X and y row counts differ");
  if (Index(lambdas.size()) != t) throw std::invalid_argument("ridge_fit: one lambda per target required");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw std::invalid_argument("ridge_fit: lambda must be >= 0");

  const RowVectorXd mu = col_means(x);
  const RowVectorXd ybar = y.colwise().mean();
  const MatrixXd yc = y.rowwise() - ybar;

  // Group targets sharing a λ so each system is factored once.
  std::map<double, std::vector<Index>> groups;
  for (Index j = 0; j < t; ++j) groups[lambdas[std::size_t(j)]].push_back(j);

  RidgeModel model;
  model.weights = MatrixXd::Zero(p, t);
  model.lambda.assign(lambdas.begin(), lambdas.end());
  const bool primal = p <= n;
  MatrixXd gram = primal ? primal_gram(x, mu) : centered_kernel(x, x, mu);
  for (const auto& [lambda, cols] : groups) {
    MatrixXd rhs(n, Index(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) rhs.col(Index(c)) = yc.col(cols[c]);
    MatrixXd w;
    if (lambda == 0.0 && primal) {
      w = solve_unregularized(x, mu, rhs);
    } else if (primal) {
      w = solve_regularized(gram, centered_transpose_times(x, mu, rhs), lambda);
    } else {
      w = centered_transpose_times(x, mu, solve_regularized(gram, rhs, lambda));
    }
    for (std::size_t c = 0; c < cols.size(); ++c) model.weights.col(cols[c]) = w.col(Index(c));
  }
  model.intercept = ybar - mu * model.weights;
  return model;
}

template <typename Design>
std::vector<double> select_impl(const Design& x, const MatrixXd& y, std::span<const double> grid_in,
                                std::uint64_t seed) {
  if (grid_in.empty()) throw std::invalid_argument("ridge_select_lambda: empty grid");
  std::vector<double> grid(grid_in.begin(), grid_in.end());
  std::sort(grid.begin(), grid.end());
  const Index n = x.rows(), p = x.cols(), t = y.cols();
  if (y.rows() != n) throw std::invalid_argument("ridge_select_lambda: X and y row counts differ");
  if (grid.size() == 1 || n < 2) return std::vector<double>(std::size_t(t), grid.front());

  const Index k = n >= 5 ? 5 : n;
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> fold_of(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) fold_of[std::size_t(perm[i])] = Index(i) % k;

  MatrixXd sse = MatrixXd::Zero(Index(grid.size()), t);
  for (Index f = 0; f < k; ++f) {
    std::vector<Index> tr, va;
    for (Index i = 0; i < n; ++i) (fold_of[std::size_t(i)] == f ? va : tr).push_back(i);
    const Design xt = take_rows(x, tr);
    const Design xv = take_rows(x, va);
    const MatrixXd yt = take_rows(MatrixXd(y), tr);
    const MatrixXd yv = take_rows(MatrixXd(y), va);
    const RowVectorXd mu = col_means(xt);
    const RowVectorXd ybar = yt.colwise().mean();
    const MatrixXd yc = yt.rowwise() - ybar;

    // Eigendecomposition G = V S Vᵀ turns every λ into a diagonal rescale.
    const bool primal = p <= Index(tr.size());
    const MatrixXd gram = primal ? primal_gram(xt, mu) : centered_kernel(xt, xt, mu);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    const VectorXd s = eig.eigenvalues();
    const MatrixXd& v = eig.eigenvectors();
    const MatrixXd c = primal ? MatrixXd(v.transpose() * centered_transpose_times(xt, mu, yc)) : MatrixXd(v.transpose() * yc);
    const MatrixXd proj = primal ? centered_times(xv, mu, v) : MatrixXd(centered_kernel(xv, xt, mu) * v);
    const double tol = 1e-10 * std::max(1.0, s.cwiseAbs().maxCoeff());

    for (std::size_t g = 0; g < grid.size(); ++g) {
      const VectorXd denom = s.array() + grid[g];
      if (denom.minCoeff() <= tol) {
        sse.row(Index(g)).setConstant(std::numeric_limits<double>::infinity());
        continue;
      }
      MatrixXd pred = proj * (c.array().colwise() / denom.array()).matrix();
      pred.rowwise() += ybar;
      sse.row(Index(g)) += (pred - yv).array().square().colwise().sum().matrix();
    }
  }

  std::vector<double> chosen(static_cast<std::size_t>(t));
  for (Index j = 0; j < t; ++j) {
    Index best = 0;
    for (Index g = 1; g < Index(grid.size()); ++g)
      if (sse(g, j) < sse(best, j)) best = g;
    chosen[std::size_t(j)] = grid[std::size_t(best)];
  }
  return chosen;
}

}  // namespace

Eigen::MatrixXd RidgeModel::predict(const Eigen::MatrixXd& x) const {
  MatrixXd out = x * weights;
  out.rowwise() += intercept;
  return out;
}

Eigen::MatrixXd RidgeModel::predict(const SparseMatrix& x) const {
  MatrixXd out = x * weights;
  out.rowwise() += intercept;
  return out;
}

std::vector<double> default_lambda_grid() { return {1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4}; }

RidgeModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda) {
  return fit_impl(x, y, std::vector<double>(std::size_t(y.cols()), lambda));
}
RidgeModel ridge_fit(const SparseMatrix& x, const Eigen::MatrixXd& y, double lambda) {
  return fit_impl(x, y, std::vector<double>(std::size_t(y.cols()), lambda));
}
RidgeModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, std::span<const double> lambdas) {
  return fit_impl(x, y, lambdas);
}
RidgeModel ridge_fit(const SparseMatrix& x, const Eigen::MatrixXd& y, std::span<const double> lambdas) {
  return fit_impl(x, y, lambdas);
}

std::vector<double> ridge_select_lambdas(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                         std::span<const double> grid, std::uint64_t seed) {
  return select_impl(x, y, grid, seed);
}
std::vector<double> ridge_select_lambdas(const SparseMatrix& x, const Eigen::MatrixXd& y,
                                         std::span<const double> grid, std::uint64_t seed) {
  return select_impl(x, y, grid, seed);
}
double ridge_select_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const double> grid,
                           std::uint64_t seed) {
  return select_impl(x, MatrixXd(y), grid, seed).front();
}

RidgeModel ridge_fit_auto(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, std::span<const double> grid,
                          std::uint64_t seed) {
  return fit_impl(x, y, select_impl(x, y, grid, seed));
}
RidgeModel ridge_fit_auto(const SparseMatrix& x, const Eigen::MatrixXd& y, std::span<const double> grid,
                          std::uint64_t seed) {
  return fit_impl(x, y, select_impl(x, y, grid, seed));
}

}  // namespace affect
