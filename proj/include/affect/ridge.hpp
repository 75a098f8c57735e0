#pragma once

// Ridge regression with an unpenalized intercept, fitted on centered data.
//
// Dense designs use the primal normal equations when p <= n and the dual
// (kernel) form otherwise; sparse n-gram designs go through the same paths
// without densifying X. Regularization strength is chosen per target by
// inner cross-validation over a decade grid.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace affect {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RidgeModel {
  Eigen::MatrixXd weights;       // p × targets
  Eigen::RowVectorXd intercept;  // one per target
  std::vector<double> lambda;    // one per target

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd predict(const SparseMatrix& x) const;
};

// {1e-4, 1e-3, ..., 1e4}.
std::vector<double> default_lambda_grid();

// Solves (XcᵀXc + λI) w = Xcᵀ yc for every column of y. λ = 0 with a
// rank-deficient system raises SingularSystemError.
RidgeModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda);
RidgeModel ridge_fit(const SparseMatrix& x, const Eigen::MatrixXd& y, double lambda);
// Same, with a separate λ per target column.
RidgeModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, std::span<const double> lambdas);
RidgeModel ridge_fit(const SparseMatrix& x, const Eigen::MatrixXd& y, std::span<const double> lambdas);

// Per-target λ minimizing inner 5-fold CV mean squared error (leave-one-out
// below 5 rows). Ties go to the smaller λ. Fold assignment is a seeded
// shuffle dealt round-robin.
std::vector<double> ridge_select_lambdas(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                         std::span<const double> grid, std::uint64_t seed = 0);
std::vector<double> ridge_select_lambdas(const SparseMatrix& x, const Eigen::MatrixXd& y,
                                         std::span<const double> grid, std::uint64_t seed = 0);
double ridge_select_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const double> grid,
                           std::uint64_t seed = 0);

// Selection followed by a fit with the chosen λ per target.
RidgeModel ridge_fit_auto(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, std::span<const double> grid,
                          std::uint64_t seed = 0);
RidgeModel ridge_fit_auto(const SparseMatrix& x, const Eigen::MatrixXd& y, std::span<const double> grid,
                          std::uint64_t seed = 0);

}  // namespace affect
