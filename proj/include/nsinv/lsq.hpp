#pragma once

#include <memory>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace nsinv {

struct LsqStats {
  long rows = 0;
  long cols = 0;
  long nnz = 0;
  long rank = 0;
  double factor_seconds = 0.0;
};

/// Sparse Householder QR (SuiteSparseQR) of a tall matrix, factored once and
/// reused for any number of right-hand sides. Least-squares solutions come from
/// x = E R^{-1} Q^T b, so the conditioning of A is not squared.
///
/// `tol` is the column-norm threshold below which SuiteSparseQR treats a
/// column as dead. The default 0 drops only exactly zero columns; a negative
/// value in (-2, 0) disables rank detection.
class SparseLeastSquares {
 public:
  explicit SparseLeastSquares(const Eigen::SparseMatrix<double>& A, double tol = 0.0);
  ~SparseLeastSquares();
  SparseLeastSquares(SparseLeastSquares&&) noexcept;
  SparseLeastSquares& operator=(SparseLeastSquares&&) noexcept;

  /// Column-wise minimizers of ||A x - b||; B is rows x k, result cols x k.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

  const LsqStats& stats() const { return stats_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  LsqStats stats_;
};

}  // namespace nsinv
