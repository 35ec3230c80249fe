#include "nsinv/lsq.hpp"

#include <SuiteSparseQR.hpp>

#include <chrono>
#include <cstring>

#include "nsinv/errors.hpp"

namespace nsinv {

struct SparseLeastSquares::Impl {
  cholmod_common cc{};
  SuiteSparseQR_factorization<double>* qr = nullptr;
  long rows = 0;
  long cols = 0;

  Impl() { cholmod_l_start(&cc); }
  ~Impl() {
    if (qr) SuiteSparseQR_free<double>(&qr, &cc);
    cholmod_l_finish(&cc);
  }
  Impl(const Impl&) = delete;
  Impl& operator=(const Impl&) = delete;
};

SparseLeastSquares::SparseLeastSquares(const Eigen::SparseMatrix<double>& A, double tol)
    : impl_(std::make_unique<Impl>()) {
  if (A.rows() < A.cols()) throw SolverError("SparseLeastSquares: matrix has fewer rows than columns");
  Eigen::SparseMatrix<double, Eigen::ColMajor, SuiteSparse_long> Al = A;
  Al.makeCompressed();

  cholmod_sparse view{};
  view.nrow = static_cast<size_t>(Al.rows());
  view.ncol = static_cast<size_t>(Al.cols());
  view.nzmax = static_cast<size_t>(Al.nonZeros());
  view.p = Al.outerIndexPtr();
  view.i = Al.innerIndexPtr();
  view.x = Al.valuePtr();
  view.stype = 0;
  view.itype = CHOLMOD_LONG;
  view.xtype = CHOLMOD_REAL;
  view.dtype = CHOLMOD_DOUBLE;
  view.sorted = 1;
  view.packed = 1;

  const auto t0 = std::chrono::steady_clock::now();
  impl_->qr = SuiteSparseQR_factorize<double>(SPQR_ORDERING_DEFAULT, tol, &view, &impl_->cc);
  const auto t1 = std::chrono::steady_clock::now();
  if (!impl_->qr || impl_->cc.status < CHOLMOD_OK) {
    throw SolverError("SparseLeastSquares: factorization failed (cholmod status " +
                      std::to_string(impl_->cc.status) + ")");
  }
  impl_->rows = Al.rows();
  impl_->cols = Al.cols();
  stats_.rows = Al.rows();
  stats_.cols = Al.cols();
  stats_.nnz = Al.nonZeros();
  stats_.rank = impl_->qr->rank;
  stats_.factor_seconds = std::chrono::duration<double>(t1 - t0).count();
}

SparseLeastSquares::~SparseLeastSquares() = default;
SparseLeastSquares::SparseLeastSquares(SparseLeastSquares&&) noexcept = default;
SparseLeastSquares& SparseLeastSquares::operator=(SparseLeastSquares&&) noexcept = default;

Eigen::MatrixXd SparseLeastSquares::solve(const Eigen::MatrixXd& B) const {
  if (B.rows() != impl_->rows) throw SolverError("SparseLeastSquares: right-hand side has wrong length");
  cholmod_common* cc = &impl_->cc;
  Eigen::MatrixXd Bc = B;
  cholmod_dense view{};
  view.nrow = static_cast<size_t>(B.rows());
  view.ncol = static_cast<size_t>(B.cols());
  view.nzmax = view.nrow * view.ncol;
  view.d = view.nrow;
  view.x = Bc.data();
  view.xtype = CHOLMOD_REAL;
  view.dtype = CHOLMOD_DOUBLE;

  cholmod_dense* y = SuiteSparseQR_qmult<double>(SPQR_QTX, impl_->qr, &view, cc);
  if (!y) throw SolverError("SparseLeastSquares: Q^T b failed");
  cholmod_dense* x = SuiteSparseQR_solve<double>(SPQR_RETX_EQUALS_B, impl_->qr, y, cc);
  cholmod_l_free_dense(&y, cc);
  if (!x) throw SolverError("SparseLeastSquares: triangular solve failed");

  Eigen::MatrixXd out(impl_->cols, B.cols());
  const double* xs = static_cast<const double*>(x->x);
  for (Eigen::Index c = 0; c < B.cols(); ++c) {
    std::memcpy(out.col(c).data(), xs + c * x->d, sizeof(double) * impl_->cols);
  }
  cholmod_l_free_dense(&x, cc);
  if (!out.allFinite()) throw SolverError("SparseLeastSquares: non-finite solution");
  return out;
}

Eigen::VectorXd SparseLeastSquares::solve(const Eigen::VectorXd& b) const {
  return solve(Eigen::MatrixXd(b)).col(0);
}

}  // namespace nsinv
