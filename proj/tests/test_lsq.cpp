#include <doctest.h>

#include <random>

#include <Eigen/QR>

#include "nsinv/errors.hpp"
#include "nsinv/lsq.hpp"

using namespace nsinv;

namespace {

Eigen::SparseMatrix<double> random_sparse(int rows, int cols, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution keep(density);
  std::vector<Eigen::Triplet<double>> t;
  for (int j = 0; j < cols; ++j) {
    if (j < rows) t.emplace_back(j, j, 2.0 + u(rng));
    for (int i = 0; i < rows; ++i)
      if (i != j && keep(rng)) t.emplace_back(i, j, u(rng));
  }
  Eigen::SparseMatrix<double> A(rows, cols);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

}  // namespace

TEST_SUITE("lsq") {

TEST_CASE("sparse QR agrees with dense Householder QR") {
  const Eigen::SparseMatrix<double> A = random_sparse(80, 30, 0.1, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  const Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(80, 3, [&] { return n01(rng); });
  SparseLeastSquares lsq(A);
  const Eigen::MatrixXd X = lsq.solve(B);
  const Eigen::MatrixXd Xd = Eigen::MatrixXd(A).householderQr().solve(B);
  CHECK((X - Xd).norm() <= 1e-12 * Xd.norm());
  const Eigen::VectorXd x0 = lsq.solve(Eigen::VectorXd(B.col(0)));
  CHECK((x0 - X.col(0)).norm() <= 1e-14 * X.col(0).norm());
  CHECK(lsq.stats().rows == 80);
  CHECK(lsq.stats().cols == 30);
  CHECK(lsq.stats().rank == 30);
  CHECK(lsq.stats().nnz == A.nonZeros());
}

TEST_CASE("ill-conditioned columns are solved without squaring the condition number") {
  // Columns scaled over 14 orders of magnitude; normal equations would lose
  // all accuracy, QR keeps the consistent solution.
  Eigen::SparseMatrix<double> A = random_sparse(60, 12, 0.2, 5);
  for (int j = 0; j < 12; ++j) A.col(j) *= std::pow(10.0, -j * 14.0 / 11.0);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(12, 1.0, 2.0);
  const Eigen::VectorXd b = A * x;
  const Eigen::VectorXd y = SparseLeastSquares(A).solve(b);
  CHECK((A * y - b).norm() <= 1e-13 * b.norm());
}

TEST_CASE("rank deficiency is reported") {
  Eigen::SparseMatrix<double> A = random_sparse(20, 6, 0.3, 3);
  A.col(4) *= 0.0;
  A.prune(0.0);
  SparseLeastSquares lsq(A);
  CHECK(lsq.stats().rank < 6);
}

TEST_CASE("shape errors") {
  const Eigen::SparseMatrix<double> A = random_sparse(10, 4, 0.3, 4);
  SparseLeastSquares lsq(A);
  CHECK_THROWS_AS(lsq.solve(Eigen::VectorXd(Eigen::VectorXd::Ones(9))), SolverError);
  CHECK_THROWS_AS(SparseLeastSquares(random_sparse(4, 10, 0.3, 4)), SolverError);
}

}  // TEST_SUITE
