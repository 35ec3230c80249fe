#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nsinv {

/// Values of Q_n and its first two derivatives at a single time.
struct BasisValues {
  Eigen::VectorXd q;
  Eigen::VectorXd dq;
  Eigen::VectorXd ddq;
};

/// Shifted, normalized Legendre functions Q_n on (0, T) and the
/// exponentially weighted basis Psi_n(t) = e^t Q_n(t), n = 0..N.
///
/// Psi_n is orthonormal under <u, v> = int_0^T e^{-2t} u v dt. A Gauss-Legendre
/// rule on (0, T) and the tables of Q_n, Q_n', Q_n'' at its nodes are built
/// once; evaluation at other times runs the recurrences on demand.
class BasisSet {
 public:
  /// quad_order = 0 selects max(4N + 20, 64). An explicit order below
  /// 4N + 20 is rejected unless enforce_min_order is false (used by
  /// negative-control checks).
  BasisSet(int N, double T, int quad_order = 0, bool enforce_min_order = true);

  int order() const { return N_; }
  double final_time() const { return T_; }
  int quad_order() const { return static_cast<int>(nodes_.size()); }

  std::span<const double> quad_nodes() const { return nodes_; }
  std::span<const double> quad_weights() const { return weights_; }

  /// Tables indexed (n, quadrature node).
  const Eigen::MatrixXd& q_table() const { return q_; }
  const Eigen::MatrixXd& dq_table() const { return dq_; }
  const Eigen::MatrixXd& ddq_table() const { return ddq_; }

  /// Q_n^(k)(t) for n = 0..N, k = 0,1,2. Throws DomainError outside [0, T].
  BasisValues eval(double t) const;

  /// Psi_n^(derivative)(t), derivative in {0, 1, 2}.
  double psi(int n, double t, int derivative = 0) const;

  /// Psi_n(0) = (-1)^n sqrt((2n+1)/T), from the closed form.
  Eigen::VectorXd psi_at_zero() const;

 private:
  int N_;
  double T_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
  Eigen::MatrixXd q_, dq_, ddq_;
};

/// Minimum quadrature order for a given N.
int default_quad_order(int N);

BasisSet build_basis(int N, double T, int quad_order = 0);

/// Gauss-Legendre nodes and weights on (a, b).
void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights);

/// Legendre P_n, P_n', P_n'' at x in [-1, 1] for n = 0..N via the three-term
/// recurrence and its first and second derivatives (no endpoint singularity).
void legendre_with_derivatives(int N, double x, double* p, double* dp, double* ddp);

/// s_{mn}, r_{mn} and c_{mkn}.
struct ReductionMatrices {
  int N = 0;
  Eigen::MatrixXd S;
  Eigen::MatrixXd R;
  /// Dense (N+1)^3 tensor, index ((m * (N+1)) + k) * (N+1) + n.
  std::vector<double> C;

  double c(int m, int k, int n) const {
    const int d = N + 1;
    return C[(static_cast<std::size_t>(m) * d + k) * d + n];
  }
};

ReductionMatrices build_reduction_matrices(const BasisSet& basis);

/// Composite-quadrature weights for w_n = int_0^T e^{-t} w(t) Q_n(t) dt on a
/// uniform sample grid: w_n = row n of the returned (N+1) x n_samples matrix
/// times the sample vector. Simpson panels; a trailing trapezoid panel when the
/// interval count is odd.
Eigen::MatrixXd projection_weights(const BasisSet& basis, int n_samples);

/// Coefficients of a signal sampled at `times`, which must be uniform and span
/// [0, T]. Throws DataError otherwise.
Eigen::VectorXd project_signal(std::span<const double> samples,
                               std::span<const double> times,
                               const BasisSet& basis);

/// Sum_n coeffs_n Psi_n^(derivative)(t).
double eval_expansion(std::span<const double> coeffs, double t,
                      const BasisSet& basis, int derivative = 0);

/// Uniform grid of n points on [0, T].
std::vector<double> uniform_times(double T, int n);

}  // namespace nsinv
