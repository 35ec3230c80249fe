#pragma once

// Node loops shared by the forward and inverse solvers. Each kernel has an
// OpenMP version (used by the library) and a plain serial reference kept for
// testing and benchmarking; both produce bit-identical results because every
// output node is written by exactly one iteration with the same arithmetic.

#include <Eigen/Dense>

namespace nsinv::kernels {

struct Dims {
  int nx;
  int ny;
  double hx;
  double hy;
  int size() const { return nx * ny; }
};

/// Inputs of the reduced nonlinear terms: coefficient stacks (nodes x (N+1))
/// and their gradients.
struct StackGradients {
  Eigen::MatrixXd u1, u2;
  Eigen::MatrixXd u1x, u1y, u2x, u2y;
};

/// Symmetrized coupling tensor Ct_{mkn} = c_{mkn} + c_{mnk} stored as a
/// (N+1)^2 x (N+1) matrix: entry (k * (N+1) + n, m).
Eigen::MatrixXd symmetrized_coupling(const double* c, int d);

namespace serial {

void laplacian(const Dims& g, const double* f, double* out);
void gradient(const Dims& g, const double* f, double* fx, double* fy);
/// (a . grad) b at interior nodes, zero on the boundary. Central differences.
void convection(const Dims& g, const double* a1, const double* a2,
                const double* b, double* out);
/// F1, F2, G (nodes x (N+1)) from precomputed stack gradients.
void nonlinear_terms(const Dims& g, const StackGradients& s,
                     const Eigen::MatrixXd& coupling, Eigen::MatrixXd& F1,
                     Eigen::MatrixXd& F2, Eigen::MatrixXd& G);

}  // namespace serial

namespace omp {

void laplacian(const Dims& g, const double* f, double* out);
void gradient(const Dims& g, const double* f, double* fx, double* fy);
void convection(const Dims& g, const double* a1, const double* a2,
                const double* b, double* out);
void nonlinear_terms(const Dims& g, const StackGradients& s,
                     const Eigen::MatrixXd& coupling, Eigen::MatrixXd& F1,
                     Eigen::MatrixXd& F2, Eigen::MatrixXd& G);

}  // namespace omp

}  // namespace nsinv::kernels
