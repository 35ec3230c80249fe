#pragma once

#include <Eigen/Dense>

#include "nsinv/forward.hpp"
#include "nsinv/grid.hpp"
#include "nsinv/kernels.hpp"
#include "nsinv/timebasis.hpp"

namespace nsinv {

/// Coefficient fields u_n = (u1_n, u2_n) and p_n, n = 0..N, stored as
/// (nodes x (N+1)) matrices with column n holding coefficient n.
struct CoeffStack {
  GridPtr grid;
  int N = 0;
  Eigen::MatrixXd u1, u2, p;

  static CoeffStack zeros(GridPtr grid, int N);

  VectorField2 velocity(int n) const;
  ScalarField pressure(int n) const;
  void set_velocity(int n, const VectorField2& v);
  void set_pressure(int n, const ScalarField& f);
};

/// Basis projections of the lateral data, (boundary nodes x (N+1)).
/// The Dirichlet velocity trace is zero and not stored.
struct ProjectedBoundaryData {
  int N = 0;
  Eigen::MatrixXd gamma1, gamma2;  // d_nu u_n
  Eigen::MatrixXd h1;              // p_n
  Eigen::MatrixXd h2;              // d_nu p_n
};

ProjectedBoundaryData project_boundary(const BoundaryRecord& rec, const BasisSet& basis);

/// Linear interpolation of boundary traces along the edges onto a coarser
/// (or any) grid of the same square.
BoundaryRecord restrict_record(const BoundaryRecord& rec, const Grid2D& target);

/// Applies the grid operators column by column.
Eigen::MatrixXd stack_laplacian(const Grid2D& g, const Eigen::MatrixXd& m);
void stack_gradient(const Grid2D& g, const Eigen::MatrixXd& m, Eigen::MatrixXd& mx, Eigen::MatrixXd& my);

kernels::StackGradients stack_gradients(const CoeffStack& s);

struct NonlinearTerms {
  Eigen::MatrixXd F1, F2;  // F_m components
  Eigen::MatrixXd G;       // G_m
};

/// F_m and G_m for m = 0..N with all gradients computed once.
NonlinearTerms eval_nonlinear(const CoeffStack& s, const ReductionMatrices& mats);
/// Same, through the serial reference kernel.
NonlinearTerms eval_nonlinear_serial(const CoeffStack& s, const ReductionMatrices& mats);

inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> eval_F(const CoeffStack& s, const ReductionMatrices& mats) {
  NonlinearTerms t = eval_nonlinear(s, mats);
  return {std::move(t.F1), std::move(t.F2)};
}
inline Eigen::MatrixXd eval_G(const CoeffStack& s, const ReductionMatrices& mats) {
  return eval_nonlinear(s, mats).G;
}

/// Upper-triangular parts of S_N and R_N (their strictly lower entries vanish
/// identically; the quadrature leaves roundoff there).
Eigen::MatrixXd structural_S(const ReductionMatrices& mats);
Eigen::MatrixXd structural_R(const ReductionMatrices& mats);

/// Both sides of the reduced system at interior nodes (boundary rows zero):
///   L_U = mu S (Lap U),  R_U = R U + F(U) + S (grad P),
///   L_P = S (Lap P),     R_P = G(U),
/// and the ratios ||L - R|| / (||L|| + ||R||) over interior nodes.
struct ReducedResiduals {
  Eigen::MatrixXd LU1, LU2, RU1, RU2, LP, RP;
  double res_u = 0.0;
  double res_p = 0.0;
};

ReducedResiduals residuals(const CoeffStack& s, const ReductionMatrices& mats, double viscosity);

/// ||L - R|| / (||L|| + ||R||) restricted to `rows`; 0 when both vanish.
double relative_residual(const std::vector<const Eigen::MatrixXd*>& L,
                         const std::vector<const Eigen::MatrixXd*>& R, const std::vector<int>& rows);

}  // namespace nsinv
