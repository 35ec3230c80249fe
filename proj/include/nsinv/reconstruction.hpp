#pragma once

#include <string>
#include <utility>

#include "nsinv/grid.hpp"
#include "nsinv/reduction.hpp"
#include "nsinv/timebasis.hpp"

namespace nsinv {

/// u(x, t) = sum_n u_n(x) Psi_n(t), p likewise. Throws DomainError for t
/// outside [0, T].
std::pair<VectorField2, ScalarField> reconstruct_at(const CoeffStack& stack, const BasisSet& basis, double t);

struct QuantityError {
  std::string name;
  /// 100 ||rec - true|| / ||true|| in the trapezoidal L2 norm, or the
  /// absolute norm ||rec - true|| when ||true|| = 0 (then `absolute` is set).
  double rel_l2 = 0.0;
  bool absolute = false;
  /// |true - rec| / ||true||_inf per node (|true - rec| when ||true||_inf = 0).
  ScalarField pointwise;
};

struct ReconstructionResult {
  VectorField2 u0_rec, u0_true;
  ScalarField p0_rec, p0_true;
  QuantityError u1, u2, p;
};

/// Trapezoidal L2 norm over all grid nodes.
double trapezoid_l2(const ScalarField& f);

QuantityError quantity_error(const std::string& name, const ScalarField& rec, const ScalarField& truth);

ReconstructionResult error_report(const VectorField2& u_rec, const ScalarField& p_rec, const VectorField2& u_true,
                                  const ScalarField& p_true);

}  // namespace nsinv
