#include "nsinv/reconstruction.hpp"

#include <cmath>

#include "nsinv/errors.hpp"

namespace nsinv {

std::pair<VectorField2, ScalarField> reconstruct_at(const CoeffStack& stack, const BasisSet& basis, double t) {
  if (basis.order() != stack.N) throw DataError("reconstruct_at: basis order differs from stack N");
  if (!(t >= 0.0 && t <= basis.final_time())) {
    throw DomainError("reconstruct_at: t = " + std::to_string(t) + " outside [0, T]");
  }
  Eigen::VectorXd psi(stack.N + 1);
  if (t == 0.0) {
    psi = basis.psi_at_zero();
  } else {
    const BasisValues v = basis.eval(t);
    psi = std::exp(t) * v.q;
  }
  VectorField2 u(ScalarField(stack.grid, stack.u1 * psi), ScalarField(stack.grid, stack.u2 * psi));
  return {std::move(u), ScalarField(stack.grid, stack.p * psi)};
}

double trapezoid_l2(const ScalarField& f) {
  return std::sqrt(f.grid->quadrature_weights().dot(f.values.cwiseAbs2()));
}

QuantityError quantity_error(const std::string& name, const ScalarField& rec, const ScalarField& truth) {
  if (rec.values.size() != truth.values.size()) throw DataError("error_report: grids differ for " + name);
  QuantityError e;
  e.name = name;
  const ScalarField diff(truth.grid, truth.values - rec.values);
  const double nt = trapezoid_l2(truth);
  const double nd = trapezoid_l2(diff);
  e.absolute = nt == 0.0;
  e.rel_l2 = e.absolute ? nd : 100.0 * nd / nt;
  const double sup = truth.values.cwiseAbs().maxCoeff();
  e.pointwise = ScalarField(truth.grid, diff.values.cwiseAbs() / (sup == 0.0 ? 1.0 : sup));
  return e;
}

ReconstructionResult error_report(const VectorField2& u_rec, const ScalarField& p_rec, const VectorField2& u_true,
                                  const ScalarField& p_true) {
  ReconstructionResult r;
  r.u0_rec = u_rec;
  r.p0_rec = p_rec;
  r.u0_true = u_true;
  r.p0_true = p_true;
  r.u1 = quantity_error("u0_1", u_rec.u1, u_true.u1);
  r.u2 = quantity_error("u0_2", u_rec.u2, u_true.u2);
  r.p = quantity_error("p0", p_rec, p_true);
  return r;
}

}  // namespace nsinv
