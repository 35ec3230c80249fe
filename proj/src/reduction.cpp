#include "nsinv/reduction.hpp"

#include <cmath>

#include "nsinv/errors.hpp"

namespace nsinv {

namespace {

kernels::Dims dims(const Grid2D& g) { return {g.nx(), g.ny(), g.hx(), g.hy()}; }

}  // namespace

CoeffStack CoeffStack::zeros(GridPtr grid, int N) {
  CoeffStack s;
  s.N = N;
  const int n = grid->size();
  s.grid = std::move(grid);
  s.u1 = Eigen::MatrixXd::Zero(n, N + 1);
  s.u2 = Eigen::MatrixXd::Zero(n, N + 1);
  s.p = Eigen::MatrixXd::Zero(n, N + 1);
  return s;
}

VectorField2 CoeffStack::velocity(int n) const {
  return VectorField2(ScalarField(grid, u1.col(n)), ScalarField(grid, u2.col(n)));
}

ScalarField CoeffStack::pressure(int n) const { return ScalarField(grid, p.col(n)); }

void CoeffStack::set_velocity(int n, const VectorField2& v) {
  u1.col(n) = v.u1.values;
  u2.col(n) = v.u2.values;
}

void CoeffStack::set_pressure(int n, const ScalarField& f) { p.col(n) = f.values; }

ProjectedBoundaryData project_boundary(const BoundaryRecord& rec, const BasisSet& basis) {
  if (std::abs(rec.T - basis.final_time()) > 1e-12 * std::max(1.0, rec.T)) {
    throw ConfigError("project_boundary: record T = " + std::to_string(rec.T) +
                      " differs from basis T = " + std::to_string(basis.final_time()));
  }
  const int levels = rec.levels();
  if (levels < 2) throw DataError("project_boundary: record needs at least two levels");
  for (const Eigen::MatrixXd* m : {&rec.g1, &rec.g2, &rec.h1, &rec.h2}) {
    if (m->rows() != levels || m->cols() != rec.boundary_count()) {
      throw DataError("project_boundary: record arrays have inconsistent shapes");
    }
  }
  // Validates the sample grid.
  const Eigen::VectorXd probe = Eigen::VectorXd::Zero(levels);
  (void)project_signal(std::span<const double>(probe.data(), levels), rec.times, basis);

  const Eigen::MatrixXd W = projection_weights(basis, levels);
  ProjectedBoundaryData out;
  out.N = basis.order();
  out.gamma1 = (W * rec.g1).transpose();
  out.gamma2 = (W * rec.g2).transpose();
  out.h1 = (W * rec.h1).transpose();
  out.h2 = (W * rec.h2).transpose();
  return out;
}

BoundaryRecord restrict_record(const BoundaryRecord& rec, const Grid2D& target) {
  const Grid2D fine(rec.nx, rec.ny);
  if (target.nx() == fine.nx() && target.ny() == fine.ny()) return rec;
  // Position of each fine boundary node by (i, j).
  std::vector<int> slot(fine.size(), -1);
  for (int b = 0; b < fine.boundary_count(); ++b) slot[fine.boundary()[b]] = b;

  // For each target boundary node: two fine boundary slots and a weight.
  struct Stencil {
    int a, b;
    double w;
  };
  std::vector<Stencil> st;
  for (int tb = 0; tb < target.boundary_count(); ++tb) {
    const int k = target.boundary()[tb];
    const double x = target.x(target.col(k)), y = target.y(target.row(k));
    const bool vertical_edge = target.col(k) == 0 || target.col(k) == target.nx() - 1;
    if (vertical_edge) {
      const int i = target.col(k) == 0 ? 0 : fine.nx() - 1;
      const double s = (y + 1.0) / fine.hy();
      const int j0 = std::min(static_cast<int>(std::floor(s)), fine.ny() - 2);
      st.push_back({slot[fine.index(i, j0)], slot[fine.index(i, j0 + 1)], s - j0});
    } else {
      const int j = target.row(k) == 0 ? 0 : fine.ny() - 1;
      const double s = (x + 1.0) / fine.hx();
      const int i0 = std::min(static_cast<int>(std::floor(s)), fine.nx() - 2);
      st.push_back({slot[fine.index(i0, j)], slot[fine.index(i0 + 1, j)], s - i0});
    }
  }
  BoundaryRecord out = rec;
  out.nx = target.nx();
  out.ny = target.ny();
  const int nb = target.boundary_count();
  for (auto [src, dst] : {std::pair{&rec.g1, &out.g1}, {&rec.g2, &out.g2}, {&rec.h1, &out.h1}, {&rec.h2, &out.h2}}) {
    dst->resize(rec.levels(), nb);
    for (int tb = 0; tb < nb; ++tb) {
      const Stencil& s = st[tb];
      dst->col(tb) = (1.0 - s.w) * src->col(s.a) + s.w * src->col(s.b);
    }
  }
  return out;
}

Eigen::MatrixXd stack_laplacian(const Grid2D& g, const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  const auto d = dims(g);
  for (Eigen::Index c = 0; c < m.cols(); ++c) kernels::omp::laplacian(d, m.col(c).data(), out.col(c).data());
  return out;
}

void stack_gradient(const Grid2D& g, const Eigen::MatrixXd& m, Eigen::MatrixXd& mx, Eigen::MatrixXd& my) {
  mx.resize(m.rows(), m.cols());
  my.resize(m.rows(), m.cols());
  const auto d = dims(g);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    kernels::omp::gradient(d, m.col(c).data(), mx.col(c).data(), my.col(c).data());
  }
}

kernels::StackGradients stack_gradients(const CoeffStack& s) {
  kernels::StackGradients g;
  g.u1 = s.u1;
  g.u2 = s.u2;
  stack_gradient(*s.grid, s.u1, g.u1x, g.u1y);
  stack_gradient(*s.grid, s.u2, g.u2x, g.u2y);
  return g;
}

NonlinearTerms eval_nonlinear(const CoeffStack& s, const ReductionMatrices& mats) {
  if (mats.N != s.N) throw DataError("eval_nonlinear: stack and matrices disagree on N");
  const Eigen::MatrixXd coupling = kernels::symmetrized_coupling(mats.C.data(), mats.N + 1);
  NonlinearTerms t;
  kernels::omp::nonlinear_terms(dims(*s.grid), stack_gradients(s), coupling, t.F1, t.F2, t.G);
  return t;
}

NonlinearTerms eval_nonlinear_serial(const CoeffStack& s, const ReductionMatrices& mats) {
  if (mats.N != s.N) throw DataError("eval_nonlinear: stack and matrices disagree on N");
  const Eigen::MatrixXd coupling = kernels::symmetrized_coupling(mats.C.data(), mats.N + 1);
  NonlinearTerms t;
  kernels::serial::nonlinear_terms(dims(*s.grid), stack_gradients(s), coupling, t.F1, t.F2, t.G);
  return t;
}

Eigen::MatrixXd structural_S(const ReductionMatrices& mats) {
  return mats.S.triangularView<Eigen::Upper>();
}

Eigen::MatrixXd structural_R(const ReductionMatrices& mats) {
  return mats.R.triangularView<Eigen::Upper>();
}

double relative_residual(const std::vector<const Eigen::MatrixXd*>& L,
                         const std::vector<const Eigen::MatrixXd*>& R, const std::vector<int>& rows) {
  double diff = 0.0, nl = 0.0, nr = 0.0;
  for (std::size_t c = 0; c < L.size(); ++c) {
    for (int k : rows) {
      const auto l = L[c]->row(k);
      const auto r = R[c]->row(k);
      diff += (l - r).squaredNorm();
      nl += l.squaredNorm();
      nr += r.squaredNorm();
    }
  }
  const double denom = std::sqrt(nl) + std::sqrt(nr);
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

ReducedResiduals residuals(const CoeffStack& s, const ReductionMatrices& mats, double viscosity) {
  const Grid2D& g = *s.grid;
  const Eigen::MatrixXd S = structural_S(mats);
  const Eigen::MatrixXd R = structural_R(mats);
  const NonlinearTerms nl = eval_nonlinear(s, mats);
  Eigen::MatrixXd px, py;
  stack_gradient(g, s.p, px, py);

  ReducedResiduals out;
  // Column m of X S^T is sum_n s_{mn} X_n.
  out.LU1 = viscosity * stack_laplacian(g, s.u1) * S.transpose();
  out.LU2 = viscosity * stack_laplacian(g, s.u2) * S.transpose();
  out.RU1 = s.u1 * R.transpose() + nl.F1 + px * S.transpose();
  out.RU2 = s.u2 * R.transpose() + nl.F2 + py * S.transpose();
  out.LP = stack_laplacian(g, s.p) * S.transpose();
  out.RP = nl.G;
  // Only interior rows carry the PDE.
  for (int k : g.boundary()) {
    for (Eigen::MatrixXd* m : {&out.LU1, &out.LU2, &out.RU1, &out.RU2, &out.LP, &out.RP}) m->row(k).setZero();
  }
  out.res_u = relative_residual({&out.LU1, &out.LU2}, {&out.RU1, &out.RU2}, g.interior());
  out.res_p = relative_residual({&out.LP}, {&out.RP}, g.interior());
  return out;
}

}  // namespace nsinv
