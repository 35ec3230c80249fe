#include "nsinv/carleman.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "nsinv/errors.hpp"

namespace nsinv {

namespace {

using Clock = std::chrono::steady_clock;
using Triplet = Eigen::Triplet<double>;
using SpMat = Eigen::SparseMatrix<double>;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Column layout: block b (velocity component or pressure), coefficient n,
/// node k.
struct Layout {
  int d;
  int nodes;
  int col(int block, int n, int k) const { return (block * d + n) * nodes + k; }
};

struct RowCounter {
  std::vector<Triplet> t;
  int rows = 0;
};

void add_laplacian(RowCounter& rc, const Grid2D& g, const Layout& L, int row, int block, int n, int k,
                   double scale) {
  const double ax = 1.0 / (g.hx() * g.hx()), ay = 1.0 / (g.hy() * g.hy());
  rc.t.emplace_back(row, L.col(block, n, k), -2.0 * (ax + ay) * scale);
  rc.t.emplace_back(row, L.col(block, n, k - 1), ax * scale);
  rc.t.emplace_back(row, L.col(block, n, k + 1), ax * scale);
  rc.t.emplace_back(row, L.col(block, n, k - g.nx()), ay * scale);
  rc.t.emplace_back(row, L.col(block, n, k + g.nx()), ay * scale);
}

void add_normal_derivative(RowCounter& rc, const Grid2D& g, const Layout& L, int row, int block, int n, int b,
                           double scale) {
  const int k = g.boundary()[b];
  const Normal nm = g.normals()[b];
  const double h = nm.nx != 0 ? g.hx() : g.hy();
  const int step = -(nm.nx + nm.ny * g.nx());
  rc.t.emplace_back(row, L.col(block, n, k), 1.5 / h * scale);
  rc.t.emplace_back(row, L.col(block, n, k + step), -2.0 / h * scale);
  rc.t.emplace_back(row, L.col(block, n, k + 2 * step), 0.5 / h * scale);
}

/// Regularization rows for one block: values at every node, plus second
/// differences in x and y at interior nodes for the h2 model.
int add_regularization(RowCounter& rc, const Grid2D& g, const Layout& L, int block, RegModel model, double scale) {
  const int start = rc.rows;
  for (int n = 0; n < L.d; ++n) {
    for (int k = 0; k < L.nodes; ++k) rc.t.emplace_back(rc.rows++, L.col(block, n, k), scale);
  }
  if (model == RegModel::h2) {
    const double ax = scale / (g.hx() * g.hx()), ay = scale / (g.hy() * g.hy());
    for (int n = 0; n < L.d; ++n) {
      for (int k : g.interior()) {
        rc.t.emplace_back(rc.rows, L.col(block, n, k - 1), ax);
        rc.t.emplace_back(rc.rows, L.col(block, n, k), -2.0 * ax);
        rc.t.emplace_back(rc.rows, L.col(block, n, k + 1), ax);
        ++rc.rows;
        rc.t.emplace_back(rc.rows, L.col(block, n, k - g.nx()), ay);
        rc.t.emplace_back(rc.rows, L.col(block, n, k), -2.0 * ay);
        rc.t.emplace_back(rc.rows, L.col(block, n, k + g.nx()), ay);
        ++rc.rows;
      }
    }
  }
  return rc.rows - start;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, Eigen::Index offset, int nodes, int d) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data() + offset, nodes, d);
}

}  // namespace

CarlemanWeight build_weight(const GridPtr& grid, const Eigen::Vector2d& x0, double beta, double lambda) {
  if (!(beta >= 0.0) || !(lambda >= 0.0)) throw ConfigError("build_weight: beta and lambda must be non-negative");
  CarlemanWeight w;
  w.x0 = x0;
  w.beta = beta;
  w.lambda = lambda;
  w.weight_field = ScalarField(grid);
  const Grid2D& g = *grid;
  for (int k = 0; k < g.size(); ++k) {
    const double r = std::hypot(g.x(g.col(k)) - x0.x(), g.y(g.row(k)) - x0.y());
    if (!(r > 1.0)) {
      throw ConfigError("build_weight: node (" + std::to_string(g.x(g.col(k))) + ", " +
                        std::to_string(g.y(g.row(k))) + ") is within distance 1 of x0");
    }
    const double v = std::exp(2.0 * lambda * std::pow(r, -beta));
    if (!std::isfinite(v)) throw ConfigError("build_weight: weight overflows; reduce lambda or move x0");
    w.weight_field.values[k] = v;
  }
  return w;
}

void PicardConfig::validate() const {
  if (N < 0) throw ConfigError("picard: N must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("picard: epsilon must be > 0");
  if (K_max < 1) throw ConfigError("picard: K_max must be >= 1");
  if (!(lambda >= 0.0) || !(beta >= 0.0)) throw ConfigError("picard: lambda and beta must be >= 0");
  if (bc_penalty == 0.0) throw ConfigError("picard: bc_penalty must be nonzero (negative selects the default)");
}

struct CarlemanSolver::Impl {
  GridPtr grid;
  ReductionMatrices mats;
  Eigen::MatrixXd S, R;  // structural (upper-triangular) parts
  CarlemanWeight weight;
  PicardConfig cfg;
  double viscosity;
  double bc;
  Eigen::VectorXd sw;  // sqrt of the weight
  Layout layout;
  int iteration = 0;

  struct System {
    std::string name;
    int blocks = 1;
    SpMat A;        // all columns
    SpMat A_fixed;  // eliminated columns
    std::vector<int> free_cols, fixed_cols;
    std::unique_ptr<SparseLeastSquares> lsq;
    StageDiagnostics diag;
    // Row offsets.
    int interior = 0, dirichlet = 0, neumann = 0, reg = 0;
  };
  std::unique_ptr<System> sysP, sysU, sysJ;
  std::vector<SolveDiagnostics> solves;
  mutable SpMat reg_op;  // one block, for the surrogate norm

  int d() const { return layout.d; }
  int nodes() const { return layout.nodes; }
  int nint() const { return static_cast<int>(grid->interior().size()); }
  int nb() const { return grid->boundary_count(); }
  bool eliminate() const { return cfg.bc_mode == BcMode::eliminate; }

  // Boundary rows (Dirichlet unless eliminated, then Neumann) for one block.
  void boundary_rows(RowCounter& rc, System& s, int block, bool first) {
    const Grid2D& g = *grid;
    if (!eliminate()) {
      if (first) s.dirichlet = rc.rows;
      for (int n = 0; n < d(); ++n) {
        for (int b = 0; b < nb(); ++b) rc.t.emplace_back(rc.rows++, layout.col(block, n, g.boundary()[b]), bc);
      }
    }
    if (first) s.neumann = rc.rows;
    for (int n = 0; n < d(); ++n) {
      for (int b = 0; b < nb(); ++b) add_normal_derivative(rc, g, layout, rc.rows++, block, n, b, bc);
    }
  }

  void pressure_interior(RowCounter& rc, int block) {
    const Grid2D& g = *grid;
    for (int m = 0; m < d(); ++m) {
      for (int s = 0; s < nint(); ++s) {
        const int k = g.interior()[s];
        const int row = rc.rows + m * nint() + s;
        for (int n = m; n < d(); ++n) {
          if (S(m, n) != 0.0) add_laplacian(rc, g, layout, row, block, n, k, sw[k] * S(m, n));
        }
      }
    }
    rc.rows += d() * nint();
  }

  // Velocity interior rows; when pblock >= 0 the pressure gradient coupling
  // of component `comp` enters as unknowns.
  void velocity_interior(RowCounter& rc, int block, int pblock, int comp) {
    const Grid2D& g = *grid;
    for (int m = 0; m < d(); ++m) {
      for (int s = 0; s < nint(); ++s) {
        const int k = g.interior()[s];
        const int row = rc.rows + m * nint() + s;
        for (int n = m; n < d(); ++n) {
          if (S(m, n) != 0.0) add_laplacian(rc, g, layout, row, block, n, k, sw[k] * viscosity * S(m, n));
          if (R(m, n) != 0.0) rc.t.emplace_back(row, layout.col(block, n, k), -sw[k] * R(m, n));
          if (pblock >= 0 && S(m, n) != 0.0) {
            const int step = comp == 0 ? 1 : g.nx();
            const double h = comp == 0 ? g.hx() : g.hy();
            const double c = -sw[k] * S(m, n) / (2.0 * h);
            rc.t.emplace_back(row, layout.col(pblock, n, k + step), c);
            rc.t.emplace_back(row, layout.col(pblock, n, k - step), -c);
          }
        }
      }
    }
    rc.rows += d() * nint();
  }

  void finish(System& s, RowCounter& rc, Clock::time_point t0) {
    const int cols = s.blocks * d() * nodes();
    SpMat A(rc.rows, cols);
    A.setFromTriplets(rc.t.begin(), rc.t.end());
    rc.t.clear();
    rc.t.shrink_to_fit();
    A.makeCompressed();
    // Fixed columns: boundary nodes of every block whose Dirichlet rows were
    // eliminated.
    std::vector<char> fixed(cols, 0);
    if (eliminate()) {
      for (int b = 0; b < s.blocks; ++b) {
        for (int n = 0; n < d(); ++n) {
          for (int k : grid->boundary()) fixed[layout.col(b, n, k)] = 1;
        }
      }
    }
    for (int c = 0; c < cols; ++c) (fixed[c] ? s.fixed_cols : s.free_cols).push_back(c);
    auto select = [&](const std::vector<int>& which) {
      SpMat P(cols, static_cast<int>(which.size()));
      std::vector<Triplet> t;
      t.reserve(which.size());
      for (std::size_t j = 0; j < which.size(); ++j) t.emplace_back(which[j], static_cast<int>(j), 1.0);
      P.setFromTriplets(t.begin(), t.end());
      return P;
    };
    SpMat A_free = s.fixed_cols.empty() ? A : SpMat(A * select(s.free_cols));
    if (!s.fixed_cols.empty()) s.A_fixed = A * select(s.fixed_cols);
    s.diag.assembly_seconds = seconds_since(t0);
    s.lsq = std::make_unique<SparseLeastSquares>(A_free);
    s.diag.lsq = s.lsq->stats();
    s.diag.stage = s.name;
    s.A = std::move(A);
    if (s.diag.lsq.rank < static_cast<long>(s.free_cols.size())) {
      throw SolverError(s.name + " stage: rank deficient system (rank " + std::to_string(s.diag.lsq.rank) +
                        " of " + std::to_string(s.free_cols.size()) + " columns)");
    }
  }

  System& system_P() {
    if (sysP) return *sysP;
    auto s = std::make_unique<System>();
    s->name = "P";
    const auto t0 = Clock::now();
    RowCounter rc;
    s->interior = 0;
    pressure_interior(rc, 0);
    boundary_rows(rc, *s, 0, true);
    s->reg = rc.rows;
    add_regularization(rc, *grid, layout, 0, cfg.reg_model, std::sqrt(cfg.epsilon));
    s->diag.interior_rows = static_cast<long>(d()) * nint();
    s->diag.boundary_rows = s->reg - d() * nint();
    s->diag.reg_rows = rc.rows - s->reg;
    finish(*s, rc, t0);
    sysP = std::move(s);
    return *sysP;
  }

  System& system_U() {
    if (sysU) return *sysU;
    auto s = std::make_unique<System>();
    s->name = "U";
    const auto t0 = Clock::now();
    RowCounter rc;
    velocity_interior(rc, 0, -1, 0);
    boundary_rows(rc, *s, 0, true);
    s->reg = rc.rows;
    add_regularization(rc, *grid, layout, 0, cfg.reg_model, std::sqrt(cfg.epsilon));
    s->diag.interior_rows = static_cast<long>(d()) * nint();
    s->diag.boundary_rows = s->reg - d() * nint();
    s->diag.reg_rows = rc.rows - s->reg;
    finish(*s, rc, t0);
    sysU = std::move(s);
    return *sysU;
  }

  // Joint system: blocks W1 = 0, W2 = 1, R = 2. Rows: pressure interior,
  // velocity interior (component 1 then 2), boundary rows per block, then
  // regularization per block.
  System& system_J() {
    if (sysJ) return *sysJ;
    auto s = std::make_unique<System>();
    s->name = "joint";
    s->blocks = 3;
    const auto t0 = Clock::now();
    RowCounter rc;
    pressure_interior(rc, 2);
    velocity_interior(rc, 0, 2, 0);
    velocity_interior(rc, 1, 2, 1);
    const int bstart = rc.rows;
    boundary_rows(rc, *s, 2, true);
    boundary_rows(rc, *s, 0, false);
    boundary_rows(rc, *s, 1, false);
    s->reg = rc.rows;
    for (int b : {2, 0, 1}) add_regularization(rc, *grid, layout, b, cfg.reg_model, std::sqrt(cfg.epsilon));
    s->diag.interior_rows = 3L * d() * nint();
    s->diag.boundary_rows = s->reg - bstart;
    s->diag.reg_rows = rc.rows - s->reg;
    finish(*s, rc, t0);
    sysJ = std::move(s);
    return *sysJ;
  }

  void check_data(const ProjectedBoundaryData& data) const {
    if (data.N != cfg.N) throw DataError("carleman: boundary data order differs from solver N");
    for (const Eigen::MatrixXd* m : {&data.gamma1, &data.gamma2, &data.h1, &data.h2}) {
      if (m->rows() != nb() || m->cols() != d()) throw DataError("carleman: boundary data shape mismatch");
    }
  }

  void check_stack(const CoeffStack& s) const {
    if (s.N != cfg.N || s.u1.rows() != nodes()) throw DataError("carleman: stack does not match solver grid/N");
  }

  // Boundary right-hand side of one block: Dirichlet values then Neumann values.
  void boundary_rhs(Eigen::VectorXd& b, int& row, const Eigen::MatrixXd* dirichlet,
                    const Eigen::MatrixXd& neumann) const {
    if (!eliminate()) {
      for (int n = 0; n < d(); ++n) {
        for (int i = 0; i < nb(); ++i) b[row++] = dirichlet ? bc * (*dirichlet)(i, n) : 0.0;
      }
    }
    for (int n = 0; n < d(); ++n) {
      for (int i = 0; i < nb(); ++i) b[row++] = bc * neumann(i, n);
    }
  }

  void interior_rhs(Eigen::VectorXd& b, int& row, const Eigen::MatrixXd& src) const {
    const auto& in = grid->interior();
    for (int m = 0; m < d(); ++m) {
      for (int s = 0; s < nint(); ++s) b[row++] = sw[in[s]] * src(in[s], m);
    }
  }

  Eigen::VectorXd rhs_P(const System& s, const NonlinearTerms& nl, const ProjectedBoundaryData& data) const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(s.A.rows());
    int row = 0;
    interior_rhs(b, row, nl.G);
    boundary_rhs(b, row, &data.h1, data.h2);
    return b;
  }

  Eigen::MatrixXd rhs_U(const System& s, const NonlinearTerms& nl, const Eigen::MatrixXd& P_new,
                        const ProjectedBoundaryData& data) const {
    Eigen::MatrixXd px, py;
    stack_gradient(*grid, P_new, px, py);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(s.A.rows(), 2);
    const Eigen::MatrixXd src1 = nl.F1 + px * S.transpose();
    const Eigen::MatrixXd src2 = nl.F2 + py * S.transpose();
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd col = Eigen::VectorXd::Zero(s.A.rows());
      int row = 0;
      interior_rhs(col, row, c == 0 ? src1 : src2);
      boundary_rhs(col, row, nullptr, c == 0 ? data.gamma1 : data.gamma2);
      b.col(c) = col;
    }
    return b;
  }

  Eigen::VectorXd rhs_J(const System& s, const NonlinearTerms& nl, const ProjectedBoundaryData& data) const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(s.A.rows());
    int row = 0;
    interior_rhs(b, row, nl.G);
    interior_rhs(b, row, nl.F1);
    interior_rhs(b, row, nl.F2);
    boundary_rhs(b, row, &data.h1, data.h2);
    boundary_rhs(b, row, nullptr, data.gamma1);
    boundary_rhs(b, row, nullptr, data.gamma2);
    return b;
  }

  // Solves for every column of B with the given fixed-column values.
  Eigen::MatrixXd solve(System& s, const Eigen::MatrixXd& B, const Eigen::MatrixXd& x_fixed) {
    const auto t0 = Clock::now();
    Eigen::MatrixXd rhs = B;
    if (!s.fixed_cols.empty()) rhs -= s.A_fixed * x_fixed;
    const Eigen::MatrixXd y = s.lsq->solve(rhs);
    Eigen::MatrixXd x(s.A.cols(), B.cols());
    for (std::size_t j = 0; j < s.free_cols.size(); ++j) x.row(s.free_cols[j]) = y.row(j);
    for (std::size_t j = 0; j < s.fixed_cols.size(); ++j) x.row(s.fixed_cols[j]) = x_fixed.row(j);
    const double elapsed = seconds_since(t0);
    const double anorm = s.A.norm();
    for (Eigen::Index c = 0; c < B.cols(); ++c) {
      SolveDiagnostics sd;
      sd.stage = s.name;
      sd.k = iteration;
      const Eigen::VectorXd r = B.col(c) - s.A * x.col(c);
      sd.rhs_norm = B.col(c).norm();
      sd.residual_norm = r.norm();
      sd.normal_residual = (s.A.transpose() * r).norm() / (anorm * sd.residual_norm + 1e-300);
      sd.solve_seconds = elapsed / static_cast<double>(B.cols());
      solves.push_back(sd);
    }
    return x;
  }

  Eigen::MatrixXd fixed_values(const System& s, const Eigen::MatrixXd* dirichlet_p, int cols) const {
    Eigen::MatrixXd xf = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.fixed_cols.size()), cols);
    if (!dirichlet_p) return xf;
    // Pressure block values; for the joint system the pressure block is 2.
    const int pblock = s.blocks == 3 ? 2 : 0;
    std::vector<int> slot(nodes(), -1);
    for (int b = 0; b < nb(); ++b) slot[grid->boundary()[b]] = b;
    for (std::size_t j = 0; j < s.fixed_cols.size(); ++j) {
      const int c = s.fixed_cols[j];
      const int block = c / (d() * nodes());
      if (block != pblock) continue;
      const int n = (c / nodes()) % d();
      const int k = c % nodes();
      xf.row(static_cast<Eigen::Index>(j)).setConstant((*dirichlet_p)(slot[k], n));
    }
    return xf;
  }

  double objective(const System& s, const Eigen::VectorXd& x, const Eigen::VectorXd& b) const {
    return (s.A * x - b).squaredNorm();
  }

  const SpMat& regularization_operator() const {
    if (reg_op.rows() == 0) {
      RowCounter rc;
      add_regularization(rc, *grid, layout, 0, cfg.reg_model, 1.0);
      reg_op.resize(rc.rows, d() * nodes());
      reg_op.setFromTriplets(rc.t.begin(), rc.t.end());
    }
    return reg_op;
  }
};

CarlemanSolver::CarlemanSolver(GridPtr grid, const ReductionMatrices& mats, CarlemanWeight weight, PicardConfig cfg,
                               double viscosity)
    : impl_(std::make_unique<Impl>()) {
  cfg.validate();
  if (mats.N != cfg.N) throw ConfigError("carleman: reduction matrices order differs from config N");
  if (weight.weight_field.values.size() != grid->size()) {
    throw ConfigError("carleman: weight field does not match the grid");
  }
  Impl& m = *impl_;
  m.grid = std::move(grid);
  m.mats = mats;
  m.S = structural_S(mats);
  m.R = structural_R(mats);
  m.weight = std::move(weight);
  m.cfg = cfg;
  m.viscosity = viscosity;
  m.layout = Layout{cfg.N + 1, m.grid->size()};
  m.sw = m.weight.weight_field.values.array().sqrt();
  const double h = std::min(m.grid->hx(), m.grid->hy());
  m.bc = cfg.bc_penalty > 0.0 ? cfg.bc_penalty : std::sqrt(m.weight.weight_field.values.maxCoeff()) / h;
}

CarlemanSolver::~CarlemanSolver() = default;
CarlemanSolver::CarlemanSolver(CarlemanSolver&&) noexcept = default;
CarlemanSolver& CarlemanSolver::operator=(CarlemanSolver&&) noexcept = default;

Eigen::MatrixXd CarlemanSolver::solve_P(const CoeffStack& frozen, const ProjectedBoundaryData& data) {
  Impl& m = *impl_;
  m.check_data(data);
  m.check_stack(frozen);
  auto& s = m.system_P();
  const NonlinearTerms nl = eval_nonlinear(frozen, m.mats);
  const Eigen::VectorXd b = m.rhs_P(s, nl, data);
  const Eigen::MatrixXd x = m.solve(s, b, m.fixed_values(s, &data.h1, 1));
  return unflatten(x.col(0), 0, m.nodes(), m.d());
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> CarlemanSolver::solve_U(const CoeffStack& frozen,
                                                                    const Eigen::MatrixXd& P_new,
                                                                    const ProjectedBoundaryData& data) {
  Impl& m = *impl_;
  m.check_data(data);
  m.check_stack(frozen);
  auto& s = m.system_U();
  const NonlinearTerms nl = eval_nonlinear(frozen, m.mats);
  const Eigen::MatrixXd b = m.rhs_U(s, nl, P_new, data);
  const Eigen::MatrixXd x = m.solve(s, b, m.fixed_values(s, nullptr, 2));
  return {unflatten(x.col(0), 0, m.nodes(), m.d()), unflatten(x.col(1), 0, m.nodes(), m.d())};
}

CoeffStack CarlemanSolver::solve_joint(const CoeffStack& frozen, const ProjectedBoundaryData& data) {
  Impl& m = *impl_;
  m.check_data(data);
  m.check_stack(frozen);
  auto& s = m.system_J();
  const NonlinearTerms nl = eval_nonlinear(frozen, m.mats);
  const Eigen::VectorXd b = m.rhs_J(s, nl, data);
  const Eigen::MatrixXd x = m.solve(s, b, m.fixed_values(s, &data.h1, 1));
  CoeffStack out = CoeffStack::zeros(m.grid, m.cfg.N);
  const Eigen::Index block = static_cast<Eigen::Index>(m.d()) * m.nodes();
  out.u1 = unflatten(x.col(0), 0, m.nodes(), m.d());
  out.u2 = unflatten(x.col(0), block, m.nodes(), m.d());
  out.p = unflatten(x.col(0), 2 * block, m.nodes(), m.d());
  return out;
}

double CarlemanSolver::objective_P(const Eigen::MatrixXd& R, const CoeffStack& frozen,
                                   const ProjectedBoundaryData& data) const {
  Impl& m = *impl_;
  m.check_data(data);
  auto& s = m.system_P();
  const NonlinearTerms nl = eval_nonlinear(frozen, m.mats);
  return m.objective(s, flatten(R), m.rhs_P(s, nl, data));
}

double CarlemanSolver::objective_U(const Eigen::MatrixXd& W1, const Eigen::MatrixXd& W2, const CoeffStack& frozen,
                                   const Eigen::MatrixXd& P_new, const ProjectedBoundaryData& data) const {
  Impl& m = *impl_;
  m.check_data(data);
  auto& s = m.system_U();
  const NonlinearTerms nl = eval_nonlinear(frozen, m.mats);
  const Eigen::MatrixXd b = m.rhs_U(s, nl, P_new, data);
  return m.objective(s, flatten(W1), b.col(0)) + m.objective(s, flatten(W2), b.col(1));
}

double CarlemanSolver::surrogate_norm(const CoeffStack& X) const {
  const Impl& m = *impl_;
  const Grid2D& g = *m.grid;
  const Eigen::VectorXd& w = m.weight.weight_field.values;
  double pointwise = 0.0;
  for (const Eigen::MatrixXd* f : {&X.u1, &X.u2, &X.p}) {
    Eigen::MatrixXd fx, fy;
    stack_gradient(g, *f, fx, fy);
    const Eigen::VectorXd local =
        f->rowwise().squaredNorm() + fx.rowwise().squaredNorm() + fy.rowwise().squaredNorm();
    pointwise += local.dot(w);
  }
  pointwise *= g.hx() * g.hy();
  const SpMat& reg = m.regularization_operator();
  double regnorm = 0.0;
  for (const Eigen::MatrixXd* f : {&X.u1, &X.u2, &X.p}) regnorm += (reg * flatten(*f)).squaredNorm();
  const double scale = m.cfg.lambda > 0.0 ? m.cfg.epsilon / m.cfg.lambda : m.cfg.epsilon;
  return std::sqrt(pointwise + scale * regnorm);
}

const CarlemanWeight& CarlemanSolver::weight() const { return impl_->weight; }
const PicardConfig& CarlemanSolver::config() const { return impl_->cfg; }
double CarlemanSolver::bc_penalty() const { return impl_->bc; }

std::vector<StageDiagnostics> CarlemanSolver::stage_diagnostics() const {
  std::vector<StageDiagnostics> out;
  for (const auto* s : {impl_->sysP.get(), impl_->sysU.get(), impl_->sysJ.get()}) {
    if (s) out.push_back(s->diag);
  }
  return out;
}

const std::vector<SolveDiagnostics>& CarlemanSolver::solve_diagnostics() const { return impl_->solves; }
void CarlemanSolver::set_iteration(int k) { impl_->iteration = k; }

Eigen::MatrixXd solve_P_stage(const CoeffStack& frozen, const ProjectedBoundaryData& data,
                              const ReductionMatrices& mats, const CarlemanWeight& w, const PicardConfig& cfg) {
  CarlemanSolver solver(frozen.grid, mats, w, cfg, 1.0);
  return solver.solve_P(frozen, data);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> solve_U_stage(const CoeffStack& frozen, const Eigen::MatrixXd& P_new,
                                                          const ProjectedBoundaryData& data,
                                                          const ReductionMatrices& mats, const CarlemanWeight& w,
                                                          const PicardConfig& cfg, double viscosity) {
  CarlemanSolver solver(frozen.grid, mats, w, cfg, viscosity);
  return solver.solve_U(frozen, P_new, data);
}

double relative_change(const Grid2D& g, const std::vector<const Eigen::MatrixXd*>& a,
                       const std::vector<const Eigen::MatrixXd*>& b) {
  const Eigen::VectorXd& q = g.quadrature_weights();
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    num += q.dot((*a[c] - *b[c]).rowwise().squaredNorm());
    den += q.dot(a[c]->rowwise().squaredNorm());
  }
  return den == 0.0 ? 0.0 : std::sqrt(num / den);
}

PicardResult picard_iterate(const ProjectedBoundaryData& data, const ReductionMatrices& mats,
                            const BasisSet& basis, const GridPtr& grid, const PicardConfig& cfg, double viscosity,
                            const PicardOptions& opts) {
  cfg.validate();
  if (basis.order() != cfg.N) throw ConfigError("picard: basis order differs from config N");
  CarlemanSolver solver(grid, mats, build_weight(grid, cfg.x0, cfg.beta, cfg.lambda), cfg, viscosity);
  return picard_iterate(solver, data, mats, grid, viscosity, opts);
}

PicardResult picard_iterate(CarlemanSolver& solver, const ProjectedBoundaryData& data,
                            const ReductionMatrices& mats, const GridPtr& grid, double viscosity,
                            const PicardOptions& opts) {
  const PicardConfig& cfg = solver.config();
  PicardResult out;
  CoeffStack X = opts.initial ? *opts.initial : CoeffStack::zeros(grid, cfg.N);
  if (opts.keep_iterates) out.iterates.push_back(X);
  double prev_step = std::numeric_limits<double>::quiet_NaN();
  for (int k = 0; k < cfg.K_max; ++k) {
    solver.set_iteration(k);
    IterationRecord rec;
    rec.k = k;
    CoeffStack Xn = CoeffStack::zeros(grid, cfg.N);
    try {
      if (cfg.solve_mode == SolveMode::staged) {
        Xn.p = solver.solve_P(X, data);
        std::tie(Xn.u1, Xn.u2) = solver.solve_U(X, Xn.p, data);
      } else {
        Xn = solver.solve_joint(X, data);
      }
      rec.objP_in = solver.objective_P(X.p, X, data);
      rec.objP_out = solver.objective_P(Xn.p, X, data);
      rec.objU_in = solver.objective_U(X.u1, X.u2, X, Xn.p, data);
      rec.objU_out = solver.objective_U(Xn.u1, Xn.u2, X, Xn.p, data);
    } catch (const SolverError& e) {
      out.error = "iteration " + std::to_string(k) + ": " + e.what();
      break;
    }
    rec.relU = relative_change(*grid, {&Xn.u1, &Xn.u2}, {&X.u1, &X.u2});
    rec.relP = relative_change(*grid, {&Xn.p}, {&X.p});
    const ReducedResiduals res = residuals(Xn, mats, viscosity);
    rec.resU = res.res_u;
    rec.resP = res.res_p;
    CoeffStack diff = Xn;
    diff.u1 -= X.u1;
    diff.u2 -= X.u2;
    diff.p -= X.p;
    rec.step_norm = solver.surrogate_norm(diff);
    if (k == 0) {
      rec.ratio = std::numeric_limits<double>::quiet_NaN();
    } else if (prev_step == 0.0) {
      rec.ratio = rec.step_norm == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      rec.ratio = rec.step_norm / prev_step;
    }
    prev_step = rec.step_norm;
    rec.linf_u = std::max(Xn.u1.cwiseAbs().maxCoeff(), Xn.u2.cwiseAbs().maxCoeff());
    rec.linf_p = Xn.p.cwiseAbs().maxCoeff();
    rec.linf_violation = cfg.linf_bound > 0.0 && std::max(rec.linf_u, rec.linf_p) > cfg.linf_bound;
    out.history.iterations.push_back(rec);
    X = std::move(Xn);
    if (opts.keep_iterates) out.iterates.push_back(X);
  }
  out.stack = std::move(X);
  out.stages = solver.stage_diagnostics();
  out.solves = solver.solve_diagnostics();
  return out;
}

void write_history_csv(const std::string& path, const ConvergenceHistory& h) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "k,relU,relP,ResU,ResP,ratio,step_norm,objP_in,objP_out,objU_in,objU_out,linf_u,linf_p\n";
  os << std::setprecision(17);
  for (const auto& r : h.iterations) {
    os << r.k << ',' << r.relU << ',' << r.relP << ',' << r.resU << ',' << r.resP << ',' << r.ratio << ','
       << r.step_norm << ',' << r.objP_in << ',' << r.objP_out << ',' << r.objU_in << ',' << r.objU_out << ','
       << r.linf_u << ',' << r.linf_p << '\n';
  }
}

}  // namespace nsinv
