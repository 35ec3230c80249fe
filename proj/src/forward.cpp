#include "nsinv/forward.hpp"

#include <cmath>
#include <random>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "nsinv/errors.hpp"
#include "nsinv/kernels.hpp"

namespace nsinv {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

kernels::Dims dims(const Grid2D& g) { return {g.nx(), g.ny(), g.hx(), g.hy()}; }

double sup_norm(const VectorField2& u) {
  return std::max(u.u1.values.cwiseAbs().maxCoeff(), u.u2.values.cwiseAbs().maxCoeff());
}

// max |d^3 f / dx^3| (along_x) or |d^3 f / dy^3| from the centred 5-point
// third difference, over the nodes where the stencil fits.
double max_third_derivative(const ScalarField& f, bool along_x) {
  const Grid2D& g = *f.grid;
  const int di = along_x ? 1 : 0, dj = along_x ? 0 : 1;
  const double h = along_x ? g.hx() : g.hy();
  double m = 0.0;
  for (int j = 2 * dj; j < g.ny() - 2 * dj; ++j) {
    for (int i = 2 * di; i < g.nx() - 2 * di; ++i) {
      const double d = f(i + 2 * di, j + 2 * dj) - 2.0 * f(i + di, j + dj) + 2.0 * f(i - di, j - dj) -
                       f(i - 2 * di, j - 2 * dj);
      m = std::max(m, std::abs(d) / (2.0 * h * h * h));
    }
  }
  return m;
}

}  // namespace

int ForwardConfig::steps() const {
  if (!(dt > 0.0)) throw ConfigError("forward: dt must be > 0");
  if (!(T > 0.0)) throw ConfigError("forward: T must be > 0");
  const double ratio = T / dt;
  const double r = std::round(ratio);
  if (std::abs(ratio - r) > 1e-9 * std::max(1.0, r) || r < 1) throw ConfigError("forward: T/dt is not an integer");
  return static_cast<int>(r);
}

double default_div_tol(const Grid2D& grid, const VectorField2& u0) {
  // Central differences of a divergence-free field leave
  // (hx^2 d_xxx u1 + hy^2 d_yyy u2) / 6 + O(h^4); allow twice that bound.
  const double hx = grid.hx(), hy = grid.hy();
  const double curvature = (hx * hx * max_third_derivative(u0.u1, true) +
                            hy * hy * max_third_derivative(u0.u2, false)) / 6.0;
  return 1e-8 * sup_norm(u0) + 2.0 * curvature;
}

struct ForwardOperators::Impl {
  Eigen::SparseLU<SpMat> poisson;
  Eigen::SimplicialLDLT<SpMat> helmholtz;
  std::vector<int> interior_slot;  // node -> interior unknown or -1
};

ForwardOperators::ForwardOperators(GridPtr grid, double dt, double viscosity)
    : grid_(std::move(grid)), dt_(dt), viscosity_(viscosity), impl_(std::make_unique<Impl>()) {
  const Grid2D& g = *grid_;
  const int n = g.size();
  const double ihx2 = 1.0 / (g.hx() * g.hx());
  const double ihy2 = 1.0 / (g.hy() * g.hy());

  // Neumann-Poisson with zero-mean constraint; unknown n is the multiplier.
  std::vector<Triplet> t;
  for (int k : g.interior()) {
    t.emplace_back(k, k, -2.0 * (ihx2 + ihy2));
    t.emplace_back(k, k + 1, ihx2);
    t.emplace_back(k, k - 1, ihx2);
    t.emplace_back(k, k + g.nx(), ihy2);
    t.emplace_back(k, k - g.nx(), ihy2);
    t.emplace_back(k, n, 1.0);
  }
  const auto& bnodes = g.boundary();
  const auto& normals = g.normals();
  for (std::size_t b = 0; b < bnodes.size(); ++b) {
    const int k = bnodes[b];
    const Normal nu = normals[b];
    const double h = nu.nx != 0 ? g.hx() : g.hy();
    const int step = -(nu.nx + nu.ny * g.nx());
    t.emplace_back(k, k, 3.0 / (2.0 * h));
    t.emplace_back(k, k + step, -4.0 / (2.0 * h));
    t.emplace_back(k, k + 2 * step, 1.0 / (2.0 * h));
  }
  const Eigen::VectorXd& w = g.quadrature_weights();
  for (int k = 0; k < n; ++k) t.emplace_back(n, k, w[k]);
  SpMat A(n + 1, n + 1);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  impl_->poisson.analyzePattern(A);
  impl_->poisson.factorize(A);
  if (impl_->poisson.info() != Eigen::Success) {
    throw SolverError("forward: Neumann-Poisson factorization failed");
  }

  // Implicit diffusion on interior unknowns (Dirichlet zero eliminated).
  impl_->interior_slot.assign(n, -1);
  const auto& inner = g.interior();
  for (std::size_t s = 0; s < inner.size(); ++s) impl_->interior_slot[inner[s]] = static_cast<int>(s);
  std::vector<Triplet> h;
  const double a = dt_ * viscosity_;
  for (std::size_t s = 0; s < inner.size(); ++s) {
    const int k = inner[s];
    h.emplace_back(s, s, 1.0 + 2.0 * a * (ihx2 + ihy2));
    for (auto [nb, c] : {std::pair{k + 1, ihx2}, {k - 1, ihx2}, {k + g.nx(), ihy2}, {k - g.nx(), ihy2}}) {
      const int slot = impl_->interior_slot[nb];
      if (slot >= 0) h.emplace_back(s, slot, -a * c);
    }
  }
  SpMat H(inner.size(), inner.size());
  H.setFromTriplets(h.begin(), h.end());
  impl_->helmholtz.compute(H);
  if (impl_->helmholtz.info() != Eigen::Success) {
    throw SolverError("forward: diffusion operator factorization failed");
  }
}

ForwardOperators::~ForwardOperators() = default;
ForwardOperators::ForwardOperators(ForwardOperators&&) noexcept = default;
ForwardOperators& ForwardOperators::operator=(ForwardOperators&&) noexcept = default;

ScalarField ForwardOperators::solve_neumann_poisson(const ScalarField& rhs,
                                                    const Eigen::VectorXd& neumann) const {
  const Grid2D& g = *grid_;
  const int n = g.size();
  if (neumann.size() != g.boundary_count()) throw DataError("poisson: Neumann data size mismatch");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
  for (int k : g.interior()) b[k] = rhs.values[k];
  const auto& bnodes = g.boundary();
  for (std::size_t i = 0; i < bnodes.size(); ++i) b[bnodes[i]] = neumann[i];
  const Eigen::VectorXd x = impl_->poisson.solve(b);
  if (impl_->poisson.info() != Eigen::Success || !x.allFinite()) {
    throw SolverError("forward: Neumann-Poisson solve failed");
  }
  last_multiplier_ = x[n];
  return ScalarField(grid_, x.head(n));
}

ScalarField ForwardOperators::pressure(const VectorField2& u, const VectorField2& force) const {
  const Grid2D& g = *grid_;
  const auto d = dims(g);
  const int n = g.size();
  Eigen::VectorXd u1x(n), u1y(n), u2x(n), u2y(n), f1x(n), f1y(n), f2x(n), f2y(n);
  kernels::omp::gradient(d, u.u1.values.data(), u1x.data(), u1y.data());
  kernels::omp::gradient(d, u.u2.values.data(), u2x.data(), u2y.data());
  kernels::omp::gradient(d, force.u1.values.data(), f1x.data(), f1y.data());
  kernels::omp::gradient(d, force.u2.values.data(), f2x.data(), f2y.data());
  // -sum_ij d_i u_j d_j u_i + div f
  ScalarField rhs(grid_);
  rhs.values = -(u1x.cwiseAbs2() + 2.0 * u2x.cwiseProduct(u1y) + u2y.cwiseAbs2()) + f1x + f2y;

  // d_nu p = nu . (mu Lap u + f) on the boundary.
  const Eigen::VectorXd lap1 = boundary_laplacian(u.u1);
  const Eigen::VectorXd lap2 = boundary_laplacian(u.u2);
  const auto& bnodes = g.boundary();
  const auto& normals = g.normals();
  Eigen::VectorXd neumann(bnodes.size());
  for (std::size_t b = 0; b < bnodes.size(); ++b) {
    const int k = bnodes[b];
    neumann[b] = normals[b].nx * (viscosity_ * lap1[b] + force.u1.values[k]) +
                 normals[b].ny * (viscosity_ * lap2[b] + force.u2.values[k]);
  }
  return solve_neumann_poisson(rhs, neumann);
}

VectorField2 ForwardOperators::step(const VectorField2& u, const ScalarField& p,
                                    const VectorField2& force) const {
  const Grid2D& g = *grid_;
  const auto d = dims(g);
  const int n = g.size();
  Eigen::VectorXd c1(n), c2(n), px(n), py(n);
  kernels::omp::convection(d, u.u1.values.data(), u.u2.values.data(), u.u1.values.data(), c1.data());
  kernels::omp::convection(d, u.u1.values.data(), u.u2.values.data(), u.u2.values.data(), c2.data());
  kernels::omp::gradient(d, p.values.data(), px.data(), py.data());

  const auto& inner = g.interior();
  const int m = static_cast<int>(inner.size());
  Eigen::MatrixXd rhs(m, 2);
  for (int s = 0; s < m; ++s) {
    const int k = inner[s];
    rhs(s, 0) = u.u1.values[k] + dt_ * (-c1[k] - px[k] + force.u1.values[k]);
    rhs(s, 1) = u.u2.values[k] + dt_ * (-c2[k] - py[k] + force.u2.values[k]);
  }
  const Eigen::MatrixXd sol = impl_->helmholtz.solve(rhs);
  if (impl_->helmholtz.info() != Eigen::Success || !sol.allFinite()) {
    throw SolverError("forward: velocity solve failed");
  }
  VectorField2 out(grid_);
  for (int s = 0; s < m; ++s) {
    out.u1.values[inner[s]] = sol(s, 0);
    out.u2.values[inner[s]] = sol(s, 1);
  }
  return out;
}

ScalarField pressure_solve(const VectorField2& u, const VectorField2& force, double viscosity,
                           const GridPtr& grid) {
  ForwardOperators ops(grid, 1.0, viscosity);
  return ops.pressure(u, force);
}

VectorField2 step_velocity(const VectorField2& u, const ScalarField& p, const VectorField2& force,
                           const ForwardConfig& cfg) {
  ForwardOperators ops(cfg.grid, cfg.dt, cfg.viscosity);
  return ops.step(u, p, force);
}

ForwardResult run_forward(const ForwardConfig& cfg) {
  if (!cfg.grid) throw ConfigError("forward: no grid");
  if (!(cfg.viscosity > 0.0)) throw ConfigError("forward: viscosity must be > 0");
  const int steps = cfg.steps();
  const Grid2D& g = *cfg.grid;
  if (cfg.u0.grid()->size() != g.size() || cfg.force.grid()->size() != g.size()) {
    throw ConfigError("forward: u0/force grid does not match");
  }
  const double div_tol = cfg.div_tol >= 0.0 ? cfg.div_tol : default_div_tol(g, cfg.u0);
  const double div0 = interior_max_abs(divergence(cfg.u0));
  if (div0 > div_tol) {
    throw ConfigError("forward: u0 is not divergence-free: max |div u0| = " + std::to_string(div0) +
                      " > tol " + std::to_string(div_tol));
  }
  if (cfg.snapshot_every < 0 || (cfg.snapshot_every > 0 && steps % cfg.snapshot_every != 0)) {
    throw ConfigError("forward: snapshot_every must divide the step count");
  }

  ForwardOperators ops(cfg.grid, cfg.dt, cfg.viscosity);
  const int nb = g.boundary_count();
  const int levels = steps + 1;

  ForwardResult out;
  BoundaryRecord& rec = out.record;
  rec.nx = g.nx();
  rec.ny = g.ny();
  rec.dt = cfg.dt;
  rec.T = cfg.T;
  rec.times.resize(levels);
  for (int n = 0; n < levels; ++n) rec.times[n] = (n == steps) ? cfg.T : n * cfg.dt;
  rec.g1.resize(levels, nb);
  rec.g2.resize(levels, nb);
  rec.h1.resize(levels, nb);
  rec.h2.resize(levels, nb);

  std::vector<int> snapshot_levels;
  for (double ts : cfg.snapshot_times) {
    if (ts < 0.0 || ts > cfg.T) throw ConfigError("forward: snapshot time outside [0, T]");
    snapshot_levels.push_back(static_cast<int>(std::lround(ts / cfg.dt)));
  }

  VectorField2 u = cfg.u0;
  out.u0 = cfg.u0;
  for (int n = 0; n < levels; ++n) {
    const ScalarField p = ops.pressure(u, cfg.force);
    if (n == 0) out.p0 = p;
    rec.g1.row(n) = normal_derivative(u.u1).transpose();
    rec.g2.row(n) = normal_derivative(u.u2).transpose();
    rec.h1.row(n) = boundary_trace(p).transpose();
    rec.h2.row(n) = normal_derivative(p).transpose();

    const double div = interior_max_abs(divergence(u));
    const double sup = sup_norm(u);
    out.div_history.push_back(div);
    out.sup_history.push_back(sup);
    out.energy_history.push_back(std::sqrt(u.u1.values.squaredNorm() + u.u2.values.squaredNorm()));
    const double bound = std::max(cfg.watchdog_growth * div0, cfg.watchdog_factor * sup);
    if (n > 0 && div > bound && div > 1e-14) {
      throw SolverError("forward: divergence watchdog at level " + std::to_string(n) +
                        ": max |div u| = " + std::to_string(div) + " > bound " + std::to_string(bound) +
                        " (||u||_inf = " + std::to_string(sup) + ")");
    }
    bool keep = cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0;
    for (int l : snapshot_levels) keep = keep || l == n;
    if (keep) out.snapshots.push_back(Snapshot{n, rec.times[n], u, p});

    if (n < steps) u = ops.step(u, p, cfg.force);
  }
  return out;
}

double unit_uniform(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

BoundaryRecord add_noise(const BoundaryRecord& rec, double delta, std::uint64_t seed) {
  if (delta < 0.0) throw ConfigError("noise: delta must be >= 0");
  BoundaryRecord out = rec;
  out.noise_level = delta;
  out.rng_seed = seed;
  if (delta == 0.0) return out;
  std::mt19937_64 gen(seed);
  for (Eigen::MatrixXd* m : {&out.g1, &out.g2, &out.h1, &out.h2}) {
    for (Eigen::Index l = 0; l < m->rows(); ++l) {
      for (Eigen::Index b = 0; b < m->cols(); ++b) {
        const double r = unit_uniform(gen());
        (*m)(l, b) *= 1.0 + delta * (1.0 - 2.0 * r);
      }
    }
  }
  return out;
}

}  // namespace nsinv
