#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsinv/grid.hpp"

namespace nsinv {

struct ForwardConfig {
  GridPtr grid;
  double dt = 1e-4;
  double T = 0.4;
  double viscosity = 1.0;
  VectorField2 force;
  VectorField2 u0;
  /// Tolerance on max interior |div_h u0|. Negative selects the default
  /// (see default_div_tol).
  double div_tol = -1.0;
  /// Abort when max interior |div u^n| exceeds both watchdog_growth times its
  /// value at n = 0 and watchdog_factor * ||u^n||_inf.
  double watchdog_growth = 10.0;
  double watchdog_factor = 1e-2;
  /// Store (u, p) at the levels nearest to these times.
  std::vector<double> snapshot_times;
  /// Store (u, p) at every k-th level (0 disables). Must divide the step count.
  int snapshot_every = 0;

  int steps() const;
};

/// Default u0 divergence tolerance: 1e-8 ||u0||_inf plus twice the leading
/// truncation error (hx^2 max|d_xxx u1| + hy^2 max|d_yyy u2|) / 6 of central
/// differences, with third derivatives estimated from u0 itself. Analytically
/// divergence-free fields pass; fields with O(1) divergence do not.
double default_div_tol(const Grid2D& grid, const VectorField2& u0);

/// Lateral boundary data on every time level, in grid boundary order.
/// Matrices are (levels x boundary nodes).
struct BoundaryRecord {
  int nx = 0;
  int ny = 0;
  double dt = 0.0;
  double T = 0.0;
  std::vector<double> times;
  Eigen::MatrixXd g1, g2;  // d_nu u1, d_nu u2
  Eigen::MatrixXd h1;      // p
  Eigen::MatrixXd h2;      // d_nu p
  double noise_level = 0.0;
  std::uint64_t rng_seed = 0;

  int levels() const { return static_cast<int>(times.size()); }
  int boundary_count() const { return static_cast<int>(h1.cols()); }
  bool operator==(const BoundaryRecord&) const = default;
};

struct Snapshot {
  int level;
  double t;
  VectorField2 u;
  ScalarField p;
};

struct ForwardResult {
  BoundaryRecord record;
  VectorField2 u0;
  ScalarField p0;
  std::vector<Snapshot> snapshots;
  /// Max interior |div u^n| and ||u^n||_inf per level.
  std::vector<double> div_history;
  std::vector<double> sup_history;
  std::vector<double> energy_history;
};

/// Factorized pressure (Neumann-Poisson with zero mean) and implicit
/// diffusion operators for one grid, dt and viscosity.
class ForwardOperators {
 public:
  ForwardOperators(GridPtr grid, double dt, double viscosity);
  ~ForwardOperators();
  ForwardOperators(ForwardOperators&&) noexcept;
  ForwardOperators& operator=(ForwardOperators&&) noexcept;

  /// Solves Lap p = rhs at interior nodes, d_nu p = neumann at boundary nodes
  /// (boundary order), int p = 0. The compatibility defect is absorbed by a
  /// constant multiplier on the interior rows.
  ScalarField solve_neumann_poisson(const ScalarField& rhs, const Eigen::VectorXd& neumann) const;

  /// Last multiplier from solve_neumann_poisson (discrete compatibility defect).
  double last_multiplier() const { return last_multiplier_; }

  /// Pressure for velocity u and force f.
  ScalarField pressure(const VectorField2& u, const VectorField2& force) const;

  /// One semi-implicit step: (I - dt mu Lap) u^{n+1} = u^n + dt(-(u.grad)u - grad p + f).
  VectorField2 step(const VectorField2& u, const ScalarField& p, const VectorField2& force) const;

  const GridPtr& grid() const { return grid_; }

 private:
  struct Impl;
  GridPtr grid_;
  double dt_, viscosity_;
  std::unique_ptr<Impl> impl_;
  mutable double last_multiplier_ = 0.0;
};

ScalarField pressure_solve(const VectorField2& u, const VectorField2& force, double viscosity,
                           const GridPtr& grid);

VectorField2 step_velocity(const VectorField2& u, const ScalarField& p, const VectorField2& force,
                           const ForwardConfig& cfg);

ForwardResult run_forward(const ForwardConfig& cfg);

/// y -> y (1 + delta (1 - 2 r)), r ~ U(0,1) from a seeded 64-bit Mersenne
/// twister. Samples are drawn array by array (g1, g2, h1, h2), level-major.
BoundaryRecord add_noise(const BoundaryRecord& rec, double delta, std::uint64_t seed);

/// Uniform (0,1) double from the top 53 bits of a 64-bit draw.
double unit_uniform(std::uint64_t bits);

/// Binary record file; layout in docs/FORMATS.md.
void write_record(const std::string& path, const BoundaryRecord& rec);
BoundaryRecord read_record(const std::string& path);

}  // namespace nsinv
