#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nsinv {

/// Outward unit normal of a boundary node. Always axis-aligned.
struct Normal {
  int nx = 0;
  int ny = 0;
};

/// Uniform node-centred grid on (-1, 1)^2. Node (i, j) sits at
/// (-1 + i hx, -1 + j hy) and has flat index j * nx + i.
///
/// Boundary nodes are ordered bottom edge left to right, right edge bottom to
/// top, top edge right to left, left edge top to bottom, each corner appearing
/// once at the start of the edge that the walk enters it on. Corners carry the
/// normal of the vertical edge (x = -1 or x = 1).
class Grid2D {
 public:
  Grid2D(int nx, int ny);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int size() const { return nx_ * ny_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  double x(int i) const { return -1.0 + i * hx_; }
  double y(int j) const { return -1.0 + j * hy_; }
  int index(int i, int j) const { return j * nx_ + i; }
  int col(int k) const { return k % nx_; }
  int row(int k) const { return k / nx_; }

  const std::vector<int>& interior() const { return interior_; }
  const std::vector<int>& boundary() const { return boundary_; }
  const std::vector<Normal>& normals() const { return normals_; }
  bool is_corner(int b) const { return corner_[b]; }
  int boundary_count() const { return static_cast<int>(boundary_.size()); }
  bool is_boundary_node(int k) const;

  /// Trapezoidal node weights (hx hy, halved on edges, quartered at corners).
  const Eigen::VectorXd& quadrature_weights() const { return quad_weights_; }

 private:
  int nx_, ny_;
  double hx_, hy_;
  std::vector<int> interior_;
  std::vector<int> boundary_;
  std::vector<Normal> normals_;
  std::vector<bool> corner_;
  Eigen::VectorXd quad_weights_;
};

using GridPtr = std::shared_ptr<const Grid2D>;

inline GridPtr make_grid(int nx, int ny) { return std::make_shared<const Grid2D>(nx, ny); }

/// Nodal values of a scalar on a grid.
struct ScalarField {
  GridPtr grid;
  Eigen::VectorXd values;

  ScalarField() = default;
  explicit ScalarField(GridPtr g) : grid(std::move(g)), values(Eigen::VectorXd::Zero(grid->size())) {}
  ScalarField(GridPtr g, Eigen::VectorXd v);

  double& operator()(int i, int j) { return values[grid->index(i, j)]; }
  double operator()(int i, int j) const { return values[grid->index(i, j)]; }
};

struct VectorField2 {
  ScalarField u1;
  ScalarField u2;

  VectorField2() = default;
  explicit VectorField2(const GridPtr& g) : u1(g), u2(g) {}
  VectorField2(ScalarField a, ScalarField b);

  const GridPtr& grid() const { return u1.grid; }
};

template <class F>
ScalarField sample(const GridPtr& grid, F&& f) {
  ScalarField out(grid);
  for (int j = 0; j < grid->ny(); ++j) {
    for (int i = 0; i < grid->nx(); ++i) out(i, j) = f(grid->x(i), grid->y(j));
  }
  return out;
}

/// 5-point Laplacian at interior nodes, zero on boundary rows.
ScalarField laplacian(const ScalarField& f);

/// Central differences inside, second-order one-sided at boundary nodes.
VectorField2 gradient(const ScalarField& f);
ScalarField divergence(const VectorField2& v);

/// Second-order one-sided derivative along the outward normal at each
/// boundary node, in boundary order: (3 f_b - 4 f_{b-h nu} + f_{b-2h nu}) / 2h.
Eigen::VectorXd normal_derivative(const ScalarField& f);

/// Laplacian evaluated at boundary nodes with a second-order one-sided stencil
/// for the normal second derivative and a central (or one-sided at corners)
/// stencil for the tangential one. Boundary order.
Eigen::VectorXd boundary_laplacian(const ScalarField& f);

/// Trace of a field in boundary order.
Eigen::VectorXd boundary_trace(const ScalarField& f);

/// Max |f| over interior nodes.
double interior_max_abs(const ScalarField& f);

/// Discrete L2 norm with trapezoidal weights.
double l2_norm(const ScalarField& f);

/// Field CSV: "# field <name> nx=<nx> ny=<ny>" then ny rows (y increasing) of
/// nx comma-separated values (x increasing).
void write_field_csv(std::ostream& os, const std::string& name, const ScalarField& f);
void write_field_csv(const std::string& path, const std::string& name, const ScalarField& f);
ScalarField read_field_csv(const std::string& path, const GridPtr& grid);

}  // namespace nsinv
