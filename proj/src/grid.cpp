#include "nsinv/grid.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nsinv/errors.hpp"
#include "nsinv/kernels.hpp"

namespace nsinv {

namespace {

kernels::Dims dims(const Grid2D& g) { return {g.nx(), g.ny(), g.hx(), g.hy()}; }

}  // namespace

Grid2D::Grid2D(int nx, int ny) : nx_(nx), ny_(ny) {
  if (nx < 5 || ny < 5) {
    throw ConfigError("grid: need at least 5 nodes per axis, got " +
                      std::to_string(nx) + "x" + std::to_string(ny));
  }
  hx_ = 2.0 / (nx - 1);
  hy_ = 2.0 / (ny - 1);
  for (int j = 1; j < ny - 1; ++j) {
    for (int i = 1; i < nx - 1; ++i) interior_.push_back(index(i, j));
  }
  auto add = [&](int i, int j, Normal n, bool corner) {
    boundary_.push_back(index(i, j));
    normals_.push_back(n);
    corner_.push_back(corner);
  };
  // Bottom edge, left to right; (0,0) is a corner with the left-edge normal.
  for (int i = 0; i < nx - 1; ++i) {
    add(i, 0, i == 0 ? Normal{-1, 0} : Normal{0, -1}, i == 0);
  }
  // Right edge, bottom to top.
  for (int j = 0; j < ny - 1; ++j) add(nx - 1, j, Normal{1, 0}, j == 0);
  // Top edge, right to left; (nx-1, ny-1) carries the right-edge normal.
  for (int i = nx - 1; i > 0; --i) {
    add(i, ny - 1, i == nx - 1 ? Normal{1, 0} : Normal{0, 1}, i == nx - 1);
  }
  // Left edge, top to bottom.
  for (int j = ny - 1; j > 0; --j) add(0, j, Normal{-1, 0}, j == ny - 1);

  quad_weights_.resize(size());
  for (int j = 0; j < ny; ++j) {
    const double wy = (j == 0 || j == ny - 1) ? 0.5 : 1.0;
    for (int i = 0; i < nx; ++i) {
      const double wx = (i == 0 || i == nx - 1) ? 0.5 : 1.0;
      quad_weights_[index(i, j)] = wx * wy * hx_ * hy_;
    }
  }
}

bool Grid2D::is_boundary_node(int k) const {
  const int i = col(k), j = row(k);
  return i == 0 || j == 0 || i == nx_ - 1 || j == ny_ - 1;
}

ScalarField::ScalarField(GridPtr g, Eigen::VectorXd v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid->size()) throw DataError("field: value count does not match grid");
}

VectorField2::VectorField2(ScalarField a, ScalarField b) : u1(std::move(a)), u2(std::move(b)) {
  if (u1.grid.get() != u2.grid.get() &&
      (u1.grid->nx() != u2.grid->nx() || u1.grid->ny() != u2.grid->ny())) {
    throw DataError("vector field: components live on different grids");
  }
}

ScalarField laplacian(const ScalarField& f) {
  ScalarField out(f.grid);
  kernels::omp::laplacian(dims(*f.grid), f.values.data(), out.values.data());
  return out;
}

VectorField2 gradient(const ScalarField& f) {
  VectorField2 out(f.grid);
  kernels::omp::gradient(dims(*f.grid), f.values.data(), out.u1.values.data(),
                         out.u2.values.data());
  return out;
}

ScalarField divergence(const VectorField2& v) {
  const auto& g = v.grid();
  Eigen::VectorXd ax(g->size()), ay(g->size()), bx(g->size()), by(g->size());
  kernels::omp::gradient(dims(*g), v.u1.values.data(), ax.data(), ay.data());
  kernels::omp::gradient(dims(*g), v.u2.values.data(), bx.data(), by.data());
  return ScalarField(g, ax + by);
}

Eigen::VectorXd normal_derivative(const ScalarField& f) {
  const Grid2D& g = *f.grid;
  const auto& nodes = g.boundary();
  const auto& normals = g.normals();
  Eigen::VectorXd out(nodes.size());
  for (std::size_t b = 0; b < nodes.size(); ++b) {
    const int i = g.col(nodes[b]), j = g.row(nodes[b]);
    const Normal n = normals[b];
    const double h = n.nx != 0 ? g.hx() : g.hy();
    const double f0 = f(i, j);
    const double f1 = f(i - n.nx, j - n.ny);
    const double f2 = f(i - 2 * n.nx, j - 2 * n.ny);
    out[b] = (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h);
  }
  return out;
}

Eigen::VectorXd boundary_laplacian(const ScalarField& f) {
  const Grid2D& g = *f.grid;
  const auto& nodes = g.boundary();
  Eigen::VectorXd out(nodes.size());
  auto second = [&](int i, int j, int di, int dj, double h) {
    // Central if both neighbours exist, else one-sided (2, -5, 4, -1).
    const bool back = i - di >= 0 && j - dj >= 0 && i - di < g.nx() && j - dj < g.ny();
    const bool fwd = i + di >= 0 && j + dj >= 0 && i + di < g.nx() && j + dj < g.ny();
    if (back && fwd) return (f(i + di, j + dj) - 2.0 * f(i, j) + f(i - di, j - dj)) / (h * h);
    const int s = fwd ? 1 : -1;
    return (2.0 * f(i, j) - 5.0 * f(i + s * di, j + s * dj) + 4.0 * f(i + 2 * s * di, j + 2 * s * dj) -
            f(i + 3 * s * di, j + 3 * s * dj)) /
           (h * h);
  };
  for (std::size_t b = 0; b < nodes.size(); ++b) {
    const int i = g.col(nodes[b]), j = g.row(nodes[b]);
    out[b] = second(i, j, 1, 0, g.hx()) + second(i, j, 0, 1, g.hy());
  }
  return out;
}

Eigen::VectorXd boundary_trace(const ScalarField& f) {
  const auto& nodes = f.grid->boundary();
  Eigen::VectorXd out(nodes.size());
  for (std::size_t b = 0; b < nodes.size(); ++b) out[b] = f.values[nodes[b]];
  return out;
}

double interior_max_abs(const ScalarField& f) {
  double m = 0.0;
  for (int k : f.grid->interior()) m = std::max(m, std::abs(f.values[k]));
  return m;
}

double l2_norm(const ScalarField& f) {
  return std::sqrt(f.grid->quadrature_weights().dot(f.values.cwiseAbs2()));
}

void write_field_csv(std::ostream& os, const std::string& name, const ScalarField& f) {
  const Grid2D& g = *f.grid;
  os << "# field " << name << " nx=" << g.nx() << " ny=" << g.ny() << '\n';
  os << std::setprecision(17);
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (i) os << ',';
      os << f(i, j);
    }
    os << '\n';
  }
}

void write_field_csv(const std::string& path, const std::string& name, const ScalarField& f) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path + " for writing");
  write_field_csv(os, name, f);
}

ScalarField read_field_csv(const std::string& path, const GridPtr& grid) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::string line;
  std::getline(is, line);
  std::ostringstream expect;
  expect << "nx=" << grid->nx() << " ny=" << grid->ny();
  if (line.rfind("# field ", 0) != 0 || line.find(expect.str()) == std::string::npos) {
    throw DataError(path + ": header does not match grid (" + line + ")");
  }
  ScalarField f(grid);
  for (int j = 0; j < grid->ny(); ++j) {
    if (!std::getline(is, line)) throw DataError(path + ": missing rows");
    std::istringstream row(line);
    std::string cell;
    for (int i = 0; i < grid->nx(); ++i) {
      if (!std::getline(row, cell, ',')) throw DataError(path + ": short row");
      f(i, j) = std::stod(cell);
    }
  }
  return f;
}

}  // namespace nsinv
