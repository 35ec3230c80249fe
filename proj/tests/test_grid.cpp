#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "nsinv/errors.hpp"
#include "nsinv/grid.hpp"
#include "support.hpp"

using namespace nsinv;
using namespace nsinv::testing;

TEST_SUITE("grid") {

TEST_CASE("node layout and boundary walk") {
  Grid2D g(7, 5);
  CHECK(g.size() == 35);
  CHECK(g.hx() == doctest::Approx(2.0 / 6));
  CHECK(g.hy() == doctest::Approx(0.5));
  CHECK(g.boundary_count() == 2 * (7 + 5) - 4);
  CHECK(g.interior().size() == 5u * 3u);
  std::set<int> seen(g.boundary().begin(), g.boundary().end());
  CHECK(seen.size() == g.boundary().size());
  CHECK(g.boundary().front() == g.index(0, 0));
  int corners = 0;
  for (int b = 0; b < g.boundary_count(); ++b) {
    const int k = g.boundary()[b];
    CHECK(g.is_boundary_node(k));
    const Normal nu = g.normals()[b];
    CHECK(std::abs(nu.nx) + std::abs(nu.ny) == 1);
    if (g.is_corner(b)) {
      ++corners;
      CHECK(nu.ny == 0);
    }
    if (g.col(k) == 0 && !g.is_corner(b)) CHECK(nu.nx == -1);
    if (g.row(k) == g.ny() - 1 && !g.is_corner(b)) CHECK(nu.ny == 1);
  }
  CHECK(corners == 4);
  for (int k : g.interior()) CHECK_FALSE(g.is_boundary_node(k));
  CHECK_THROWS_AS(Grid2D(4, 9), ConfigError);
}

TEST_CASE("trapezoid weights integrate bilinear functions exactly") {
  Grid2D g(9, 13);
  CHECK(g.quadrature_weights().sum() == doctest::Approx(4.0));
  double s = 0.0;
  for (int k = 0; k < g.size(); ++k) {
    const double x = g.x(g.col(k)), y = g.y(g.row(k));
    s += g.quadrature_weights()[k] * (1.0 + x) * (2.0 - y);
  }
  CHECK(s == doctest::Approx(8.0).epsilon(1e-14));
}

TEST_CASE("operators are exact on quadratics") {
  auto g = make_grid(11, 9);
  auto q = [](double x, double y) { return 1.0 + 2.0 * x - y + 0.5 * x * x + 3.0 * x * y - 2.0 * y * y; };
  const ScalarField F = sample(g, q);
  const ScalarField L = laplacian(F);
  for (int k : g->interior()) CHECK(L.values[k] == doctest::Approx(1.0 - 4.0).epsilon(1e-12));
  const VectorField2 G = gradient(F);
  const Eigen::VectorXd dn = normal_derivative(F);
  const Eigen::VectorXd bl = boundary_laplacian(F);
  for (int k = 0; k < g->size(); ++k) {
    const double x = g->x(g->col(k)), y = g->y(g->row(k));
    CHECK(G.u1.values[k] == doctest::Approx(2.0 + x + 3.0 * y).epsilon(1e-12));
    CHECK(G.u2.values[k] == doctest::Approx(-1.0 + 3.0 * x - 4.0 * y).epsilon(1e-12));
  }
  for (int b = 0; b < g->boundary_count(); ++b) {
    const int k = g->boundary()[b];
    const double x = g->x(g->col(k)), y = g->y(g->row(k));
    const Normal nu = g->normals()[b];
    CHECK(dn[b] == doctest::Approx(nu.nx * (2.0 + x + 3.0 * y) + nu.ny * (-1.0 + 3.0 * x - 4.0 * y)).epsilon(1e-11));
    CHECK(bl[b] == doctest::Approx(-3.0).epsilon(1e-10));
  }
}

TEST_CASE("second-order convergence of the discrete operators") {
  const OperatorErrors e21 = operator_errors(21), e41 = operator_errors(41), e81 = operator_errors(81);
  auto order = [](double a, double b) { return std::log2(a / b); };
  for (auto [a, b, c] : {std::tuple{e21.lap, e41.lap, e81.lap}, std::tuple{e21.grad, e41.grad, e81.grad},
                         std::tuple{e21.div, e41.div, e81.div}, std::tuple{e21.dn, e41.dn, e81.dn}}) {
    CHECK(order(a, b) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(order(b, c) == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("trace, interior max and l2 norm") {
  auto g = make_grid(6, 6);
  ScalarField f = sample(g, [](double x, double y) { return x + 10.0 * y; });
  const Eigen::VectorXd tr = boundary_trace(f);
  for (int b = 0; b < g->boundary_count(); ++b) CHECK(tr[b] == f.values[g->boundary()[b]]);
  f(0, 0) = 1e3;
  CHECK(interior_max_abs(f) < 1e3);
  ScalarField one(g, Eigen::VectorXd::Ones(g->size()));
  CHECK(l2_norm(one) == doctest::Approx(2.0));
}

TEST_CASE("field CSV round trip") {
  auto g = make_grid(7, 6);
  const ScalarField f = sample(g, [](double x, double y) { return std::sin(3 * x) * y + 1e-17; });
  const auto path = std::filesystem::temp_directory_path() / "nsinv_field_roundtrip.csv";
  write_field_csv(path.string(), "demo", f);
  const ScalarField r = read_field_csv(path.string(), g);
  CHECK(r.values == f.values);
  CHECK_THROWS_AS(read_field_csv(path.string(), make_grid(6, 7)), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_field_csv(path.string(), g), DataError);
}

TEST_CASE("mismatched fields are rejected") {
  auto g = make_grid(5, 5);
  CHECK_THROWS_AS(ScalarField(g, Eigen::VectorXd::Zero(3)), DataError);
  CHECK_THROWS_AS(VectorField2(ScalarField(g), ScalarField(make_grid(6, 6))), DataError);
}

}  // TEST_SUITE
