#pragma once

// Independent reference implementations used by the unit and acceptance tests.

#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "nsinv/forward.hpp"
#include "nsinv/grid.hpp"
#include "nsinv/reduction.hpp"

namespace nsinv::testing {

/// Q_n(t) = sqrt((2n+1)/T) P_n(2t/T - 1) and its first two derivatives, from
/// Boost's Legendre functions and the Legendre differential equation.
struct OracleQ {
  double T;

  double q(int n, double t) const {
    return std::sqrt((2.0 * n + 1.0) / T) * boost::math::legendre_p(n, 2.0 * t / T - 1.0);
  }
  double dq(int n, double t) const {
    const double x = 2.0 * t / T - 1.0;
    return std::sqrt((2.0 * n + 1.0) / T) * boost::math::legendre_p_prime(n, x) * 2.0 / T;
  }
  double ddq(int n, double t) const {
    const double x = 2.0 * t / T - 1.0;
    const double p = boost::math::legendre_p(n, x);
    const double dp = boost::math::legendre_p_prime(n, x);
    const double ddp = (2.0 * x * dp - n * (n + 1.0) * p) / (1.0 - x * x);
    return std::sqrt((2.0 * n + 1.0) / T) * ddp * 4.0 / (T * T);
  }
  double psi(int n, double t) const { return std::exp(t) * q(n, t); }
  double dpsi(int n, double t) const { return std::exp(t) * (dq(n, t) + q(n, t)); }
};

/// Adaptive Gauss-Kronrod integral over (a, b).
template <class F>
double integrate(F&& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 8, 1e-13);
}

/// Smooth field with a few random Fourier-like modes.
inline ScalarField random_smooth(const GridPtr& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = u(rng), b = u(rng), c = u(rng), kx = 1.0 + u(rng), ky = 1.0 + u(rng), ph = u(rng);
  return sample(g, [=](double x, double y) {
    return a * std::sin(kx * x + ph) * std::cos(ky * y) + b * x * y + c * std::exp(0.3 * (x - y));
  });
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double n = b.norm();
  return n == 0.0 ? (a - b).norm() : (a - b).norm() / n;
}

inline CoeffStack random_stack(const GridPtr& g, int N, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CoeffStack s = CoeffStack::zeros(g, N);
  for (int n = 0; n <= N; ++n) {
    s.set_velocity(n, VectorField2(random_smooth(g, rng), random_smooth(g, rng)));
    s.set_pressure(n, random_smooth(g, rng));
  }
  return s;
}

// Direct summation over (m, k, n) with gradients recomputed for every term.
inline NonlinearTerms naive_terms(const CoeffStack& s, const ReductionMatrices& mats) {
  const int d = s.N + 1, nodes = s.grid->size();
  NonlinearTerms t{Eigen::MatrixXd::Zero(nodes, d), Eigen::MatrixXd::Zero(nodes, d), Eigen::MatrixXd::Zero(nodes, d)};
  auto conv = [&](const VectorField2& a, const VectorField2& b, int node, int comp) {
    const VectorField2 gb = gradient(comp == 0 ? b.u1 : b.u2);
    return a.u1.values[node] * gb.u1.values[node] + a.u2.values[node] * gb.u2.values[node];
  };
  auto contract = [&](const VectorField2& a, const VectorField2& b, int node) {
    const VectorField2 ga1 = gradient(a.u1), ga2 = gradient(a.u2);
    const VectorField2 gb1 = gradient(b.u1), gb2 = gradient(b.u2);
    // sum_ij d_i a_j d_j b_i
    const double a11 = ga1.u1.values[node], a21 = ga1.u2.values[node];  // d_x a1, d_y a1
    const double a12 = ga2.u1.values[node], a22 = ga2.u2.values[node];  // d_x a2, d_y a2
    const double b11 = gb1.u1.values[node], b21 = gb1.u2.values[node];
    const double b12 = gb2.u1.values[node], b22 = gb2.u2.values[node];
    return a11 * b11 + a12 * b21 + a21 * b12 + a22 * b22;
  };
  for (int m = 0; m < d; ++m) {
    for (int k = 0; k < d; ++k) {
      for (int n = 0; n < d; ++n) {
        const double c = mats.c(m, k, n);
        const VectorField2 un = s.velocity(n), uk = s.velocity(k);
        for (int node = 0; node < nodes; ++node) {
          t.F1(node, m) += c * conv(un, uk, node, 0) + c * conv(uk, un, node, 0);
          t.F2(node, m) += c * conv(un, uk, node, 1) + c * conv(uk, un, node, 1);
          t.G(node, m) -= c * contract(un, uk, node) + c * contract(uk, un, node);
        }
      }
    }
  }
  return t;
}

// Solves a Lap_h w - b w = f at interior nodes with w = boundary values of
// `dirichlet` (5-point stencil, dense-free sparse LU).
inline ScalarField dirichlet_solve(const GridPtr& g, double a, double b, const ScalarField& f, const ScalarField& dirichlet) {
  const auto& in = g->interior();
  std::vector<int> slot(g->size(), -1);
  for (std::size_t s = 0; s < in.size(); ++s) slot[in[s]] = static_cast<int>(s);
  std::vector<Eigen::Triplet<double>> t;
  Eigen::VectorXd rhs(in.size());
  const double cx = a / (g->hx() * g->hx()), cy = a / (g->hy() * g->hy());
  for (std::size_t s = 0; s < in.size(); ++s) {
    const int k = in[s];
    rhs[s] = f.values[k];
    t.emplace_back(s, s, -2.0 * cx - 2.0 * cy - b);
    for (auto [nb, c] : {std::pair{k + 1, cx}, {k - 1, cx}, {k + g->nx(), cy}, {k - g->nx(), cy}}) {
      if (slot[nb] >= 0) t.emplace_back(s, slot[nb], c);
      else rhs[s] -= c * dirichlet.values[nb];
    }
  }
  Eigen::SparseMatrix<double> A(in.size(), in.size());
  A.setFromTriplets(t.begin(), t.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
  const Eigen::VectorXd x = lu.solve(rhs);
  ScalarField out = dirichlet;
  for (std::size_t s = 0; s < in.size(); ++s) out.values[in[s]] = x[s];
  return out;
}

struct Manufactured {
  GridPtr grid;
  ReductionMatrices mats;
  CoeffStack frozen;
  Eigen::MatrixXd P, W1, W2;
  ProjectedBoundaryData data;
};

// Frozen stack V; P solves S Lap P = G(V) with a smooth trace; W solves
// mu S Lap W - R W = F(V) + S grad P with W = 0 on the boundary. Both upper
// triangular systems are solved by back substitution.
inline Manufactured manufacture(int N, int n, double mu, std::uint64_t seed) {
  Manufactured m;
  m.grid = make_grid(n, n);
  const GridPtr& g = m.grid;
  m.mats = build_reduction_matrices(BasisSet(N, 0.4));
  const Eigen::MatrixXd S = structural_S(m.mats), R = structural_R(m.mats);
  std::mt19937_64 rng(seed);
  m.frozen = CoeffStack::zeros(g, N);
  for (int k = 0; k <= N; ++k) {
    m.frozen.set_velocity(k, VectorField2(random_smooth(g, rng), random_smooth(g, rng)));
    m.frozen.set_pressure(k, random_smooth(g, rng));
  }
  const NonlinearTerms nl = eval_nonlinear(m.frozen, m.mats);
  const int d = N + 1, nodes = g->size();

  m.P = Eigen::MatrixXd::Zero(nodes, d);
  Eigen::MatrixXd lapP = Eigen::MatrixXd::Zero(nodes, d);
  for (int i = N; i >= 0; --i) {
    ScalarField f(g, nl.G.col(i));
    for (int j = i + 1; j <= N; ++j) f.values -= S(i, j) * lapP.col(j);
    const ScalarField trace = random_smooth(g, rng);
    const ScalarField p = dirichlet_solve(g, 1.0, 0.0, f, trace);
    m.P.col(i) = p.values;
    lapP.col(i) = laplacian(p).values;
  }

  Eigen::MatrixXd px, py;
  stack_gradient(*g, m.P, px, py);
  for (int c = 0; c < 2; ++c) {
    const Eigen::MatrixXd src = (c == 0 ? nl.F1 : nl.F2) + (c == 0 ? px : py) * S.transpose();
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(nodes, d), lapW = Eigen::MatrixXd::Zero(nodes, d);
    for (int i = N; i >= 0; --i) {
      ScalarField f(g, src.col(i));
      for (int j = i + 1; j <= N; ++j) f.values -= mu * S(i, j) * lapW.col(j) - R(i, j) * W.col(j);
      const ScalarField w = dirichlet_solve(g, mu * S(i, i), R(i, i), f, ScalarField(g));
      W.col(i) = w.values;
      lapW.col(i) = laplacian(w).values;
    }
    (c == 0 ? m.W1 : m.W2) = W;
  }

  const int nb = g->boundary_count();
  m.data.N = N;
  m.data.gamma1.resize(nb, d);
  m.data.gamma2.resize(nb, d);
  m.data.h1.resize(nb, d);
  m.data.h2.resize(nb, d);
  for (int i = 0; i <= N; ++i) {
    m.data.gamma1.col(i) = normal_derivative(ScalarField(g, m.W1.col(i)));
    m.data.gamma2.col(i) = normal_derivative(ScalarField(g, m.W2.col(i)));
    m.data.h1.col(i) = boundary_trace(ScalarField(g, m.P.col(i)));
    m.data.h2.col(i) = normal_derivative(ScalarField(g, m.P.col(i)));
  }
  return m;
}

inline double neumann_poisson_error(int n) {
  auto g = make_grid(n, n);
  auto p = [](double x, double y) { return std::cos(1.3 * x + 0.2) * std::exp(0.5 * y); };
  auto px = [](double x, double y) { return -1.3 * std::sin(1.3 * x + 0.2) * std::exp(0.5 * y); };
  auto py = [](double x, double y) { return 0.5 * std::cos(1.3 * x + 0.2) * std::exp(0.5 * y); };
  const ScalarField rhs = sample(g, [&](double x, double y) { return (0.25 - 1.69) * p(x, y); });
  Eigen::VectorXd dn(g->boundary_count());
  for (int b = 0; b < g->boundary_count(); ++b) {
    const int k = g->boundary()[b];
    const double x = g->x(g->col(k)), y = g->y(g->row(k));
    dn[b] = g->normals()[b].nx * px(x, y) + g->normals()[b].ny * py(x, y);
  }
  ForwardOperators ops(g, 1e-3, 1.0);
  const ScalarField ph = ops.solve_neumann_poisson(rhs, dn);
  const ScalarField pe = sample(g, p);
  const Eigen::VectorXd& w = g->quadrature_weights();
  const double mh = w.dot(ph.values) / 4.0, me = w.dot(pe.values) / 4.0;
  return ((ph.values.array() - mh) - (pe.values.array() - me)).abs().maxCoeff();
}

// One velocity step on a 7x7 grid against a dense assembly of the same
// implicit-viscous, explicit-convective update. Returns the max abs difference.
inline double dense_step_error() {
  auto g = make_grid(7, 7);
  const int n = g->size();
  const double dt = 2e-3, mu = 0.7, hx = g->hx(), hy = g->hy();
  VectorField2 u(g);
  for (int k : g->interior()) {
    const double x = g->x(g->col(k)), y = g->y(g->row(k));
    u.u1.values[k] = std::sin(x + 2 * y);
    u.u2.values[k] = x * y - 0.3;
  }
  const ScalarField p = sample(g, [](double x, double y) { return x * x - std::cos(y); });
  const VectorField2 f(sample(g, [](double x, double) { return 1.0 + x; }),
                       sample(g, [](double, double y) { return y * y; }));

  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 2);
  const double a = dt * mu;
  for (int j = 1; j < 6; ++j) {
    for (int i = 1; i < 6; ++i) {
      const int k = g->index(i, j);
      A(k, k) = 1.0 + 2.0 * a / (hx * hx) + 2.0 * a / (hy * hy);
      A(k, g->index(i + 1, j)) = A(k, g->index(i - 1, j)) = -a / (hx * hx);
      A(k, g->index(i, j + 1)) = A(k, g->index(i, j - 1)) = -a / (hy * hy);
      const double a1 = u.u1.values[k], a2 = u.u2.values[k];
      for (int c = 0; c < 2; ++c) {
        const Eigen::VectorXd& v = c == 0 ? u.u1.values : u.u2.values;
        const double conv = a1 * (v[g->index(i + 1, j)] - v[g->index(i - 1, j)]) / (2 * hx) +
                            a2 * (v[g->index(i, j + 1)] - v[g->index(i, j - 1)]) / (2 * hy);
        const double grad = c == 0 ? (p.values[g->index(i + 1, j)] - p.values[g->index(i - 1, j)]) / (2 * hx)
                                   : (p.values[g->index(i, j + 1)] - p.values[g->index(i, j - 1)]) / (2 * hy);
        const double fc = c == 0 ? f.u1.values[k] : f.u2.values[k];
        b(k, c) = v[k] + dt * (-conv - grad + fc);
      }
    }
  }
  const Eigen::MatrixXd x = A.fullPivLu().solve(b);

  ForwardConfig cfg;
  cfg.grid = g;
  cfg.dt = dt;
  cfg.viscosity = mu;
  const VectorField2 out = step_velocity(u, p, f, cfg);
  return std::max((out.u1.values - x.col(0)).cwiseAbs().maxCoeff(), (out.u2.values - x.col(1)).cwiseAbs().maxCoeff());
}

namespace opfields {

// f = e^{0.7x} sin(1.1y + 0.3)
inline double f(double x, double y) { return std::exp(0.7 * x) * std::sin(1.1 * y + 0.3); }
inline double fx(double x, double y) { return 0.7 * f(x, y); }
inline double fy(double x, double y) { return 1.1 * std::exp(0.7 * x) * std::cos(1.1 * y + 0.3); }
inline double lap(double x, double y) { return (0.49 - 1.21) * f(x, y); }

// v = (sin x cos y, x^2 e^y), div v = cos x cos y + x^2 e^y
inline double v1(double x, double y) { return std::sin(x) * std::cos(y); }
inline double v2(double x, double y) { return x * x * std::exp(y); }
inline double divv(double x, double y) { return std::cos(x) * std::cos(y) + x * x * std::exp(y); }

}  // namespace opfields

struct OperatorErrors {
  double lap, grad, div, dn;
};

// Max errors of the discrete operators on the manufactured fields above,
// taken over the nodes of the (coarse x coarse) grid so every refinement level
// is measured at the same points.
inline OperatorErrors operator_errors(int n, int coarse = 21) {
  using namespace opfields;
  auto g = make_grid(n, n);
  const int stride = (n - 1) / (coarse - 1);
  auto on_coarse = [&](int k) { return g->col(k) % stride == 0 && g->row(k) % stride == 0; };
  const ScalarField F = sample(g, f);
  const ScalarField L = laplacian(F);
  const VectorField2 G = gradient(F);
  const ScalarField D = divergence(VectorField2(sample(g, v1), sample(g, v2)));
  const Eigen::VectorXd dn = normal_derivative(F);
  OperatorErrors e{0, 0, 0, 0};
  for (int k : g->interior()) {
    if (!on_coarse(k)) continue;
    const double x = g->x(g->col(k)), y = g->y(g->row(k));
    e.lap = std::max(e.lap, std::abs(L.values[k] - lap(x, y)));
    e.div = std::max(e.div, std::abs(D.values[k] - divv(x, y)));
  }
  for (int k = 0; k < g->size(); ++k) {
    if (!on_coarse(k)) continue;
    const double x = g->x(g->col(k)), y = g->y(g->row(k));
    e.grad = std::max({e.grad, std::abs(G.u1.values[k] - fx(x, y)), std::abs(G.u2.values[k] - fy(x, y))});
  }
  for (int b = 0; b < g->boundary_count(); ++b) {
    const int k = g->boundary()[b];
    if (!on_coarse(k)) continue;
    const double x = g->x(g->col(k)), y = g->y(g->row(k));
    const Normal nu = g->normals()[b];
    e.dn = std::max(e.dn, std::abs(dn[b] - (nu.nx * fx(x, y) + nu.ny * fy(x, y))));
  }
  return e;
}


}  // namespace nsinv::testing
