#include "nsinv/timebasis.hpp"

#include <cmath>
#include <numbers>

#include "nsinv/errors.hpp"

namespace nsinv {

int default_quad_order(int N) { return std::max(4 * N + 20, 64); }

void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  if (n < 1) throw ConfigError("gauss_legendre: need at least one node");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Re-evaluate the derivative at the converged root.
    double p0 = 1.0, p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    if (n == 1) p0 = 1.0;
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    // Ascending order in t.
    nodes[i] = mid - half * z;
    nodes[n - 1 - i] = mid + half * z;
    weights[i] = half * w;
    weights[n - 1 - i] = half * w;
  }
}

void legendre_with_derivatives(int N, double x, double* p, double* dp, double* ddp) {
  p[0] = 1.0;
  dp[0] = 0.0;
  ddp[0] = 0.0;
  if (N == 0) return;
  p[1] = x;
  dp[1] = 1.0;
  ddp[1] = 0.0;
  for (int n = 1; n < N; ++n) {
    const double a = 2.0 * n + 1.0;
    p[n + 1] = (a * x * p[n] - n * p[n - 1]) / (n + 1.0);
    dp[n + 1] = (a * (p[n] + x * dp[n]) - n * dp[n - 1]) / (n + 1.0);
    ddp[n + 1] = (a * (2.0 * dp[n] + x * ddp[n]) - n * ddp[n - 1]) / (n + 1.0);
  }
}

namespace {

void shifted_values(int N, double T, double t, double* q, double* dq, double* ddq) {
  std::vector<double> p(N + 1), dp(N + 1), ddp(N + 1);
  const double x = 2.0 * t / T - 1.0;
  legendre_with_derivatives(N, x, p.data(), dp.data(), ddp.data());
  const double s = 2.0 / T;
  for (int n = 0; n <= N; ++n) {
    const double norm = std::sqrt((2.0 * n + 1.0) / T);
    q[n] = norm * p[n];
    dq[n] = norm * s * dp[n];
    ddq[n] = norm * s * s * ddp[n];
  }
}

}  // namespace

BasisSet::BasisSet(int N, double T, int quad_order, bool enforce_min_order)
    : N_(N), T_(T) {
  if (N < 0) throw ConfigError("basis: N must be >= 0");
  if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("basis: T must be > 0");
  if (quad_order == 0) quad_order = default_quad_order(N);
  if (quad_order < 1) throw ConfigError("basis: quad_order must be positive");
  if (enforce_min_order && quad_order < 4 * N + 20) {
    throw ConfigError("basis: quad_order " + std::to_string(quad_order) +
                      " below 4N+20 = " + std::to_string(4 * N + 20));
  }
  gauss_legendre(quad_order, 0.0, T, nodes_, weights_);
  q_.resize(N + 1, quad_order);
  dq_.resize(N + 1, quad_order);
  ddq_.resize(N + 1, quad_order);
  std::vector<double> q(N + 1), dq(N + 1), ddq(N + 1);
  for (int i = 0; i < quad_order; ++i) {
    shifted_values(N, T, nodes_[i], q.data(), dq.data(), ddq.data());
    for (int n = 0; n <= N; ++n) {
      q_(n, i) = q[n];
      dq_(n, i) = dq[n];
      ddq_(n, i) = ddq[n];
    }
  }
}

BasisValues BasisSet::eval(double t) const {
  if (!(t >= 0.0 && t <= T_)) {
    throw DomainError("basis: t = " + std::to_string(t) + " outside [0, T]");
  }
  BasisValues v{Eigen::VectorXd(N_ + 1), Eigen::VectorXd(N_ + 1),
                Eigen::VectorXd(N_ + 1)};
  shifted_values(N_, T_, t, v.q.data(), v.dq.data(), v.ddq.data());
  return v;
}

double BasisSet::psi(int n, double t, int derivative) const {
  if (n < 0 || n > N_) throw DomainError("basis: index out of range");
  const BasisValues v = eval(t);
  const double e = std::exp(t);
  switch (derivative) {
    case 0: return e * v.q[n];
    case 1: return e * (v.dq[n] + v.q[n]);
    case 2: return e * (v.ddq[n] + 2.0 * v.dq[n] + v.q[n]);
    default: throw DomainError("basis: derivative must be 0, 1 or 2");
  }
}

Eigen::VectorXd BasisSet::psi_at_zero() const {
  Eigen::VectorXd v(N_ + 1);
  for (int n = 0; n <= N_; ++n) {
    v[n] = (n % 2 == 0 ? 1.0 : -1.0) * std::sqrt((2.0 * n + 1.0) / T_);
  }
  return v;
}

BasisSet build_basis(int N, double T, int quad_order) {
  return BasisSet(N, T, quad_order);
}

ReductionMatrices build_reduction_matrices(const BasisSet& basis) {
  const int N = basis.order();
  const int d = N + 1;
  const auto t = basis.quad_nodes();
  const auto w = basis.quad_weights();
  const Eigen::MatrixXd& q = basis.q_table();
  const Eigen::MatrixXd& dq = basis.dq_table();
  const Eigen::MatrixXd& ddq = basis.ddq_table();
  const int nq = basis.quad_order();

  ReductionMatrices mats;
  mats.N = N;
  // e^{-2t} Psi_n' Psi_m = (Q_n' + Q_n) Q_m and
  // e^{-2t} Psi_n'' Psi_m = (Q_n'' + 2 Q_n' + Q_n) Q_m are polynomials.
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), nq);
  const Eigen::MatrixXd first = dq + q;
  const Eigen::MatrixXd second = ddq + 2.0 * dq + q;
  const Eigen::MatrixXd qw = q * wv.asDiagonal();
  mats.S = qw * first.transpose();
  mats.R = qw * second.transpose();

  // e^{-2t} Psi_n' Psi_k Psi_m = e^t (Q_n' + Q_n) Q_k Q_m.
  mats.C.assign(static_cast<std::size_t>(d) * d * d, 0.0);
  std::vector<double> a(d);
  for (int i = 0; i < nq; ++i) {
    const double scale = w[i] * std::exp(t[i]);
    for (int n = 0; n < d; ++n) a[n] = scale * first(n, i);
    for (int m = 0; m < d; ++m) {
      const double qm = q(m, i);
      for (int k = 0; k < d; ++k) {
        const double qmk = qm * q(k, i);
        double* row = &mats.C[(static_cast<std::size_t>(m) * d + k) * d];
        for (int n = 0; n < d; ++n) row[n] += qmk * a[n];
      }
    }
  }
  return mats;
}

std::vector<double> uniform_times(double T, int n) {
  if (n < 2) throw DataError("uniform_times: need at least two samples");
  std::vector<double> times(n);
  for (int i = 0; i < n; ++i) times[i] = T * static_cast<double>(i) / (n - 1);
  return times;
}

Eigen::MatrixXd projection_weights(const BasisSet& basis, int n_samples) {
  if (n_samples < 2) throw DataError("projection: need at least two samples");
  const double T = basis.final_time();
  const int intervals = n_samples - 1;
  const double dt = T / intervals;
  std::vector<double> rule(n_samples, 0.0);
  const int simpson = (intervals % 2 == 0) ? intervals : intervals - 1;
  for (int i = 0; i + 2 <= simpson; i += 2) {
    rule[i] += dt / 3.0;
    rule[i + 1] += 4.0 * dt / 3.0;
    rule[i + 2] += dt / 3.0;
  }
  if (simpson != intervals) {
    rule[intervals - 1] += 0.5 * dt;
    rule[intervals] += 0.5 * dt;
  }
  const int d = basis.order() + 1;
  Eigen::MatrixXd W(d, n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const double ti = (i == intervals) ? T : i * dt;
    const BasisValues v = basis.eval(ti);
    const double s = rule[i] * std::exp(-ti);
    W.col(i) = s * v.q;
  }
  return W;
}

Eigen::VectorXd project_signal(std::span<const double> samples,
                               std::span<const double> times,
                               const BasisSet& basis) {
  const std::size_t n = samples.size();
  if (n < 2 || times.size() != n) {
    throw DataError("project_signal: need >= 2 samples with matching times");
  }
  const double T = basis.final_time();
  const double dt = T / static_cast<double>(n - 1);
  const double tol = 1e-9 * T;
  if (std::abs(times.front()) > tol || std::abs(times.back() - T) > tol) {
    throw DataError("project_signal: sample times do not cover [0, T]");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs((times[i] - times[i - 1]) - dt) > 1e-6 * dt) {
      throw DataError("project_signal: sample grid is not uniform");
    }
  }
  const Eigen::MatrixXd W = projection_weights(basis, static_cast<int>(n));
  const Eigen::Map<const Eigen::VectorXd> s(samples.data(), static_cast<Eigen::Index>(n));
  return W * s;
}

double eval_expansion(std::span<const double> coeffs, double t,
                      const BasisSet& basis, int derivative) {
  if (static_cast<int>(coeffs.size()) != basis.order() + 1) {
    throw DataError("eval_expansion: coefficient count must be N+1");
  }
  if (derivative < 0 || derivative > 2) {
    throw DomainError("eval_expansion: derivative must be 0, 1 or 2");
  }
  const BasisValues v = basis.eval(t);
  double sum = 0.0;
  for (std::size_t n = 0; n < coeffs.size(); ++n) {
    double f = v.q[n];
    if (derivative == 1) f += v.dq[n];
    if (derivative == 2) f += 2.0 * v.dq[n] + v.ddq[n];
    sum += coeffs[n] * f;
  }
  return std::exp(t) * sum;
}

}  // namespace nsinv
