#include "nsinv/kernels.hpp"

namespace nsinv::kernels {

Eigen::MatrixXd symmetrized_coupling(const double* c, int d) {
  Eigen::MatrixXd ct(d * d, d);
  for (int m = 0; m < d; ++m) {
    for (int k = 0; k < d; ++k) {
      for (int n = 0; n < d; ++n) {
        const double cmkn = c[(static_cast<std::size_t>(m) * d + k) * d + n];
        const double cmnk = c[(static_cast<std::size_t>(m) * d + n) * d + k];
        ct(k * d + n, m) = cmkn + cmnk;
      }
    }
  }
  return ct;
}

namespace {

inline double lap_at(const Dims& g, const double* f, int i, int j) {
  const int k = j * g.nx + i;
  const double ihx2 = 1.0 / (g.hx * g.hx);
  const double ihy2 = 1.0 / (g.hy * g.hy);
  return (f[k + 1] + f[k - 1] - 2.0 * f[k]) * ihx2 +
         (f[k + g.nx] + f[k - g.nx] - 2.0 * f[k]) * ihy2;
}

inline double ddx_at(const Dims& g, const double* f, int i, int j) {
  const int k = j * g.nx + i;
  if (i == 0) return (-3.0 * f[k] + 4.0 * f[k + 1] - f[k + 2]) / (2.0 * g.hx);
  if (i == g.nx - 1) return (3.0 * f[k] - 4.0 * f[k - 1] + f[k - 2]) / (2.0 * g.hx);
  return (f[k + 1] - f[k - 1]) / (2.0 * g.hx);
}

inline double ddy_at(const Dims& g, const double* f, int i, int j) {
  const int k = j * g.nx + i;
  const int s = g.nx;
  if (j == 0) return (-3.0 * f[k] + 4.0 * f[k + s] - f[k + 2 * s]) / (2.0 * g.hy);
  if (j == g.ny - 1) return (3.0 * f[k] - 4.0 * f[k - s] + f[k - 2 * s]) / (2.0 * g.hy);
  return (f[k + s] - f[k - s]) / (2.0 * g.hy);
}

inline double conv_at(const Dims& g, const double* a1, const double* a2,
                      const double* b, int i, int j) {
  const int k = j * g.nx + i;
  return a1[k] * (b[k + 1] - b[k - 1]) / (2.0 * g.hx) +
         a2[k] * (b[k + g.nx] - b[k - g.nx]) / (2.0 * g.hy);
}

// Per-node products B1(k,n) = u_n . grad u1_k, B2 likewise, and the
// contraction A(k,n) = grad u_n : (grad u_k)^T, written as column `node` of
// the (N+1)^2 x nodes work matrices.
inline void node_products(const StackGradients& s, int node, int d,
                          double* b1, double* b2, double* a) {
  for (int k = 0; k < d; ++k) {
    const double u1x_k = s.u1x(node, k), u1y_k = s.u1y(node, k);
    const double u2x_k = s.u2x(node, k), u2y_k = s.u2y(node, k);
    for (int n = 0; n < d; ++n) {
      const double v1 = s.u1(node, n), v2 = s.u2(node, n);
      const int idx = k * d + n;
      b1[idx] = v1 * u1x_k + v2 * u1y_k;
      b2[idx] = v1 * u2x_k + v2 * u2y_k;
      a[idx] = s.u1x(node, n) * u1x_k + s.u2x(node, n) * u1y_k +
               s.u1y(node, n) * u2x_k + s.u2y(node, n) * u2y_k;
    }
  }
}

}  // namespace

namespace serial {

void laplacian(const Dims& g, const double* f, double* out) {
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const bool inside = i > 0 && j > 0 && i < g.nx - 1 && j < g.ny - 1;
      out[j * g.nx + i] = inside ? lap_at(g, f, i, j) : 0.0;
    }
  }
}

void gradient(const Dims& g, const double* f, double* fx, double* fy) {
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      fx[j * g.nx + i] = ddx_at(g, f, i, j);
      fy[j * g.nx + i] = ddy_at(g, f, i, j);
    }
  }
}

void convection(const Dims& g, const double* a1, const double* a2,
                const double* b, double* out) {
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const bool inside = i > 0 && j > 0 && i < g.nx - 1 && j < g.ny - 1;
      out[j * g.nx + i] = inside ? conv_at(g, a1, a2, b, i, j) : 0.0;
    }
  }
}

void nonlinear_terms(const Dims& g, const StackGradients& s,
                     const Eigen::MatrixXd& coupling, Eigen::MatrixXd& F1,
                     Eigen::MatrixXd& F2, Eigen::MatrixXd& G) {
  const int d = static_cast<int>(s.u1.cols());
  const int nodes = g.size();
  F1.setZero(nodes, d);
  F2.setZero(nodes, d);
  G.setZero(nodes, d);
  Eigen::VectorXd b1(d * d), b2(d * d), a(d * d);
  for (int node = 0; node < nodes; ++node) {
    node_products(s, node, d, b1.data(), b2.data(), a.data());
    for (int m = 0; m < d; ++m) {
      double f1 = 0.0, f2 = 0.0, gg = 0.0;
      for (int idx = 0; idx < d * d; ++idx) {
        const double c = coupling(idx, m);
        f1 += c * b1[idx];
        f2 += c * b2[idx];
        gg += c * a[idx];
      }
      F1(node, m) = f1;
      F2(node, m) = f2;
      G(node, m) = -gg;
    }
  }
}

}  // namespace serial

namespace omp {

void laplacian(const Dims& g, const double* f, double* out) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const bool inside = i > 0 && j > 0 && i < g.nx - 1 && j < g.ny - 1;
      out[j * g.nx + i] = inside ? lap_at(g, f, i, j) : 0.0;
    }
  }
}

void gradient(const Dims& g, const double* f, double* fx, double* fy) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      fx[j * g.nx + i] = ddx_at(g, f, i, j);
      fy[j * g.nx + i] = ddy_at(g, f, i, j);
    }
  }
}

void convection(const Dims& g, const double* a1, const double* a2,
                const double* b, double* out) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const bool inside = i > 0 && j > 0 && i < g.nx - 1 && j < g.ny - 1;
      out[j * g.nx + i] = inside ? conv_at(g, a1, a2, b, i, j) : 0.0;
    }
  }
}

void nonlinear_terms(const Dims& g, const StackGradients& s,
                     const Eigen::MatrixXd& coupling, Eigen::MatrixXd& F1,
                     Eigen::MatrixXd& F2, Eigen::MatrixXd& G) {
  const int d = static_cast<int>(s.u1.cols());
  const int nodes = g.size();
  F1.setZero(nodes, d);
  F2.setZero(nodes, d);
  G.setZero(nodes, d);
  // Nodes are processed in blocks; each block's products form a
  // (N+1)^2 x block matrix contracted against the coupling tensor.
  constexpr int kBlock = 64;
  const int blocks = (nodes + kBlock - 1) / kBlock;
#pragma omp parallel
  {
    Eigen::MatrixXd B1(d * d, kBlock), B2(d * d, kBlock), A(d * d, kBlock);
    Eigen::VectorXd f1(d), f2(d), gg(d);
#pragma omp for schedule(static)
    for (int blk = 0; blk < blocks; ++blk) {
      const int begin = blk * kBlock;
      const int count = std::min(kBlock, nodes - begin);
      for (int c = 0; c < count; ++c) {
        node_products(s, begin + c, d, B1.col(c).data(), B2.col(c).data(),
                      A.col(c).data());
      }
      // Same summation order as the serial reference: one dot product per
      // (m, node) over idx ascending.
      for (int c = 0; c < count; ++c) {
        const int node = begin + c;
        for (int m = 0; m < d; ++m) {
          double s1 = 0.0, s2 = 0.0, sg = 0.0;
          const double* b1 = B1.col(c).data();
          const double* b2 = B2.col(c).data();
          const double* a = A.col(c).data();
          for (int idx = 0; idx < d * d; ++idx) {
            const double cf = coupling(idx, m);
            s1 += cf * b1[idx];
            s2 += cf * b2[idx];
            sg += cf * a[idx];
          }
          F1(node, m) = s1;
          F2(node, m) = s2;
          G(node, m) = -sg;
        }
      }
    }
  }
}

}  // namespace omp

}  // namespace nsinv::kernels
