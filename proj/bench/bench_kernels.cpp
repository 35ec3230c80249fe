// Serial reference kernels against their OpenMP versions.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "nsinv/kernels.hpp"
#include "nsinv/timebasis.hpp"

using namespace nsinv;

namespace {

kernels::Dims dims(int n) { return {n, n, 2.0 / (n - 1), 2.0 / (n - 1)}; }

std::vector<double> random_field(int size, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(size);
  for (double& x : v) x = u(rng);
  return v;
}

template <auto Kernel>
void laplacian(benchmark::State& state) {
  const auto g = dims(static_cast<int>(state.range(0)));
  const auto f = random_field(g.size(), 1);
  std::vector<double> out(g.size());
  for (auto _ : state) {
    Kernel(g, f.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Kernel>
void convection(benchmark::State& state) {
  const auto g = dims(static_cast<int>(state.range(0)));
  const auto a1 = random_field(g.size(), 1), a2 = random_field(g.size(), 2), b = random_field(g.size(), 3);
  std::vector<double> out(g.size());
  for (auto _ : state) {
    Kernel(g, a1.data(), a2.data(), b.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Kernel>
void nonlinear(benchmark::State& state) {
  const auto g = dims(31);
  const int N = static_cast<int>(state.range(0)), d = N + 1;
  const ReductionMatrices mats = build_reduction_matrices(BasisSet(N, 0.4));
  const Eigen::MatrixXd coupling = kernels::symmetrized_coupling(mats.C.data(), d);
  kernels::StackGradients s;
  for (Eigen::MatrixXd* m : {&s.u1, &s.u2, &s.u1x, &s.u1y, &s.u2x, &s.u2y}) *m = Eigen::MatrixXd::Random(g.size(), d);
  Eigen::MatrixXd F1, F2, G;
  for (auto _ : state) {
    Kernel(g, s, coupling, F1, F2, G);
    benchmark::DoNotOptimize(G.data());
  }
}

}  // namespace

BENCHMARK(laplacian<kernels::serial::laplacian>)->Name("laplacian/serial")->Arg(31)->Arg(257)->Arg(1025);
BENCHMARK(laplacian<kernels::omp::laplacian>)->Name("laplacian/omp")->Arg(31)->Arg(257)->Arg(1025);
BENCHMARK(convection<kernels::serial::convection>)->Name("convection/serial")->Arg(31)->Arg(257)->Arg(1025);
BENCHMARK(convection<kernels::omp::convection>)->Name("convection/omp")->Arg(31)->Arg(257)->Arg(1025);
BENCHMARK(nonlinear<kernels::serial::nonlinear_terms>)->Name("nonlinear/serial")->Arg(15)->Arg(35)->Unit(benchmark::kMillisecond);
BENCHMARK(nonlinear<kernels::omp::nonlinear_terms>)->Name("nonlinear/omp")->Arg(15)->Arg(35)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
