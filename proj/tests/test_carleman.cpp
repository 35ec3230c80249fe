#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <Eigen/SparseLU>

#include "nsinv/carleman.hpp"
#include "nsinv/errors.hpp"
#include "nsinv/forward.hpp"
#include "nsinv/testcases.hpp"
#include "support.hpp"

using namespace nsinv;
using namespace nsinv::testing;
using nsinv::testing::random_smooth;
using nsinv::testing::rel_diff;

namespace {


PicardConfig small_config(int N) {
  PicardConfig c;
  c.N = N;
  return c;
}

// Regularization weak enough that its bias on the manufactured stack
// (|P| ~ 1e4 after back substitution) stays below the 1e-6 recovery tolerance.
PicardConfig recovery_config(int N) {
  PicardConfig c = small_config(N);
  c.epsilon = 1e-14;
  return c;
}

}  // namespace

TEST_SUITE("carleman") {

TEST_CASE("weight field") {
  auto g = make_grid(11, 11);
  const CarlemanWeight w = build_weight(g, {0.0, -10.0}, 20.0, 6.0);
  CHECK(w.weight_field.values.minCoeff() >= 1.0);
  CHECK(w.weight_field.values.maxCoeff() - 1.0 < 1e-15);
  const CarlemanWeight near = build_weight(g, {0.0, -2.5}, 2.0, 1.0);
  // The weight decays away from x0.
  CHECK(near.weight_field(5, 0) > near.weight_field(5, 10));
  CHECK(near.weight_field(5, 0) == doctest::Approx(std::exp(2.0 / (1.5 * 1.5))));
  CHECK_THROWS_AS(build_weight(g, {0.0, -1.5}, 2.0, 1.0), ConfigError);
  CHECK_THROWS_AS(build_weight(g, {0.0, -2.05}, 20.0, 1000.0), ConfigError);
}

TEST_CASE("config validation") {
  PicardConfig c;
  CHECK_NOTHROW(c.validate());
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PicardConfig{};
  c.K_max = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PicardConfig{};
  c.bc_penalty = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PicardConfig{};
  c.N = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("stages recover a manufactured stack") {
  const double mu = 1.0;
  const Manufactured m = manufacture(3, 21, mu, 2024);
  const CarlemanWeight w = build_weight(m.grid, {0.0, -10.0}, 20.0, 6.0);

  SUBCASE("staged, penalty boundary rows") {
    CarlemanSolver solver(m.grid, m.mats, w, recovery_config(3), mu);
    const Eigen::MatrixXd P = solver.solve_P(m.frozen, m.data);
    CHECK(rel_diff(P, m.P) <= 1e-6);
    const auto [W1, W2] = solver.solve_U(m.frozen, m.P, m.data);
    CHECK(rel_diff(W1, m.W1) <= 1e-6);
    CHECK(rel_diff(W2, m.W2) <= 1e-6);
    // One P solve and two U solves; each residual beats the zero candidate.
    REQUIRE(solver.solve_diagnostics().size() == 3u);
    for (const auto& s : solver.solve_diagnostics()) CHECK(s.residual_norm < 1e-6 * s.rhs_norm);
    const auto stages = solver.stage_diagnostics();
    REQUIRE(stages.size() == 2u);
    CHECK(stages[0].lsq.rank == stages[0].lsq.cols);
  }
  SUBCASE("free functions") {
    const Eigen::MatrixXd P = solve_P_stage(m.frozen, m.data, m.mats, w, recovery_config(3));
    CHECK(rel_diff(P, m.P) <= 1e-6);
    const auto [W1, W2] = solve_U_stage(m.frozen, m.P, m.data, m.mats, w, recovery_config(3), mu);
    CHECK(rel_diff(W1, m.W1) <= 1e-6);
  }
  SUBCASE("eliminated Dirichlet rows") {
    PicardConfig c = recovery_config(3);
    c.bc_mode = BcMode::eliminate;
    CarlemanSolver solver(m.grid, m.mats, w, c, mu);
    CHECK(rel_diff(solver.solve_P(m.frozen, m.data), m.P) <= 1e-6);
    const auto [W1, W2] = solver.solve_U(m.frozen, m.P, m.data);
    CHECK(rel_diff(W2, m.W2) <= 1e-6);
  }
  SUBCASE("joint solve") {
    PicardConfig c = recovery_config(3);
    c.solve_mode = SolveMode::joint;
    CarlemanSolver solver(m.grid, m.mats, w, c, mu);
    const CoeffStack X = solver.solve_joint(m.frozen, m.data);
    CHECK(rel_diff(X.p, m.P) <= 1e-6);
    CHECK(rel_diff(X.u1, m.W1) <= 1e-6);
    CHECK(rel_diff(X.u2, m.W2) <= 1e-6);
  }
  SUBCASE("l2 regularization") {
    PicardConfig c = recovery_config(3);
    c.reg_model = RegModel::l2;
    CarlemanSolver solver(m.grid, m.mats, w, c, mu);
    CHECK(rel_diff(solver.solve_P(m.frozen, m.data), m.P) <= 1e-6);
  }
}

TEST_CASE("recovery error of the manufactured stack is the regularization bias") {
  const Manufactured m = manufacture(3, 21, 1.0, 2024);
  const CarlemanWeight w = build_weight(m.grid, {0.0, -10.0}, 20.0, 6.0);
  std::vector<double> err;
  for (double eps : {1e-11, 1e-12, 1e-13}) {
    PicardConfig c = small_config(3);
    c.epsilon = eps;
    CarlemanSolver solver(m.grid, m.mats, w, c, 1.0);
    err.push_back(rel_diff(solver.solve_P(m.frozen, m.data), m.P));
  }
  CHECK(err[0] / err[1] == doctest::Approx(10.0).epsilon(0.01));
  CHECK(err[1] / err[2] == doctest::Approx(10.0).epsilon(0.01));
}

TEST_CASE("stage outputs minimize the stage objectives") {
  const double mu = 1.0;
  Manufactured m = manufacture(2, 15, mu, 7);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (Eigen::MatrixXd* a : {&m.data.gamma1, &m.data.gamma2, &m.data.h1, &m.data.h2})
    *a = a->unaryExpr([&](double v) { return v * (1.0 + u(rng)); });
  const CarlemanWeight w = build_weight(m.grid, {0.0, -3.0}, 2.0, 1.0);
  CarlemanSolver solver(m.grid, m.mats, w, small_config(2), mu);

  const Eigen::MatrixXd P = solver.solve_P(m.frozen, m.data);
  const double best = solver.objective_P(P, m.frozen, m.data);
  CHECK(best > 0.0);
  CHECK(best <= solver.objective_P(m.frozen.p, m.frozen, m.data));
  CHECK(best <= solver.objective_P(m.P, m.frozen, m.data));
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd dP = 1e-3 * Eigen::MatrixXd::NullaryExpr(P.rows(), P.cols(), [&] { return u(rng); });
    CHECK(best <= solver.objective_P(P + dP, m.frozen, m.data));
  }

  const auto [W1, W2] = solver.solve_U(m.frozen, P, m.data);
  const double bestU = solver.objective_U(W1, W2, m.frozen, P, m.data);
  CHECK(bestU <= solver.objective_U(m.frozen.u1, m.frozen.u2, m.frozen, P, m.data));
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd d1 = 1e-3 * Eigen::MatrixXd::NullaryExpr(W1.rows(), W1.cols(), [&] { return u(rng); });
    CHECK(bestU <= solver.objective_U(W1 + d1, W2, m.frozen, P, m.data));
    CHECK(bestU <= solver.objective_U(W1, W2 - d1, m.frozen, P, m.data));
  }
}

TEST_CASE("uniform weight scaling with epsilon scaled alike leaves the minimizer unchanged") {
  const Manufactured m = manufacture(2, 15, 1.0, 99);
  ProjectedBoundaryData noisy = m.data;
  noisy.h2 *= 1.1;
  noisy.gamma1 *= 0.9;
  const CarlemanWeight w = build_weight(m.grid, {0.0, -3.0}, 2.0, 1.0);
  CarlemanWeight w10 = w;
  w10.weight_field.values *= 10.0;
  PicardConfig c = small_config(2), c10 = small_config(2);
  c.epsilon = 1e-6;
  c10.epsilon = 1e-5;
  const Eigen::MatrixXd P = solve_P_stage(m.frozen, noisy, m.mats, w, c);
  const Eigen::MatrixXd P10 = solve_P_stage(m.frozen, noisy, m.mats, w10, c10);
  CHECK(rel_diff(P10, P) <= 1e-9);
  const auto U = solve_U_stage(m.frozen, P, noisy, m.mats, w, c, 1.0);
  const auto U10 = solve_U_stage(m.frozen, P, noisy, m.mats, w10, c10, 1.0);
  CHECK(rel_diff(U10.first, U.first) <= 1e-9);
  CHECK(rel_diff(U10.second, U.second) <= 1e-9);
}

TEST_CASE("zero data is a fixed point") {
  auto g = make_grid(11, 11);
  const BasisSet basis(3, 0.4);
  const ReductionMatrices mats = build_reduction_matrices(basis);
  ProjectedBoundaryData data;
  data.N = 3;
  data.gamma1 = data.gamma2 = data.h1 = data.h2 = Eigen::MatrixXd::Zero(g->boundary_count(), 4);
  PicardConfig c = small_config(3);
  c.K_max = 3;
  const PicardResult r = picard_iterate(data, mats, basis, g, c, 1.0);
  CHECK_FALSE(r.error.has_value());
  CHECK(r.stack.u1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.stack.p.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(r.history.size() == 3u);
  for (const auto& it : r.history.iterations) {
    CHECK(it.relU == 0.0);
    CHECK(it.resP == 0.0);
    CHECK(it.step_norm == 0.0);
  }
}

TEST_CASE("Picard iteration on a small forward problem") {
  auto g = make_grid(11, 11);
  const SampledCase sc = sample_case(make_test_case(TestId::test1), g);
  ForwardConfig fc;
  fc.grid = g;
  fc.dt = 2e-3;
  fc.force = sc.force;
  fc.u0 = sc.u0;
  const ForwardResult fr = run_forward(fc);
  const BasisSet basis(5, 0.4);
  const ReductionMatrices mats = build_reduction_matrices(basis);
  const ProjectedBoundaryData data = project_boundary(fr.record, basis);
  PicardConfig c = small_config(5);
  c.K_max = 4;
  c.linf_bound = 1e-6;
  PicardOptions opts;
  opts.keep_iterates = true;
  const PicardResult a = picard_iterate(data, mats, basis, g, c, 1.0, opts);
  REQUIRE_FALSE(a.error.has_value());
  REQUIRE(a.history.size() == 4u);
  CHECK(a.iterates.size() == 5u);
  CHECK(a.iterates.front().u1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.iterates.back().u1 == a.stack.u1);
  CHECK(std::isnan(a.history.iterations[0].ratio));
  for (const auto& it : a.history.iterations) {
    CHECK(it.objP_out <= it.objP_in * (1.0 + 1e-12));
    CHECK(it.objU_out <= it.objU_in * (1.0 + 1e-12));
    CHECK(it.linf_violation);
    CHECK(it.step_norm >= 0.0);
  }
  CHECK(a.stages.size() == 2u);
  CHECK(a.solves.size() == 4u * 3u);

  const PicardResult b = picard_iterate(data, mats, basis, g, c, 1.0);
  CHECK(b.stack.u1 == a.stack.u1);
  CHECK(b.stack.p == a.stack.p);

  // Restarting from the last iterate continues the sequence.
  PicardOptions restart;
  restart.initial = a.iterates[3];
  c.K_max = 1;
  const PicardResult r = picard_iterate(data, mats, basis, g, c, 1.0, restart);
  CHECK(rel_diff(r.stack.u1, a.stack.u1) <= 1e-12);

  CarlemanSolver solver(g, mats, build_weight(g, c.x0, c.beta, c.lambda), c, 1.0);
  CHECK(solver.surrogate_norm(CoeffStack::zeros(g, 5)) == 0.0);
  CoeffStack twice = a.stack;
  twice.u1 *= 2.0;
  twice.u2 *= 2.0;
  twice.p *= 2.0;
  CHECK(solver.surrogate_norm(twice) == doctest::Approx(2.0 * solver.surrogate_norm(a.stack)));
}

TEST_CASE("mismatched inputs are rejected") {
  const Manufactured m = manufacture(2, 11, 1.0, 1);
  const CarlemanWeight w = build_weight(m.grid, {0.0, -10.0}, 20.0, 6.0);
  CarlemanSolver solver(m.grid, m.mats, w, small_config(2), 1.0);
  ProjectedBoundaryData bad = m.data;
  bad.N = 3;
  CHECK_THROWS_AS(solver.solve_P(m.frozen, bad), DataError);
  bad = m.data;
  bad.h1.conservativeResize(3, Eigen::NoChange);
  CHECK_THROWS_AS(solver.solve_P(m.frozen, bad), DataError);
  CHECK_THROWS_AS(solver.solve_P(CoeffStack::zeros(m.grid, 4), m.data), DataError);
}

TEST_CASE("relative change and history CSV") {
  Grid2D g(5, 5);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Ones(25, 2), z = Eigen::MatrixXd::Zero(25, 2);
  CHECK(relative_change(g, {&a}, {&a}) == 0.0);
  CHECK(relative_change(g, {&z}, {&a}) == 0.0);
  CHECK(relative_change(g, {&a}, {&z}) == doctest::Approx(1.0));
  const Eigen::MatrixXd h = 0.5 * a;
  CHECK(relative_change(g, {&a, &a}, {&h, &h}) == doctest::Approx(0.5));

  ConvergenceHistory hist;
  IterationRecord r0;
  r0.ratio = std::nan("");
  hist.iterations.push_back(r0);
  IterationRecord r1;
  r1.k = 1;
  r1.relU = 0.25;
  hist.iterations.push_back(r1);
  const auto path = (std::filesystem::temp_directory_path() / "nsinv_history.csv").string();
  write_history_csv(path, hist);
  std::ifstream is(path);
  std::string header, l0, l1;
  std::getline(is, header);
  std::getline(is, l0);
  std::getline(is, l1);
  CHECK(header == "k,relU,relP,ResU,ResP,ratio,step_norm,objP_in,objP_out,objU_in,objU_out,linf_u,linf_p");
  CHECK(l0.find("nan") != std::string::npos);
  CHECK(l1.rfind("1,0.25,", 0) == 0);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
