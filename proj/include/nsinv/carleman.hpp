#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "nsinv/grid.hpp"
#include "nsinv/lsq.hpp"
#include "nsinv/reduction.hpp"
#include "nsinv/timebasis.hpp"

namespace nsinv {

/// e^{2 lambda mu(x)} with mu(x) = |x - x0|^{-beta}.
struct CarlemanWeight {
  Eigen::Vector2d x0{0.0, -10.0};
  double beta = 20.0;
  double lambda = 6.0;
  ScalarField weight_field;
};

/// Throws ConfigError when some node lies within distance 1 of x0 or the
/// weight overflows.
CarlemanWeight build_weight(const GridPtr& grid, const Eigen::Vector2d& x0, double beta, double lambda);

enum class RegModel { l2, h2 };
enum class BcMode { penalty, eliminate };
enum class SolveMode { staged, joint };

struct PicardConfig {
  int N = 35;
  double epsilon = 1e-11;
  double lambda = 6.0;
  double beta = 20.0;
  Eigen::Vector2d x0{0.0, -10.0};
  int K_max = 5;
  /// Weight of boundary rows; negative selects sqrt(max weight) / h.
  double bc_penalty = -1.0;
  RegModel reg_model = RegModel::h2;
  BcMode bc_mode = BcMode::penalty;
  SolveMode solve_mode = SolveMode::staged;
  /// Optional L-infinity bound M; only reported, never enforced.
  double linf_bound = 0.0;

  void validate() const;
};

struct IterationRecord {
  int k = 0;
  double relU = 0.0;
  double relP = 0.0;
  double resU = 0.0;
  double resP = 0.0;
  /// ||X^{k+1} - X^k|| / ||X^k - X^{k-1}|| in the surrogate norm; NaN for k = 0.
  double ratio = 0.0;
  /// ||X^{k+1} - X^k|| in the surrogate norm.
  double step_norm = 0.0;
  /// Stage objectives at the stage input and output.
  double objP_in = 0.0, objP_out = 0.0;
  double objU_in = 0.0, objU_out = 0.0;
  double linf_u = 0.0, linf_p = 0.0;
  bool linf_violation = false;
};

struct ConvergenceHistory {
  std::vector<IterationRecord> iterations;
  std::size_t size() const { return iterations.size(); }
};

/// Diagnostics of one sparse least-squares system.
struct StageDiagnostics {
  std::string stage;
  LsqStats lsq;
  long interior_rows = 0;
  long boundary_rows = 0;
  long reg_rows = 0;
  double assembly_seconds = 0.0;
};

/// Per-solve diagnostics recorded by the solver.
struct SolveDiagnostics {
  std::string stage;
  int k = 0;
  double rhs_norm = 0.0;
  double residual_norm = 0.0;
  /// ||A^T r|| / (||A||_F ||r|| + tiny): optimality of the computed solution.
  double normal_residual = 0.0;
  double solve_seconds = 0.0;
};

/// Sparse stage systems for one grid, basis order, weight and config. The
/// system matrices do not depend on the iterate, so each is assembled and
/// factored once and reused by every Picard iteration.
class CarlemanSolver {
 public:
  CarlemanSolver(GridPtr grid, const ReductionMatrices& mats, CarlemanWeight weight, PicardConfig cfg,
                 double viscosity);
  ~CarlemanSolver();
  CarlemanSolver(CarlemanSolver&&) noexcept;
  CarlemanSolver& operator=(CarlemanSolver&&) noexcept;

  /// Pressure stack (nodes x (N+1)) for nonlinearities frozen at `frozen`.
  Eigen::MatrixXd solve_P(const CoeffStack& frozen, const ProjectedBoundaryData& data);
  /// Velocity stacks for nonlinearities frozen at `frozen` and the new pressure.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> solve_U(const CoeffStack& frozen, const Eigen::MatrixXd& P_new,
                                                      const ProjectedBoundaryData& data);
  /// Joint solve over (W, R) for nonlinearities frozen at `frozen`.
  CoeffStack solve_joint(const CoeffStack& frozen, const ProjectedBoundaryData& data);

  /// Weighted least-squares objectives of the stages at a candidate.
  double objective_P(const Eigen::MatrixXd& R, const CoeffStack& frozen, const ProjectedBoundaryData& data) const;
  double objective_U(const Eigen::MatrixXd& W1, const Eigen::MatrixXd& W2, const CoeffStack& frozen,
                     const Eigen::MatrixXd& P_new, const ProjectedBoundaryData& data) const;

  /// Discrete surrogate of the weighted norm used by the contraction estimate.
  double surrogate_norm(const CoeffStack& X) const;

  const CarlemanWeight& weight() const;
  const PicardConfig& config() const;
  double bc_penalty() const;
  std::vector<StageDiagnostics> stage_diagnostics() const;
  const std::vector<SolveDiagnostics>& solve_diagnostics() const;
  void set_iteration(int k);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Eigen::MatrixXd solve_P_stage(const CoeffStack& frozen, const ProjectedBoundaryData& data,
                              const ReductionMatrices& mats, const CarlemanWeight& w, const PicardConfig& cfg);

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> solve_U_stage(const CoeffStack& frozen, const Eigen::MatrixXd& P_new,
                                                          const ProjectedBoundaryData& data,
                                                          const ReductionMatrices& mats, const CarlemanWeight& w,
                                                          const PicardConfig& cfg, double viscosity);

struct PicardResult {
  CoeffStack stack;
  ConvergenceHistory history;
  std::vector<StageDiagnostics> stages;
  std::vector<SolveDiagnostics> solves;
  /// Set when a stage failed; history holds the completed iterations.
  std::optional<std::string> error;
  /// Iterates X^0 (zero), X^1, ..., when requested.
  std::vector<CoeffStack> iterates;
};

struct PicardOptions {
  bool keep_iterates = false;
  /// Starting stack; zero when empty.
  std::optional<CoeffStack> initial;
};

PicardResult picard_iterate(const ProjectedBoundaryData& data, const ReductionMatrices& mats,
                            const BasisSet& basis, const GridPtr& grid, const PicardConfig& cfg, double viscosity,
                            const PicardOptions& opts = {});

/// Same iteration driven by an existing solver (reuses its factorizations).
PicardResult picard_iterate(CarlemanSolver& solver, const ProjectedBoundaryData& data,
                            const ReductionMatrices& mats, const GridPtr& grid, double viscosity,
                            const PicardOptions& opts = {});

/// relU-style relative change ||a - b|| / ||a|| in the trapezoidal L2 norm
/// over all nodes and coefficients; 0 when ||a|| = 0.
double relative_change(const Grid2D& g, const std::vector<const Eigen::MatrixXd*>& a,
                       const std::vector<const Eigen::MatrixXd*>& b);

void write_history_csv(const std::string& path, const ConvergenceHistory& h);

}  // namespace nsinv
