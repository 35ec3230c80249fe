#pragma once

#include <optional>
#include <string>

#include "nsinv/carleman.hpp"
#include "nsinv/config.hpp"
#include "nsinv/forward.hpp"
#include "nsinv/reconstruction.hpp"
#include "nsinv/testcases.hpp"

namespace nsinv {

struct PipelineResult {
  /// 0 on success, nonzero when a stage failed (artifacts written so far are kept).
  int status = 0;
  std::string out_dir;
  std::string error;
  std::optional<ForwardResult> forward;
  std::optional<PicardResult> picard;
  std::optional<ReconstructionResult> errors;
  double forward_seconds = 0.0;
  double inverse_seconds = 0.0;
};

/// Fields of the selected case on the forward grid (closed forms, or CSV files
/// for the custom case).
SampledCase load_case(const RunConfig& cfg, const GridPtr& grid);

/// forward -> noise -> projection -> reduction matrices -> Picard iteration
/// -> reconstruction at t = 0 -> error report, honouring cfg.stage.
///
/// Artifact layout under cfg.out_dir:
///   forward/  record.bin, record_noisy.bin, u0_true_{1,2}.csv, p0_true.csv,
///             force_{1,2}.csv, snapshots, forward.json
///   inverse/  u0_rec_{1,2}.csv, p0_rec.csv, err_{u0_1,u0_2,p0}.csv, solver_log.json
///   summary.json, history.csv, error.json (on failure)
PipelineResult run_pipeline(const RunConfig& cfg);

/// Structural defects of the reduction matrices.
struct BasisReport {
  int N = 0;
  double T = 0.0;
  int quad_order = 0;
  double max_lower_s = 0.0;     // max_{m>n} |s_mn|
  double max_diag_defect = 0.0; // max_n |s_nn - 1|
  double max_lower_r = 0.0;     // max_{m>n} |r_mn| / max |r_mn|
  double gram_defect = 0.0;     // max |<Psi_n, Psi_m> - delta_nm|
  double tensor_defect = 0.0;   // max |c_mkn - c_mkn (reference rule)| / max |c_mkn|
  double max_defect() const;
};

/// Builds the basis with `quad_order` (0 = default, any positive value is
/// honoured even below the usual minimum) and checks it against a reference
/// rule of twice the default order.
BasisReport basis_check(int N, double T, int quad_order = 0);
std::string to_json(const BasisReport& r);

/// Writes S.csv, R.csv (header "# S_N N=<N> T=<T>" / "# R_N ..."), and
/// C.csv (one row per (m, k), header "# C_N N=<N> T=<T>") into dir.
void dump_matrices(int N, double T, const std::string& dir);

}  // namespace nsinv
