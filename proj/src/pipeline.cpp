#include "nsinv/pipeline.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "nsinv/errors.hpp"

namespace nsinv {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

json json_number(double v) {
  // NaN and infinities have no JSON form.
  return std::isfinite(v) ? json(v) : json(nullptr);
}

json history_json(const ConvergenceHistory& h) {
  json arr = json::array();
  for (const auto& r : h.iterations) {
    arr.push_back({{"k", r.k},
                   {"relU", json_number(r.relU)},
                   {"relP", json_number(r.relP)},
                   {"ResU", json_number(r.resU)},
                   {"ResP", json_number(r.resP)},
                   {"ratio", json_number(r.ratio)},
                   {"step_norm", json_number(r.step_norm)},
                   {"objP_in", json_number(r.objP_in)},
                   {"objP_out", json_number(r.objP_out)},
                   {"objU_in", json_number(r.objU_in)},
                   {"objU_out", json_number(r.objU_out)},
                   {"linf_u", json_number(r.linf_u)},
                   {"linf_p", json_number(r.linf_p)},
                   {"linf_violation", r.linf_violation}});
  }
  return arr;
}

json config_json(const RunConfig& c) {
  return {{"profile", c.profile},
          {"test", c.test},
          {"nx", c.nx},
          {"ny", c.ny},
          {"dt", c.dt},
          {"T", c.T},
          {"viscosity", c.viscosity},
          {"N", c.N},
          {"quad_order", c.quad_order},
          {"x0", {c.picard.x0.x(), c.picard.x0.y()}},
          {"beta", c.picard.beta},
          {"lambda", c.picard.lambda},
          {"epsilon", c.picard.epsilon},
          {"K_max", c.picard.K_max},
          {"bc_penalty", c.picard.bc_penalty},
          {"reg_model", to_string(c.picard.reg_model)},
          {"bc_mode", to_string(c.picard.bc_mode)},
          {"solve_mode", to_string(c.picard.solve_mode)},
          {"inverse_nx", c.inverse_nx},
          {"inverse_ny", c.inverse_ny},
          {"delta", c.delta},
          {"seed", c.seed}};
}

/// Injection of a field onto a grid whose nodes are a subset of its own.
ScalarField inject(const ScalarField& f, const GridPtr& coarse) {
  const Grid2D& fine = *f.grid;
  if ((fine.nx() - 1) % (coarse->nx() - 1) != 0 || (fine.ny() - 1) % (coarse->ny() - 1) != 0) {
    throw ConfigError("inverse grid nodes must be a subset of the forward grid nodes");
  }
  const int sx = (fine.nx() - 1) / (coarse->nx() - 1), sy = (fine.ny() - 1) / (coarse->ny() - 1);
  ScalarField out(coarse);
  for (int j = 0; j < coarse->ny(); ++j) {
    for (int i = 0; i < coarse->nx(); ++i) out(i, j) = f(i * sx, j * sy);
  }
  return out;
}

struct Truth {
  VectorField2 u0;
  ScalarField p0;
};

std::optional<Truth> read_truth(const fs::path& dir, const GridPtr& grid) {
  const fs::path a = dir / "u0_true_1.csv", b = dir / "u0_true_2.csv", c = dir / "p0_true.csv";
  if (!fs::exists(a) || !fs::exists(b) || !fs::exists(c)) return std::nullopt;
  Truth t;
  t.u0 = VectorField2(read_field_csv(a.string(), grid), read_field_csv(b.string(), grid));
  t.p0 = read_field_csv(c.string(), grid);
  return t;
}

void write_stage_error(const fs::path& out, const std::string& stage, const std::string& what) {
  write_json(out / "error.json", {{"schema_version", kSchemaVersion}, {"stage", stage}, {"message", what}});
}

}  // namespace

SampledCase load_case(const RunConfig& cfg, const GridPtr& grid) {
  if (cfg.test != "custom") return sample_case(make_test_case(parse_test_id(cfg.test)), grid);
  SampledCase sc;
  sc.force = VectorField2(read_field_csv(cfg.custom_force1, grid), read_field_csv(cfg.custom_force2, grid));
  sc.u0 = VectorField2(read_field_csv(cfg.custom_u01, grid), read_field_csv(cfg.custom_u02, grid));
  return sc;
}

PipelineResult run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  PipelineResult res;
  const fs::path out(cfg.out_dir);
  res.out_dir = out.string();
  fs::create_directories(out / "forward");
  if (cfg.stage != Stage::forward) fs::create_directories(out / "inverse");
  std::string stage = "forward";

  json summary = {{"schema_version", kSchemaVersion},
                  {"kind", "nsinv-summary"},
                  {"test_id", cfg.test},
                  {"stage", to_string(cfg.stage)},
                  {"N", cfg.N},
                  {"lambda", cfg.picard.lambda},
                  {"beta", cfg.picard.beta},
                  {"epsilon", cfg.picard.epsilon},
                  {"delta", cfg.delta},
                  {"seed", cfg.seed},
                  {"config", config_json(cfg)},
                  {"p0_truth_source", "forward pressure solve at t = 0"}};
  json solver_log = {{"schema_version", kSchemaVersion}, {"kind", "nsinv-solver-log"}};

  try {
    const GridPtr fgrid = make_grid(cfg.nx, cfg.ny);
    BoundaryRecord noisy;
    std::optional<Truth> truth;

    if (cfg.stage != Stage::invert || cfg.record_path.empty()) {
      const auto t0 = Clock::now();
      const SampledCase sc = load_case(cfg, fgrid);
      ForwardConfig fc;
      fc.grid = fgrid;
      fc.dt = cfg.dt;
      fc.T = cfg.T;
      fc.viscosity = cfg.viscosity;
      fc.force = sc.force;
      fc.u0 = sc.u0;
      fc.div_tol = cfg.div_tol;
      fc.watchdog_growth = cfg.watchdog_growth;
      fc.watchdog_factor = cfg.watchdog_factor;
      fc.snapshot_every = cfg.snapshot_every;
      fc.snapshot_times = cfg.snapshot_times;
      ForwardResult fr = run_forward(fc);
      res.forward_seconds = seconds_since(t0);

      const fs::path fdir = out / "forward";
      write_record((fdir / "record.bin").string(), fr.record);
      noisy = add_noise(fr.record, cfg.delta, cfg.seed);
      write_record((fdir / "record_noisy.bin").string(), noisy);
      write_field_csv((fdir / "u0_true_1.csv").string(), "u0_true_1", fr.u0.u1);
      write_field_csv((fdir / "u0_true_2.csv").string(), "u0_true_2", fr.u0.u2);
      write_field_csv((fdir / "p0_true.csv").string(), "p0_true", fr.p0);
      write_field_csv((fdir / "force_1.csv").string(), "force_1", sc.force.u1);
      write_field_csv((fdir / "force_2.csv").string(), "force_2", sc.force.u2);
      for (const Snapshot& s : fr.snapshots) {
        const std::string tag = "snapshot_" + std::to_string(s.level);
        write_field_csv((fdir / (tag + "_u1.csv")).string(), tag + "_u1", s.u.u1);
        write_field_csv((fdir / (tag + "_u2.csv")).string(), tag + "_u2", s.u.u2);
        write_field_csv((fdir / (tag + "_p.csv")).string(), tag + "_p", s.p);
      }
      double max_div = 0.0, max_sup = 0.0;
      for (double d : fr.div_history) max_div = std::max(max_div, d);
      for (double s : fr.sup_history) max_sup = std::max(max_sup, s);
      write_json(fdir / "forward.json", {{"schema_version", kSchemaVersion},
                                         {"kind", "nsinv-forward"},
                                         {"levels", fr.record.levels()},
                                         {"max_interior_div", max_div},
                                         {"max_sup", max_sup},
                                         {"final_energy", fr.energy_history.empty() ? 0.0 : fr.energy_history.back()},
                                         {"force_scale", sc.force_scale},
                                         {"u0_scale", sc.u0_scale}});
      summary["forward"] = {{"levels", fr.record.levels()}, {"max_interior_div", max_div}, {"max_sup", max_sup}};
      truth = Truth{fr.u0, fr.p0};
      res.forward = std::move(fr);
    } else {
      noisy = read_record(cfg.record_path);
      truth = read_truth(fs::path(cfg.record_path).parent_path(), make_grid(noisy.nx, noisy.ny));
    }

    if (cfg.stage == Stage::forward) {
      write_json(out / "summary.json", summary);
      return res;
    }

    stage = "inverse";
    const auto t1 = Clock::now();
    const GridPtr igrid = cfg.inverse_nx > 0 ? make_grid(cfg.inverse_nx, cfg.inverse_ny) : make_grid(noisy.nx, noisy.ny);
    const BoundaryRecord rec = restrict_record(noisy, *igrid);
    const BasisSet basis(cfg.N, rec.T, cfg.quad_order);
    const ReductionMatrices mats = build_reduction_matrices(basis);
    const ProjectedBoundaryData data = project_boundary(rec, basis);
    PicardConfig pc = cfg.picard;
    pc.N = cfg.N;
    CarlemanSolver solver(igrid, mats, build_weight(igrid, pc.x0, pc.beta, pc.lambda), pc, cfg.viscosity);
    PicardResult pr = picard_iterate(solver, data, mats, igrid, cfg.viscosity);
    res.inverse_seconds = seconds_since(t1);

    write_history_csv((out / "history.csv").string(), pr.history);
    summary["history"] = history_json(pr.history);
    summary["iterations"] = static_cast<int>(pr.history.size());
    summary["bc_penalty"] = solver.bc_penalty();

    json stages = json::array();
    for (const auto& s : pr.stages) {
      stages.push_back({{"stage", s.stage},
                        {"rows", s.lsq.rows},
                        {"cols", s.lsq.cols},
                        {"nnz", s.lsq.nnz},
                        {"rank", s.lsq.rank},
                        {"interior_rows", s.interior_rows},
                        {"boundary_rows", s.boundary_rows},
                        {"reg_rows", s.reg_rows},
                        {"assembly_seconds", s.assembly_seconds},
                        {"factor_seconds", s.lsq.factor_seconds}});
    }
    json solves = json::array();
    for (const auto& s : pr.solves) {
      solves.push_back({{"stage", s.stage},
                        {"k", s.k},
                        {"rhs_norm", s.rhs_norm},
                        {"residual_norm", s.residual_norm},
                        {"normal_residual", s.normal_residual},
                        {"solve_seconds", s.solve_seconds}});
    }
    solver_log["stages"] = stages;
    solver_log["solves"] = solves;
    solver_log["forward_seconds"] = res.forward_seconds;
    solver_log["inverse_seconds"] = res.inverse_seconds;
    write_json(out / "inverse" / "solver_log.json", solver_log);

    const auto [u_rec, p_rec] = reconstruct_at(pr.stack, basis, 0.0);
    const fs::path idir = out / "inverse";
    write_field_csv((idir / "u0_rec_1.csv").string(), "u0_rec_1", u_rec.u1);
    write_field_csv((idir / "u0_rec_2.csv").string(), "u0_rec_2", u_rec.u2);
    write_field_csv((idir / "p0_rec.csv").string(), "p0_rec", p_rec);

    if (truth) {
      Truth t = *truth;
      if (t.u0.u1.grid->nx() != igrid->nx() || t.u0.u1.grid->ny() != igrid->ny()) {
        t.u0 = VectorField2(inject(t.u0.u1, igrid), inject(t.u0.u2, igrid));
        t.p0 = inject(t.p0, igrid);
      }
      ReconstructionResult rr = error_report(u_rec, p_rec, t.u0, t.p0);
      for (const QuantityError* q : {&rr.u1, &rr.u2, &rr.p}) {
        write_field_csv((idir / ("err_" + q->name + ".csv")).string(), "err_" + q->name, q->pointwise);
      }
      summary["rel_l2_u1"] = rr.u1.rel_l2;
      summary["rel_l2_u2"] = rr.u2.rel_l2;
      summary["rel_l2_p0"] = rr.p.rel_l2;
      summary["rel_l2_absolute"] = {{"u1", rr.u1.absolute}, {"u2", rr.u2.absolute}, {"p0", rr.p.absolute}};
      res.errors = std::move(rr);
    }
    if (pr.error) {
      summary["error"] = *pr.error;
      write_stage_error(out, "inverse", *pr.error);
      res.status = 3;
      res.error = *pr.error;
    }
    res.picard = std::move(pr);
    write_json(out / "summary.json", summary);
  } catch (const std::exception& e) {
    res.status = 2;
    res.error = e.what();
    summary["error"] = e.what();
    write_stage_error(out, stage, e.what());
    write_json(out / "summary.json", summary);
  }
  return res;
}

double BasisReport::max_defect() const {
  return std::max({max_lower_s, max_diag_defect, max_lower_r, gram_defect, tensor_defect});
}

BasisReport basis_check(int N, double T, int quad_order) {
  const BasisSet basis(N, T, quad_order, /*enforce_min_order=*/false);
  const BasisSet ref(N, T, 2 * default_quad_order(N));
  const ReductionMatrices m = build_reduction_matrices(basis);
  const ReductionMatrices mr = build_reduction_matrices(ref);
  BasisReport r;
  r.N = N;
  r.T = T;
  r.quad_order = basis.quad_order();
  for (int i = 0; i <= N; ++i) {
    r.max_diag_defect = std::max(r.max_diag_defect, std::abs(m.S(i, i) - 1.0));
    for (int j = 0; j < i; ++j) {
      r.max_lower_s = std::max(r.max_lower_s, std::abs(m.S(i, j)));
      r.max_lower_r = std::max(r.max_lower_r, std::abs(m.R(i, j)));
    }
  }
  // Gram matrix of Psi under e^{-2t} is the plain L2 Gram matrix of Q.
  const Eigen::Map<const Eigen::VectorXd> w(basis.quad_weights().data(), basis.quad_order());
  const Eigen::MatrixXd gram = basis.q_table() * w.asDiagonal() * basis.q_table().transpose();
  r.gram_defect = (gram - Eigen::MatrixXd::Identity(N + 1, N + 1)).cwiseAbs().maxCoeff();
  r.max_lower_r /= std::max(m.R.cwiseAbs().maxCoeff(), 1.0);
  double cmax = 1.0;
  for (std::size_t i = 0; i < m.C.size(); ++i) {
    r.tensor_defect = std::max(r.tensor_defect, std::abs(m.C[i] - mr.C[i]));
    cmax = std::max(cmax, std::abs(mr.C[i]));
  }
  r.tensor_defect /= cmax;
  return r;
}

std::string to_json(const BasisReport& r) {
  const json j = {{"schema_version", kSchemaVersion},
                  {"kind", "nsinv-basis-check"},
                  {"N", r.N},
                  {"T", r.T},
                  {"quad_order", r.quad_order},
                  {"max_lower_s", r.max_lower_s},
                  {"max_diag_defect", r.max_diag_defect},
                  {"max_lower_r", r.max_lower_r},
                  {"gram_defect", r.gram_defect},
                  {"tensor_defect", r.tensor_defect},
                  {"max_defect", r.max_defect()}};
  return j.dump(2);
}

void dump_matrices(int N, double T, const std::string& dir) {
  fs::create_directories(dir);
  const BasisSet basis(N, T);
  const ReductionMatrices m = build_reduction_matrices(basis);
  auto write = [&](const std::string& file, const std::string& name, const Eigen::MatrixXd& M) {
    std::ofstream os(fs::path(dir) / file);
    if (!os) throw DataError("cannot write " + (fs::path(dir) / file).string());
    os << "# " << name << " N=" << N << " T=" << T << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? "," : "") << M(i, j);
      os << '\n';
    }
  };
  write("S.csv", "S_N", m.S);
  write("R.csv", "R_N", m.R);
  const int d = N + 1;
  Eigen::MatrixXd C(d * d, d);
  for (int a = 0; a < d; ++a) {
    for (int k = 0; k < d; ++k) {
      for (int n = 0; n < d; ++n) C(a * d + k, n) = m.c(a, k, n);
    }
  }
  write("C.csv", "C_N", C);
}

}  // namespace nsinv
