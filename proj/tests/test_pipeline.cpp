#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nsinv/errors.hpp"
#include "nsinv/pipeline.hpp"

using namespace nsinv;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.nx = c.ny = 11;
  c.dt = 1e-2;
  c.N = c.picard.N = 4;
  c.picard.K_max = 3;
  c.out_dir = out.string();
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("full run writes every artifact and is reproducible") {
  TempDir a("nsinv_pipe_a"), b("nsinv_pipe_b");
  const PipelineResult ra = run_pipeline(tiny(a.path));
  REQUIRE(ra.status == 0);
  for (const char* f : {"summary.json", "history.csv", "forward/record.bin", "forward/record_noisy.bin",
                        "forward/u0_true_1.csv", "forward/p0_true.csv", "forward/force_2.csv", "forward/forward.json",
                        "inverse/u0_rec_1.csv", "inverse/p0_rec.csv", "inverse/err_p0.csv",
                        "inverse/solver_log.json"})
    CHECK(fs::exists(a.path / f));
  CHECK_FALSE(fs::exists(a.path / "error.json"));
  const auto summary = nlohmann::json::parse(slurp(a.path / "summary.json"));
  CHECK(summary["schema_version"] == 1);
  CHECK(summary["iterations"] == 3);
  CHECK(summary["rel_l2_u1"].get<double>() >= 0.0);
  CHECK(summary["test_id"] == "test1");

  RunConfig cb = tiny(b.path);
  const PipelineResult rb = run_pipeline(cb);
  REQUIRE(rb.status == 0);
  for (const char* f : {"summary.json", "history.csv", "inverse/u0_rec_1.csv", "inverse/p0_rec.csv",
                        "forward/record_noisy.bin"})
    CHECK(slurp(a.path / f) == slurp(b.path / f));

  // A different seed changes the noisy record.
  TempDir c("nsinv_pipe_c");
  RunConfig cc = tiny(c.path);
  cc.seed = 2;
  cc.stage = Stage::forward;
  REQUIRE(run_pipeline(cc).status == 0);
  CHECK(slurp(a.path / "forward/record_noisy.bin") != slurp(c.path / "forward/record_noisy.bin"));
  CHECK(slurp(a.path / "forward/record.bin") == slurp(c.path / "forward/record.bin"));
  CHECK_FALSE(fs::exists(c.path / "inverse"));
}

TEST_CASE("inversion from a stored record matches the full run") {
  TempDir a("nsinv_pipe_full"), b("nsinv_pipe_inv");
  REQUIRE(run_pipeline(tiny(a.path)).status == 0);
  RunConfig c = tiny(b.path);
  c.stage = Stage::invert;
  c.record_path = (a.path / "forward" / "record_noisy.bin").string();
  const PipelineResult r = run_pipeline(c);
  REQUIRE(r.status == 0);
  CHECK(r.errors.has_value());
  CHECK(slurp(a.path / "inverse/u0_rec_2.csv") == slurp(b.path / "inverse/u0_rec_2.csv"));
}

TEST_CASE("coarser inverse grid") {
  TempDir a("nsinv_pipe_coarse");
  RunConfig c = tiny(a.path);
  c.nx = c.ny = 21;
  c.inverse_nx = c.inverse_ny = 11;
  const PipelineResult r = run_pipeline(c);
  REQUIRE(r.status == 0);
  CHECK(r.errors->u0_rec.u1.grid->nx() == 11);
}

TEST_CASE("failures leave an error report") {
  TempDir a("nsinv_pipe_fail");
  RunConfig c = tiny(a.path);
  c.stage = Stage::invert;
  c.record_path = (a.path / "missing.bin").string();
  const PipelineResult r = run_pipeline(c);
  CHECK(r.status == 2);
  CHECK_FALSE(r.error.empty());
  const auto err = nlohmann::json::parse(slurp(a.path / "error.json"));
  CHECK(err["stage"] == "forward");
  CHECK(nlohmann::json::parse(slurp(a.path / "summary.json")).contains("error"));
}

TEST_CASE("basis report and matrix dump") {
  const BasisReport r = basis_check(35, 0.4);
  CHECK(r.max_lower_s <= 1e-10);
  CHECK(r.max_diag_defect <= 1e-10);
  CHECK(r.gram_defect <= 1e-10);
  const auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["N"] == 35);
  CHECK(j.contains("max_defect"));

  TempDir d("nsinv_dump");
  fs::create_directories(d.path);
  dump_matrices(3, 0.4, d.path.string());
  std::ifstream is(d.path / "S.csv");
  std::string header, row;
  std::getline(is, header);
  CHECK(header == "# S_N N=3 T=0.4");
  int rows = 0;
  while (std::getline(is, row)) {
    if (row.empty()) continue;
    ++rows;
    CHECK(std::count(row.begin(), row.end(), ',') == 3);
  }
  CHECK(rows == 4);
  CHECK(fs::exists(d.path / "R.csv"));
  CHECK(fs::exists(d.path / "C.csv"));
}

}  // TEST_SUITE
