#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "nsinv/config.hpp"
#include "nsinv/errors.hpp"
#include "nsinv/pipeline.hpp"

namespace {

struct RunFlags {
  std::string config;
  std::string profile;
  std::vector<std::string> tests;
  std::vector<long long> seeds;
  std::optional<double> noise;
  std::string out;
  std::string record;
  std::vector<std::string> snapshots;
  std::vector<std::string> sets;
  int jobs = 1;
};

void add_run_flags(CLI::App* app, RunFlags& f, bool with_record) {
  app->add_option("--config", f.config, "INI configuration file")->check(CLI::ExistingFile);
  app->add_option("--profile", f.profile, "Base parameter set: reference or desk");
  app->add_option("--test", f.tests, "Test case id(s): test1, test2, test3, custom")->delimiter(',');
  app->add_option("--seed", f.seeds, "Noise seed(s)")->delimiter(',');
  app->add_option("--noise", f.noise, "Relative noise level delta");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--snapshot", f.snapshots, "Save the forward state at t=<value> (repeatable)");
  app->add_option("--set", f.sets, "Override section.key=value (repeatable)");
  app->add_option("--jobs", f.jobs, "Concurrent runs when several tests or seeds are given")->check(CLI::PositiveNumber);
  if (with_record) app->add_option("--record", f.record, "Boundary record to invert (default: forward run)");
}

std::vector<nsinv::RunConfig> build_configs(const RunFlags& f, nsinv::Stage stage) {
  using namespace nsinv;
  RunConfig base;
  if (!f.config.empty()) {
    base = load_config(f.config);
  } else if (!f.profile.empty()) {
    std::istringstream is("[run]\nprofile = " + f.profile + "\n");
    base = parse_config(is, "--profile");
  }
  if (!f.config.empty() && !f.profile.empty()) throw ConfigError("--profile and --config are exclusive");
  apply_env_overrides(base, nsinv_environment());
  for (const std::string& s : f.sets) {
    const auto eq = s.find('=');
    const auto dot = s.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("--set expects section.key=value, got '" + s + "'");
    }
    set_config_value(base, s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1), "--set");
  }
  if (!f.snapshots.empty()) {
    std::string list;
    for (const std::string& s : f.snapshots) {
      if (s.rfind("t=", 0) != 0) throw ConfigError("--snapshot expects t=<value>, got '" + s + "'");
      list += s.substr(2) + ",";
    }
    set_config_value(base, "forward", "snapshot_times", list, "--snapshot");
  }
  if (f.noise) base.delta = *f.noise;
  if (!f.out.empty()) base.out_dir = f.out;
  if (!f.record.empty()) base.record_path = f.record;
  base.stage = stage;

  const std::vector<std::string> tests = f.tests.empty() ? std::vector<std::string>{base.test} : f.tests;
  std::vector<long long> seeds = f.seeds;
  if (seeds.empty()) seeds.push_back(static_cast<long long>(base.seed));
  std::vector<RunConfig> out;
  const bool many = tests.size() * seeds.size() > 1;
  for (const std::string& t : tests) {
    for (long long s : seeds) {
      if (s < 0) throw ConfigError("--seed must be non-negative");
      RunConfig c = base;
      c.test = t;
      c.seed = static_cast<std::uint64_t>(s);
      if (many) c.out_dir = (std::filesystem::path(base.out_dir) / (t + "_seed" + std::to_string(s))).string();
      c.validate();
      out.push_back(std::move(c));
    }
  }
  return out;
}

void report(const nsinv::RunConfig& c, const nsinv::PipelineResult& r) {
  std::ostringstream os;
  os << c.test << " seed=" << c.seed << " -> " << r.out_dir;
  if (r.errors) {
    os << "  rel_l2 u0_1=" << r.errors->u1.rel_l2 << "% u0_2=" << r.errors->u2.rel_l2 << "% p0=" << r.errors->p.rel_l2
       << "%";
  }
  if (r.status != 0) os << "  FAILED: " << r.error;
  std::cout << os.str() << '\n';
}

int run_all(const RunFlags& f, nsinv::Stage stage) {
  const auto configs = build_configs(f, stage);
  std::vector<int> status(configs.size(), 0);
  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const nsinv::PipelineResult r = nsinv::run_pipeline(configs[i]);
      status[i] = r.status;
      std::lock_guard lock(io);
      report(configs[i], r);
    }
  };
  const int n = std::min<int>(f.jobs, static_cast<int>(configs.size()));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (int s : status) {
    if (s != 0) return s;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Initial-data reconstruction for 2D incompressible Navier-Stokes from lateral boundary data"};
  app.require_subcommand(1);

  RunFlags fwd, inv, full;
  add_run_flags(app.add_subcommand("forward", "Run the forward solver and write the boundary record"), fwd, false);
  add_run_flags(app.add_subcommand("invert", "Reconstruct initial data from a boundary record"), inv, true);
  add_run_flags(app.add_subcommand("full", "Forward run, noise, inversion and error report"), full, false);

  int bc_N = 35, bc_q = 0;
  double bc_T = 0.4;
  auto* bc = app.add_subcommand("basis-check", "Check the structure of the reduction matrices");
  bc->add_option("--N", bc_N, "Basis order")->check(CLI::NonNegativeNumber);
  bc->add_option("--T", bc_T, "Final time")->check(CLI::PositiveNumber);
  bc->add_option("--quad-order", bc_q, "Quadrature order (0 = default)")->check(CLI::NonNegativeNumber);

  int dm_N = 35;
  double dm_T = 0.4;
  std::string dm_out = "matrices";
  auto* dm = app.add_subcommand("dump-matrices", "Write S_N, R_N and the coupling tensor as CSV");
  dm->add_option("--N", dm_N, "Basis order")->check(CLI::NonNegativeNumber);
  dm->add_option("--T", dm_T, "Final time")->check(CLI::PositiveNumber);
  dm->add_option("--out", dm_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("forward")) return run_all(fwd, nsinv::Stage::forward);
    if (app.got_subcommand("invert")) return run_all(inv, nsinv::Stage::invert);
    if (app.got_subcommand("full")) return run_all(full, nsinv::Stage::full);
    if (app.got_subcommand("basis-check")) {
      const nsinv::BasisReport r = nsinv::basis_check(bc_N, bc_T, bc_q);
      std::cout << nsinv::to_json(r) << '\n';
      return r.max_defect() <= 1e-10 ? 0 : 1;
    }
    if (app.got_subcommand("dump-matrices")) {
      nsinv::dump_matrices(dm_N, dm_T, dm_out);
      return 0;
    }
  } catch (const nsinv::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
