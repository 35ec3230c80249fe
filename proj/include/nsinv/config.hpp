#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "nsinv/carleman.hpp"

namespace nsinv {

enum class Stage { full, forward, invert };

/// Everything one pipeline run needs. Defaults reproduce the reference
/// setup: 31 x 31 grid, dt = 1e-4, T = 0.4, N = 35, eps = 1e-11, K_max = 5,
/// x0 = (0, -10), beta = 20, lambda = 6, 10% noise, unit viscosity.
struct RunConfig {
  // [grid]
  int nx = 31;
  int ny = 31;
  // [forward]
  double dt = 1e-4;
  double T = 0.4;
  double viscosity = 1.0;
  double div_tol = -1.0;
  double watchdog_growth = 10.0;
  double watchdog_factor = 1e-2;
  int snapshot_every = 0;
  std::vector<double> snapshot_times;
  // [basis]
  int N = 35;
  int quad_order = 0;
  // [carleman]
  PicardConfig picard;
  // [inverse] grid used by the inversion (0 = forward grid)
  int inverse_nx = 0;
  int inverse_ny = 0;
  // [noise]
  double delta = 0.1;
  std::uint64_t seed = 1;
  // [run]
  std::string profile = "reference";
  std::string test = "test1";
  std::string out_dir = "out";
  Stage stage = Stage::full;
  /// For stage = invert: record file to read instead of running the forward solver.
  std::string record_path;
  // [custom] CSV field files for test = custom
  std::string custom_force1, custom_force2, custom_u01, custom_u02;

  /// Small profile for quick runs: N = 15, 21 x 21 grid, dt = 5e-4.
  static RunConfig desk();
  void validate() const;
};

/// Parses an INI document. `source` names it in error messages.
RunConfig parse_config(std::istream& is, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

/// Applies NSINV_<SECTION>_<KEY>=value entries (e.g. NSINV_BASIS_N=15) on top
/// of `cfg`. Unknown NSINV_ keys are rejected by name.
void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> nsinv_environment();

/// Sets one "section.key" from a string value (used by files, env and CLI).
void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value,
                      const std::string& where);

std::vector<std::string> known_config_keys();

std::string to_string(Stage s);
std::string to_string(RegModel m);
std::string to_string(BcMode m);
std::string to_string(SolveMode m);

}  // namespace nsinv
