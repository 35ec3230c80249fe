#include "nsinv/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "nsinv/errors.hpp"

extern char** environ;

namespace nsinv {

namespace {

double to_double(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& v, const std::string& where) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(where + ": expected an integer, got '" + v + "'");
  return out;
}

std::vector<double> to_list(const std::string& v, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(to_double(item, where));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"grid.nx", [](RunConfig& c, const auto& v, const auto& w) { c.nx = static_cast<int>(to_int(v, w)); }},
      {"grid.ny", [](RunConfig& c, const auto& v, const auto& w) { c.ny = static_cast<int>(to_int(v, w)); }},
      {"forward.dt", [](RunConfig& c, const auto& v, const auto& w) { c.dt = to_double(v, w); }},
      {"forward.T", [](RunConfig& c, const auto& v, const auto& w) { c.T = to_double(v, w); }},
      {"forward.viscosity", [](RunConfig& c, const auto& v, const auto& w) { c.viscosity = to_double(v, w); }},
      {"forward.div_tol", [](RunConfig& c, const auto& v, const auto& w) { c.div_tol = to_double(v, w); }},
      {"forward.watchdog_growth",
       [](RunConfig& c, const auto& v, const auto& w) { c.watchdog_growth = to_double(v, w); }},
      {"forward.watchdog_factor",
       [](RunConfig& c, const auto& v, const auto& w) { c.watchdog_factor = to_double(v, w); }},
      {"forward.snapshot_every",
       [](RunConfig& c, const auto& v, const auto& w) { c.snapshot_every = static_cast<int>(to_int(v, w)); }},
      {"forward.snapshot_times", [](RunConfig& c, const auto& v, const auto& w) { c.snapshot_times = to_list(v, w); }},
      {"basis.N",
       [](RunConfig& c, const auto& v, const auto& w) {
         c.N = static_cast<int>(to_int(v, w));
         c.picard.N = c.N;
       }},
      {"basis.quad_order",
       [](RunConfig& c, const auto& v, const auto& w) { c.quad_order = static_cast<int>(to_int(v, w)); }},
      // basis.T is checked against forward.T in parse_config.
      {"basis.T", [](RunConfig&, const auto& v, const auto& w) { (void)to_double(v, w); }},
      {"carleman.x0_x", [](RunConfig& c, const auto& v, const auto& w) { c.picard.x0.x() = to_double(v, w); }},
      {"carleman.x0_y", [](RunConfig& c, const auto& v, const auto& w) { c.picard.x0.y() = to_double(v, w); }},
      {"carleman.beta", [](RunConfig& c, const auto& v, const auto& w) { c.picard.beta = to_double(v, w); }},
      {"carleman.lambda", [](RunConfig& c, const auto& v, const auto& w) { c.picard.lambda = to_double(v, w); }},
      {"carleman.epsilon", [](RunConfig& c, const auto& v, const auto& w) { c.picard.epsilon = to_double(v, w); }},
      {"carleman.K_max",
       [](RunConfig& c, const auto& v, const auto& w) { c.picard.K_max = static_cast<int>(to_int(v, w)); }},
      {"carleman.bc_penalty",
       [](RunConfig& c, const auto& v, const auto& w) { c.picard.bc_penalty = to_double(v, w); }},
      {"carleman.linf_bound",
       [](RunConfig& c, const auto& v, const auto& w) { c.picard.linf_bound = to_double(v, w); }},
      {"carleman.reg_model",
       [](RunConfig& c, const auto& v, const auto& w) {
         if (v == "l2") c.picard.reg_model = RegModel::l2;
         else if (v == "h2") c.picard.reg_model = RegModel::h2;
         else throw ConfigError(w + ": expected l2 or h2, got '" + v + "'");
       }},
      {"carleman.bc_mode",
       [](RunConfig& c, const auto& v, const auto& w) {
         if (v == "penalty") c.picard.bc_mode = BcMode::penalty;
         else if (v == "eliminate") c.picard.bc_mode = BcMode::eliminate;
         else throw ConfigError(w + ": expected penalty or eliminate, got '" + v + "'");
       }},
      {"carleman.solve_mode",
       [](RunConfig& c, const auto& v, const auto& w) {
         if (v == "staged") c.picard.solve_mode = SolveMode::staged;
         else if (v == "joint") c.picard.solve_mode = SolveMode::joint;
         else throw ConfigError(w + ": expected staged or joint, got '" + v + "'");
       }},
      {"inverse.nx",
       [](RunConfig& c, const auto& v, const auto& w) { c.inverse_nx = static_cast<int>(to_int(v, w)); }},
      {"inverse.ny",
       [](RunConfig& c, const auto& v, const auto& w) { c.inverse_ny = static_cast<int>(to_int(v, w)); }},
      {"noise.delta", [](RunConfig& c, const auto& v, const auto& w) { c.delta = to_double(v, w); }},
      {"noise.seed",
       [](RunConfig& c, const auto& v, const auto& w) {
         const long long s = to_int(v, w);
         if (s < 0) throw ConfigError(w + ": seed must be non-negative");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      // run.profile is applied before every other key in parse_config.
      {"run.profile", [](RunConfig&, const auto&, const auto&) {}},
      {"run.test", [](RunConfig& c, const auto& v, const auto&) { c.test = v; }},
      {"run.out", [](RunConfig& c, const auto& v, const auto&) { c.out_dir = v; }},
      {"run.record", [](RunConfig& c, const auto& v, const auto&) { c.record_path = v; }},
      {"run.stage",
       [](RunConfig& c, const auto& v, const auto& w) {
         if (v == "full") c.stage = Stage::full;
         else if (v == "forward") c.stage = Stage::forward;
         else if (v == "invert") c.stage = Stage::invert;
         else throw ConfigError(w + ": expected full, forward or invert, got '" + v + "'");
       }},
      {"custom.force1", [](RunConfig& c, const auto& v, const auto&) { c.custom_force1 = v; }},
      {"custom.force2", [](RunConfig& c, const auto& v, const auto&) { c.custom_force2 = v; }},
      {"custom.u0_1", [](RunConfig& c, const auto& v, const auto&) { c.custom_u01 = v; }},
      {"custom.u0_2", [](RunConfig& c, const auto& v, const auto&) { c.custom_u02 = v; }},
  };
  return table;
}

RunConfig from_profile(const std::string& name, const std::string& where) {
  if (name == "reference") return RunConfig{};
  if (name == "desk") return RunConfig::desk();
  throw ConfigError(where + ": unknown profile '" + name + "' (expected reference or desk)");
}

}  // namespace

RunConfig RunConfig::desk() {
  RunConfig c;
  c.profile = "desk";
  c.nx = c.ny = 21;
  c.dt = 5e-4;
  c.N = 15;
  c.picard.N = 15;
  return c;
}

void RunConfig::validate() const {
  if (nx < 5 || ny < 5) throw ConfigError("grid: nx and ny must be >= 5");
  if (!(dt > 0.0) || !(T > 0.0)) throw ConfigError("forward: dt and T must be positive");
  const double steps = T / dt;
  if (std::abs(steps - std::round(steps)) > 1e-9 * steps) throw ConfigError("forward: T / dt must be an integer");
  if (!(viscosity > 0.0)) throw ConfigError("forward: viscosity must be positive");
  if (N < 0) throw ConfigError("basis: N must be >= 0");
  if (picard.N != N) throw ConfigError("carleman: internal N differs from basis N");
  picard.validate();
  if (delta < 0.0 || delta >= 1.0) throw ConfigError("noise: delta must lie in [0, 1)");
  if ((inverse_nx == 0) != (inverse_ny == 0)) throw ConfigError("inverse: set both nx and ny or neither");
  if (inverse_nx != 0 && (inverse_nx < 5 || inverse_ny < 5)) throw ConfigError("inverse: nx and ny must be >= 5");
  if (test == "custom" && (custom_force1.empty() || custom_force2.empty() || custom_u01.empty() || custom_u02.empty())) {
    throw ConfigError("custom: test = custom needs force1, force2, u0_1 and u0_2 field files");
  }
  if (test != "custom" && test != "test1" && test != "test2" && test != "test3") {
    throw ConfigError("run.test: unknown test id '" + test + "'");
  }
}

void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value,
                      const std::string& where) {
  const std::string full = section + "." + key;
  const auto it = setters().find(full);
  if (it == setters().end()) throw ConfigError(where + ": unknown key '" + full + "'");
  it->second(cfg, value, where + ": " + full);
}

std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

RunConfig parse_config(std::istream& is, const std::string& source) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  std::string profile = "reference";
  if (auto p = tree.get_optional<std::string>("run.profile")) profile = *p;
  RunConfig cfg = from_profile(profile, source + ": run.profile");
  cfg.profile = profile;

  std::optional<double> basis_T;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(source + ": key '" + section + "' must sit inside a section");
    }
    for (const auto& [key, node] : body) {
      set_config_value(cfg, section, key, node.data(), source);
      if (section == "basis" && key == "T") basis_T = to_double(node.data(), source + ": basis.T");
    }
  }
  if (basis_T && std::abs(*basis_T - cfg.T) > 1e-12 * std::max(1.0, cfg.T)) {
    throw ConfigError(source + ": basis.T = " + std::to_string(*basis_T) + " differs from forward.T = " +
                      std::to_string(cfg.T));
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse_config(is, path);
}

void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env) {
  const std::string prefix = "NSINV_";
  // A profile resets every value, so it goes first.
  if (const auto it = env.find("NSINV_RUN_PROFILE"); it != env.end()) {
    cfg = from_profile(it->second, "environment: NSINV_RUN_PROFILE");
    cfg.profile = it->second;
  }
  for (const auto& [name, value] : env) {
    if (name == "NSINV_RUN_PROFILE") continue;
    if (name.rfind(prefix, 0) != 0) continue;
    const std::string rest = name.substr(prefix.size());
    const auto us = rest.find('_');
    if (us == std::string::npos) throw ConfigError("environment: malformed override " + name);
    std::string section = rest.substr(0, us);
    std::transform(section.begin(), section.end(), section.begin(), [](unsigned char c) { return std::tolower(c); });
    const std::string key_upper = rest.substr(us + 1);
    // Keys are matched case-insensitively against the schema.
    std::string match;
    for (const std::string& k : known_config_keys()) {
      if (k.rfind(section + ".", 0) != 0) continue;
      std::string kk = k.substr(section.size() + 1);
      std::string up = kk;
      std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
      if (up == key_upper) match = kk;
    }
    if (match.empty()) throw ConfigError("environment: unknown key '" + name + "'");
    set_config_value(cfg, section, match, value, "environment");
  }
  cfg.validate();
}

std::map<std::string, std::string> nsinv_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv(*e);
    if (kv.rfind("NSINV_", 0) != 0) continue;
    const auto eq = kv.find('=');
    if (eq != std::string::npos) out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::full: return "full";
    case Stage::forward: return "forward";
    case Stage::invert: return "invert";
  }
  return "full";
}
std::string to_string(RegModel m) { return m == RegModel::l2 ? "l2" : "h2"; }
std::string to_string(BcMode m) { return m == BcMode::penalty ? "penalty" : "eliminate"; }
std::string to_string(SolveMode m) { return m == SolveMode::staged ? "staged" : "joint"; }

}  // namespace nsinv
