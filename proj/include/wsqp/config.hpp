#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsqp/error.hpp"
#include "wsqp/synthetic.hpp"
#include "wsqp/wavesolver.hpp"

namespace wsqp {

using json = nlohmann::json;

enum class KeyType : std::uint8_t { number, integer, string, number_list };

struct KeySpec {
  const char* name;
  KeyType type;
  json fallback;  // null: optional without default
  const char* doc;
};

inline const std::vector<std::string>& run_modes() {
  static const std::vector<std::string> modes{"forward",          "invert", "theory-sequences",
                                              "theory-audit",     "perturbation-lab",
                                              "mms",              "gradient-check"};
  return modes;
}

/// Flat key schema of a run configuration (a JSON object with dotted keys).
inline const std::vector<KeySpec>& config_schema() {
  static const std::vector<KeySpec> keys{
      {"mode", KeyType::string, nullptr, "one of the run modes"},
      {"seed", KeyType::integer, 0, "master RNG seed"},
      {"out", KeyType::string, "out", "output directory"},

      {"grid.dim", KeyType::integer, 1, "spatial dimension, 1 or 2"},
      {"grid.cells_x", KeyType::integer, 32, "cells along x"},
      {"grid.cells_y", KeyType::integer, 32, "cells along y (2D)"},
      {"grid.extent_x", KeyType::number, 1.0, "domain length along x"},
      {"grid.extent_y", KeyType::number, 1.0, "domain length along y (2D)"},
      {"grid.sides", KeyType::string, "DN", "boundary type per side left,right[,bottom,top]: D or N"},
      {"grid.horizon", KeyType::number, 2.0, "time horizon T"},
      {"grid.steps", KeyType::integer, 0, "time steps Nt; 0 selects the CFL rule"},
      {"solver.safety", KeyType::number, 0.9, "CFL safety factor in (0, 1]"},

      {"model.lower", KeyType::number, 1.0, "lower bound nu_-"},
      {"model.upper", KeyType::number, 2.0, "upper bound nu_+"},
      {"model.damping", KeyType::number, 0.5, "damping eta >= 0"},
      {"model.nu_min", KeyType::number, 1.0, "nu_min > 0"},
      {"model.nu_max", KeyType::number, 2.0, "nu_max >= nu_min"},
      {"model.nu0", KeyType::string, "bump", "initial control: constant, bump or file"},
      {"model.nu0_value", KeyType::number, 1.5, "value for nu0 = constant"},
      {"model.nu0_file", KeyType::string, nullptr, "field file (.csv or .wsqf) for nu0 = file"},
      {"model.nu0_distance", KeyType::number, 0.1, "L2 distance of the bump start from the target"},
      {"model.nu0_center_x", KeyType::number, 0.5, "bump start centre x"},
      {"model.nu0_center_y", KeyType::number, 0.5, "bump start centre y"},
      {"model.nu0_width", KeyType::number, 0.1, "bump start width"},

      {"source.amplitude", KeyType::number, 1.0, "source amplitude"},
      {"source.frequency", KeyType::number, 2.0, "source carrier frequency"},
      {"source.bump_m", KeyType::integer, 2, "smooth-start exponent m >= 2"},
      {"source.bump_scale", KeyType::number, 0.3, "smooth-start time scale"},
      {"source.center_x", KeyType::number, 0.3, "source centre x"},
      {"source.center_y", KeyType::number, 0.5, "source centre y"},
      {"source.width", KeyType::number, 0.1, "source width"},

      {"obs.receivers_x", KeyType::number_list, json::array(), "receiver x positions; empty: full aperture"},
      {"obs.receivers_y", KeyType::number_list, json::array(), "receiver y positions (2D)"},
      {"obs.width", KeyType::number, 0.05, "receiver width"},
      {"obs.taper_m", KeyType::integer, 2, "end-of-record taper exponent m >= 2"},
      {"obs.taper_scale", KeyType::number, 0.3, "end-of-record taper time scale"},
      {"obs.data", KeyType::string, "synthetic", "synthetic or file"},
      {"obs.data_file", KeyType::string, nullptr, "space-time field file for obs.data = file"},

      {"target.bump_amplitude", KeyType::number, 0.0, "data control nu_- + amplitude * bump"},
      {"target.center_x", KeyType::number, 0.7, "data control bump centre x"},
      {"target.center_y", KeyType::number, 0.5, "data control bump centre y"},
      {"target.width", KeyType::number, 0.1, "data control bump width"},
      {"reference", KeyType::string, "target", "error reference: target, solve or none"},

      {"lambda", KeyType::number, 1e-9, "Tikhonov weight lambda > 0"},
      {"tau", KeyType::number, 1e-9, "strong-activity threshold tau >= 0"},
      {"tau_sweep", KeyType::number_list, json::array(), "extra tau values for the SSC sampler"},
      {"gamma", KeyType::number, 1e-300, "gamma in (0, 1)"},
      {"log_gamma", KeyType::number, nullptr, "ln gamma; overrides gamma"},
      {"epsilon", KeyType::number, nullptr, "epsilon; perturbation-lab uses ||nu0 - nu_bar||"},

      {"sqp.tol", KeyType::number, 1e-10, "stop when the control step is below this"},
      {"sqp.max_k", KeyType::integer, 15, "maximum SQP iterations"},
      {"qp.tol", KeyType::number, 0.0, "absolute QP VI tolerance; 0 selects qp.rel_tol"},
      {"qp.rel_tol", KeyType::number, 1e-9, "relative QP VI tolerance"},
      {"qp.max_iter", KeyType::integer, 20000, "maximum QP iterations"},

      {"theory.k_max", KeyType::integer, 60, "last index of the b_k table"},

      {"ledger.omega_measure", KeyType::number, nullptr, "|Omega|; defaults to the grid"},
      {"ledger.horizon", KeyType::number, nullptr, "T; defaults to the grid"},
      {"ledger.C_f", KeyType::number, nullptr, "source bound C_f"},
      {"ledger.C_a", KeyType::number, nullptr, "weight bound C_a"},
      {"ledger.C_0", KeyType::number, nullptr, "initial-guess bound C_0"},
      {"ledger.C_bar", KeyType::number, nullptr, "reference bound C_bar"},
      {"ledger.c_hat", KeyType::number, nullptr, "sup-norm constant c_hat"},
      {"ledger.c_check", KeyType::number, nullptr, "sup-norm constant c_check"},
      {"ledger.L", KeyType::number, nullptr, "control Lipschitz constant L"},
      {"ledger.L_p", KeyType::number, nullptr, "state Lipschitz constant L_p"},
      {"ledger.L_q", KeyType::number, nullptr, "adjoint Lipschitz constant L_q"},
      {"ledger.sum_a_linf", KeyType::number, nullptr, "sum of ||a_i||_Linf"},
      {"ledger.dtt_pbar", KeyType::number, nullptr, "||D_tt p_bar||_{L2 Linf}"},
      {"ledger.dtt_qbar", KeyType::number, nullptr, "||D_tt q_bar||_{L2 Linf}"},
      {"ledger.alpha", KeyType::number, nullptr, "coercivity alpha for C_1..C_4"},

      {"lab.pairs", KeyType::integer, 10, "random manufactured pairs for the Lipschitz probe"},
      {"lab.ssc_trials", KeyType::integer, 64, "random directions for the SSC sampler"},
      {"lab.fixed_point_k", KeyType::integer, 1, "SQP iterate frozen for the fixed-point run"},
      {"lab.fixed_point_max_it", KeyType::integer, 40, "fixed-point iteration cap"},

      {"mms.cells", KeyType::number_list, json::array({32, 64, 128}), "refinement levels"},
      {"mms.steps_per_cell", KeyType::number, 2.0, "Nt / cells for the refinement study"},

      {"check.coordinates", KeyType::integer, 20, "random coordinates for the gradient check"},
      {"check.step", KeyType::number, 1e-5, "central difference step"},
      {"check.threshold", KeyType::number, 1e-6, "maximum relative error"},
  };
  return keys;
}

struct ConfigIssue {
  std::string key;
  std::string reason;
};

namespace detail {

inline const KeySpec* find_key(const std::string& name) {
  for (const KeySpec& k : config_schema())
    if (name == k.name) return &k;
  return nullptr;
}

inline bool type_matches(const json& v, KeyType t) {
  switch (t) {
    case KeyType::number: return v.is_number();
    case KeyType::integer: return v.is_number_integer();
    case KeyType::string: return v.is_string();
    case KeyType::number_list:
      if (!v.is_array()) return false;
      for (const json& e : v)
        if (!e.is_number()) return false;
      return true;
  }
  return false;
}

inline const char* type_name(KeyType t) {
  switch (t) {
    case KeyType::number: return "a number";
    case KeyType::integer: return "an integer";
    case KeyType::string: return "a string";
    case KeyType::number_list: return "a list of numbers";
  }
  return "?";
}

}  // namespace detail

/// Schema issues: unknown keys, wrong types, missing mode.
inline std::vector<ConfigIssue> schema_issues(const json& raw) {
  std::vector<ConfigIssue> issues;
  if (!raw.is_object()) {
    issues.push_back({"", "configuration must be a JSON object with flat dotted keys"});
    return issues;
  }
  for (const auto& [key, value] : raw.items()) {
    const KeySpec* spec = detail::find_key(key);
    if (!spec) {
      issues.push_back({key, "unknown key"});
      continue;
    }
    if (!detail::type_matches(value, spec->type))
      issues.push_back({key, std::string("must be ") + detail::type_name(spec->type)});
  }
  if (!raw.contains("mode")) {
    issues.push_back({"mode", "required key missing"});
  } else if (raw["mode"].is_string()) {
    const std::string m = raw["mode"];
    bool ok = false;
    for (const std::string& x : run_modes()) ok |= x == m;
    if (!ok) issues.push_back({"mode", "unknown mode '" + m + "'"});
  }
  return issues;
}

/// Configuration with defaults filled in. Construct through load_config.
class RunConfig {
 public:
  explicit RunConfig(json merged) : j_(std::move(merged)) {}

  const json& raw() const { return j_; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_[key].is_null(); }
  double number(const std::string& key) const { return at(key).get<double>(); }
  long long integer(const std::string& key) const { return at(key).get<long long>(); }
  std::string string(const std::string& key) const { return at(key).get<std::string>(); }
  std::vector<double> list(const std::string& key) const {
    return at(key).get<std::vector<double>>();
  }
  std::optional<double> maybe(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return number(key);
  }
  std::string mode() const { return string("mode"); }

  void set(const std::string& key, json v) { j_[key] = std::move(v); }

 private:
  const json& at(const std::string& key) const {
    require(has(key), "config: key '" + key + "' is required for this mode");
    return j_.at(key);
  }
  json j_;
};

inline RunConfig merge_defaults(const json& raw) {
  json merged = json::object();
  for (const KeySpec& k : config_schema())
    if (!k.fallback.is_null()) merged[k.name] = k.fallback;
  for (const auto& [key, value] : raw.items()) merged[key] = value;
  return RunConfig(std::move(merged));
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "config: cannot open '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw InvariantError("config: '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Parses and schema-checks; throws naming the first offending key.
inline RunConfig load_config(const json& raw) {
  const auto issues = schema_issues(raw);
  if (!issues.empty())
    throw InvariantError("config: key '" + issues.front().key + "': " + issues.front().reason);
  return merge_defaults(raw);
}

inline Boundary parse_side(char c, const std::string& key) {
  if (c == 'D' || c == 'd') return Boundary::dirichlet;
  if (c == 'N' || c == 'n') return Boundary::neumann;
  throw InvariantError("config: key '" + key + "': boundary types are D or N");
}

/// SyntheticSpec from the grid, model, source, obs, target and lambda keys.
inline SyntheticSpec synthetic_spec(const RunConfig& c) {
  SyntheticSpec s;
  s.grid.dim = static_cast<int>(c.integer("grid.dim"));
  s.grid.cells = {static_cast<int>(c.integer("grid.cells_x")),
                  static_cast<int>(c.integer("grid.cells_y"))};
  s.grid.extent = {c.number("grid.extent_x"), c.number("grid.extent_y")};
  const std::string sides = c.string("grid.sides");
  const std::size_t need = s.grid.dim == 2 ? 4 : 2;
  require(sides.size() == need, "config: key 'grid.sides': expected " + std::to_string(need) +
                                    " letters (left, right" + (need == 4 ? ", bottom, top" : "") + ")");
  for (std::size_t i = 0; i < 4; ++i)
    s.grid.sides[i] = i < sides.size() ? parse_side(sides[i], "grid.sides") : Boundary::neumann;
  s.grid.horizon = c.number("grid.horizon");
  s.grid.steps = static_cast<int>(c.integer("grid.steps"));
  s.safety = c.number("solver.safety");
  s.lower = c.number("model.lower");
  s.upper = c.number("model.upper");
  s.damping = c.number("model.damping");
  s.nu_min = c.number("model.nu_min");
  s.nu_max = c.number("model.nu_max");
  s.lambda = c.number("lambda");
  s.source.amplitude = c.number("source.amplitude");
  s.source.frequency = c.number("source.frequency");
  s.source.bump_m = static_cast<int>(c.integer("source.bump_m"));
  s.source.bump_scale = c.number("source.bump_scale");
  s.source.center = {c.number("source.center_x"), c.number("source.center_y")};
  s.source.width = c.number("source.width");
  const auto rx = c.list("obs.receivers_x");
  const auto ry = c.list("obs.receivers_y");
  require(s.grid.dim == 1 || ry.size() == rx.size(),
          "config: key 'obs.receivers_y': needs one entry per receiver in 2D");
  for (std::size_t i = 0; i < rx.size(); ++i)
    s.receivers.positions.push_back({rx[i], i < ry.size() ? ry[i] : 0.0});
  s.receivers.width = c.number("obs.width");
  s.receivers.taper_m = static_cast<int>(c.integer("obs.taper_m"));
  s.receivers.taper_scale = c.number("obs.taper_scale");
  s.target.bump_amplitude = c.number("target.bump_amplitude");
  s.target.center = {c.number("target.center_x"), c.number("target.center_y")};
  s.target.width = c.number("target.width");
  return s;
}

/// Cross-field checks without any solve: schema, CFL, bound ordering, tau, lambda.
inline std::vector<ConfigIssue> validate_config(const json& raw) {
  std::vector<ConfigIssue> issues = schema_issues(raw);
  if (!raw.is_object()) return issues;
  // Cross-field checks see the config without the keys that failed the schema.
  json clean = raw;
  for (const ConfigIssue& i : issues)
    if (!i.key.empty() && i.key != "mode") clean.erase(i.key);
  const RunConfig c = merge_defaults(clean);
  const double lo = c.number("model.lower"), up = c.number("model.upper");
  const double nmin = c.number("model.nu_min"), nmax = c.number("model.nu_max");
  if (!(nmin > 0.0)) issues.push_back({"model.nu_min", "nu_min must be positive"});
  if (nmin > nmax) issues.push_back({"model.nu_max", "ordering violated: nu_min > nu_max"});
  if (lo > up) issues.push_back({"model.upper", "ordering violated: nu_upper < nu_lower"});
  if (lo < nmin) issues.push_back({"model.lower", "ordering violated: nu_lower < nu_min"});
  if (up > nmax) issues.push_back({"model.upper", "ordering violated: nu_upper > nu_max"});
  if (c.number("model.damping") < 0.0)
    issues.push_back({"model.damping", "damping eta must be nonnegative"});
  if (!(c.number("lambda") > 0.0)) issues.push_back({"lambda", "lambda must be positive"});
  if (c.number("tau") < 0.0) issues.push_back({"tau", "tau must be >= 0"});
  for (double t : c.list("tau_sweep"))
    if (t < 0.0) issues.push_back({"tau_sweep", "tau values must be >= 0"});
  const double gamma = c.number("gamma");
  if (!c.has("log_gamma") && !(gamma > 0.0 && gamma < 1.0))
    issues.push_back({"gamma", "gamma must lie in (0, 1)"});
  if (c.has("log_gamma") && !(c.number("log_gamma") < 0.0))
    issues.push_back({"log_gamma", "ln gamma must be negative"});
  const double safety = c.number("solver.safety");
  if (!(safety > 0.0 && safety <= 1.0))
    issues.push_back({"solver.safety", "safety must lie in (0, 1]"});
  const std::string nu0 = c.string("model.nu0");
  if (nu0 != "constant" && nu0 != "bump" && nu0 != "file")
    issues.push_back({"model.nu0", "must be constant, bump or file"});
  if (nu0 == "file" && !c.has("model.nu0_file"))
    issues.push_back({"model.nu0_file", "required when model.nu0 = file"});
  const std::string data = c.string("obs.data");
  if (data != "synthetic" && data != "file")
    issues.push_back({"obs.data", "must be synthetic or file"});
  if (data == "file" && !c.has("obs.data_file"))
    issues.push_back({"obs.data_file", "required when obs.data = file"});
  const std::string ref = c.string("reference");
  if (ref != "target" && ref != "solve" && ref != "none")
    issues.push_back({"reference", "must be target, solve or none"});
  if (c.integer("sqp.max_k") < 0) issues.push_back({"sqp.max_k", "must be >= 0"});
  if (c.integer("theory.k_max") < 2) issues.push_back({"theory.k_max", "must be >= 2"});

  try {
    SyntheticSpec s = synthetic_spec(c);
    GridSpec gs = s.grid;
    const bool auto_steps = gs.steps == 0;
    if (auto_steps) gs.steps = 2;
    const Grid g(gs);
    if (!auto_steps && nmin > 0.0 && safety > 0.0 && safety <= 1.0) {
      const TimeStepChoice choice = cfl_timestep(g, nmin, safety);
      if (g.dt() > choice.dt_max * (1.0 + 1e-12))
        issues.push_back({"grid.steps", "dt = " + sci(g.dt()) + " exceeds the CFL limit " +
                                            sci(choice.dt_max) + "; use grid.steps >= " +
                                            std::to_string(choice.steps)});
    }
  } catch (const InvariantError& e) {
    issues.push_back({"grid", e.what()});
  }
  return issues;
}

}  // namespace wsqp
