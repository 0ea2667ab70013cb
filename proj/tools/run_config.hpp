#pragma once

// YAML run configuration: loading, overrides, validation and the fully
// resolved echo written into run manifests.

#include <yaml-cpp/yaml.h>

#include <json.hpp>

#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tescape/dispersive.hpp"
#include "tescape/spectrum.hpp"
#include "tescape/sweep.hpp"

namespace tescape::app {

/// Invalid configuration; the message carries the source position when known.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct CalibrationSection {
  std::string csv;
  bool fit_delta0 = true;
  Complex delta0_ghz{0.0, 0.0}; // used when fit_delta0 is false
};

struct StarkSection {
  std::vector<double> n_r_grid = range_grid(0.0, 200.0, 10.0);
};

struct SpectrumSection {
  int levels = 12;        // transmon levels listed
  int transitions = 6;    // k-photon transitions 0 -> k
};

struct RunConfig {
  CircuitParams circuit;
  std::optional<FitTargets> targets;
  FitOptions fit;
  double omega_p_ghz = 8.1;
  std::vector<double> n_bar_grid = range_grid(0.0, 300.0, 2.0);
  BathSpec bath;
  FloquetSettings floquet;
  std::optional<DispersiveParams> dispersive; // derived from the circuit when absent
  double kappa_r = kDefaultKappa;
  CalibrationSection calibration;
  StarkSection stark;
  SpectrumSection spectrum;
  std::string output_dir = "out";
};

namespace detail {

inline std::string where(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  if (m.is_null()) return "";
  return " (line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ")";
}

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what + where(n));
}

inline void check_keys(const YAML::Node& map, const std::string& path,
                       const std::set<std::string>& allowed) {
  if (!map.IsMap()) fail(map, path, "expected a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, path.empty() ? key : path + "." + key, "unknown key");
  }
}

template <class T>
void read(const YAML::Node& map, const std::string& key, const std::string& path, T& out) {
  const YAML::Node n = map[key];
  if (!n) return;
  try {
    out = n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, path + "." + key, "wrong value type");
  }
}

inline std::vector<double> read_grid(const YAML::Node& n, const std::string& path) {
  std::vector<double> g;
  try {
    if (n.IsSequence()) {
      for (const auto& v : n) g.push_back(v.as<double>());
    } else if (n.IsMap()) {
      check_keys(n, path, {"start", "stop", "step"});
      if (!n["start"] || !n["stop"] || !n["step"]) fail(n, path, "range needs start, stop and step");
      g = range_grid(n["start"].as<double>(), n["stop"].as<double>(), n["step"].as<double>());
    } else {
      g.push_back(n.as<double>());
    }
  } catch (const YAML::Exception&) {
    fail(n, path, "expected a number, a list or {start, stop, step}");
  } catch (const std::invalid_argument& e) {
    fail(n, path, e.what());
  }
  if (g.empty()) fail(n, path, "grid is empty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] >= 0.0)) fail(n, path, "values must be >= 0");
    if (i > 0 && !(g[i] > g[i - 1])) fail(n, path, "values must be strictly increasing");
  }
  return g;
}

inline YAML::Node parse_scalar(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception&) {
    return YAML::Node(text);
  }
}

} // namespace detail

/// Applies `a.b.c=value` to the document; the value is parsed as YAML.
inline void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string path = assignment.substr(0, eq);
  std::vector<std::string> keys;
  std::stringstream ss(path);
  for (std::string k; std::getline(ss, k, '.');) {
    if (k.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    keys.push_back(k);
  }
  // yaml-cpp nodes are handles; walking with copies edits the shared tree.
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    YAML::Node next = chain.back()[keys[i]];
    if (next && !next.IsMap())
      throw ConfigError("override '" + assignment + "': " + keys[i] + " is not a section");
    chain.push_back(next);
  }
  chain.back()[keys.back()] = detail::parse_scalar(assignment.substr(eq + 1));
}

inline RunConfig parse_config(const YAML::Node& root) {
  using detail::check_keys;
  using detail::fail;
  using detail::read;
  RunConfig c;
  if (!root || root.IsNull()) return c;
  check_keys(root, "", {"circuit", "targets", "fit", "pump", "bath", "floquet", "dispersive",
                        "calibration", "stark_line", "spectrum", "output"});

  if (const auto n = root["circuit"]) {
    check_keys(n, "circuit", {"E_J_GHz", "E_C_GHz", "g_GHz", "omega_a_GHz", "N_g", "N_c",
                              "n_transmon", "n_fock"});
    read(n, "E_J_GHz", "circuit", c.circuit.ej_ghz);
    read(n, "E_C_GHz", "circuit", c.circuit.ec_ghz);
    read(n, "g_GHz", "circuit", c.circuit.g_ghz);
    read(n, "omega_a_GHz", "circuit", c.circuit.omega_a_ghz);
    read(n, "N_g", "circuit", c.circuit.n_g);
    read(n, "N_c", "circuit", c.circuit.n_charge);
    read(n, "n_transmon", "circuit", c.circuit.n_transmon);
    read(n, "n_fock", "circuit", c.circuit.n_fock);
    try {
      c.circuit.validate();
    } catch (const std::invalid_argument& e) {
      fail(n, "circuit", e.what());
    }
  }
  if (const auto n = root["targets"]) {
    check_keys(n, "targets", {"omega_q_bar_GHz", "omega_r_bar_GHz", "alpha_q_GHz", "chi_qr_GHz"});
    for (const char* k : {"omega_q_bar_GHz", "omega_r_bar_GHz", "alpha_q_GHz", "chi_qr_GHz"})
      if (!n[k]) fail(n, "targets", std::string("missing ") + k);
    FitTargets t;
    read(n, "omega_q_bar_GHz", "targets", t.omega_q_bar);
    read(n, "omega_r_bar_GHz", "targets", t.omega_r_bar);
    read(n, "alpha_q_GHz", "targets", t.alpha_q);
    read(n, "chi_qr_GHz", "targets", t.chi_qr);
    if (!(t.omega_q_bar > 0 && t.omega_r_bar > 0 && t.alpha_q > 0 && t.chi_qr > 0))
      fail(n, "targets", "all targets must be positive");
    c.targets = t;
  }
  if (const auto n = root["fit"]) {
    check_keys(n, "fit", {"tolerance", "max_iterations"});
    read(n, "tolerance", "fit", c.fit.tolerance);
    read(n, "max_iterations", "fit", c.fit.max_iterations);
    if (!(c.fit.tolerance > 0.0) || c.fit.max_iterations < 1)
      fail(n, "fit", "tolerance must be positive and max_iterations >= 1");
  }
  if (const auto n = root["pump"]) {
    check_keys(n, "pump", {"omega_p_GHz", "n_bar"});
    read(n, "omega_p_GHz", "pump", c.omega_p_ghz);
    if (!(c.omega_p_ghz > 0.0)) fail(n, "pump.omega_p_GHz", "must be positive");
    if (n["n_bar"]) c.n_bar_grid = detail::read_grid(n["n_bar"], "pump.n_bar");
  }
  if (const auto n = root["bath"]) {
    check_keys(n, "bath", {"kappa_per_s", "n_th", "shape", "omega_ref_GHz"});
    read(n, "kappa_per_s", "bath", c.bath.kappa);
    read(n, "n_th", "bath", c.bath.n_th);
    if (n["shape"]) {
      const auto s = n["shape"].as<std::string>();
      if (s == "flat") c.bath.shape = SpectralShape::Flat;
      else if (s == "ohmic") c.bath.shape = SpectralShape::Ohmic;
      else fail(n["shape"], "bath.shape", "expected flat or ohmic");
    }
    if (n["omega_ref_GHz"]) {
      double f = 0.0;
      read(n, "omega_ref_GHz", "bath", f);
      if (!(f > 0.0)) fail(n["omega_ref_GHz"], "bath.omega_ref_GHz", "must be positive");
      c.bath.omega_ref = angular_from_ghz(f);
    }
    if (!(c.bath.kappa > 0.0)) fail(n, "bath.kappa_per_s", "must be positive");
    if (!(c.bath.n_th >= 0.0)) fail(n, "bath.n_th", "must be >= 0");
  }
  if (const auto n = root["floquet"]) {
    check_keys(n, "floquet", {"steps", "samples", "k_max", "alias_tolerance", "rule"});
    read(n, "steps", "floquet", c.floquet.steps);
    read(n, "samples", "floquet", c.floquet.samples);
    read(n, "k_max", "floquet", c.floquet.k_max);
    read(n, "alias_tolerance", "floquet", c.floquet.alias_tolerance);
    if (n["rule"]) {
      const auto r = n["rule"].as<std::string>();
      if (r == "magnus4") c.floquet.rule = StepRule::Magnus4;
      else if (r == "midpoint") c.floquet.rule = StepRule::Midpoint;
      else fail(n["rule"], "floquet.rule", "expected magnus4 or midpoint");
    }
    try {
      c.floquet.validate();
    } catch (const std::invalid_argument& e) {
      fail(n, "floquet", e.what());
    }
  }
  if (const auto n = root["dispersive"]) {
    check_keys(n, "dispersive", {"omega_q_bar_GHz", "omega_r_bar_GHz", "alpha_q_GHz", "alpha_r_GHz",
                                 "chi_qr_GHz", "kappa_r_per_s"});
    read(n, "kappa_r_per_s", "dispersive", c.kappa_r);
    const bool any = n["omega_q_bar_GHz"] || n["omega_r_bar_GHz"] || n["alpha_q_GHz"] ||
                     n["alpha_r_GHz"] || n["chi_qr_GHz"];
    if (any) {
      for (const char* k : {"omega_q_bar_GHz", "omega_r_bar_GHz", "alpha_q_GHz", "alpha_r_GHz", "chi_qr_GHz"})
        if (!n[k]) fail(n, "dispersive", std::string("missing ") + k + " (give all five or none)");
      DispersiveParams d;
      read(n, "omega_q_bar_GHz", "dispersive", d.omega_q_bar);
      read(n, "omega_r_bar_GHz", "dispersive", d.omega_r_bar);
      read(n, "alpha_q_GHz", "dispersive", d.alpha_q);
      read(n, "alpha_r_GHz", "dispersive", d.alpha_r);
      read(n, "chi_qr_GHz", "dispersive", d.chi_qr);
      d.kappa_r = c.kappa_r;
      try {
        d.validate();
      } catch (const std::invalid_argument& e) {
        fail(n, "dispersive", e.what());
      }
      c.dispersive = d;
    }
    if (!(c.kappa_r > 0.0)) fail(n, "dispersive.kappa_r_per_s", "must be positive");
  }
  if (const auto n = root["calibration"]) {
    check_keys(n, "calibration", {"csv", "fit_delta0", "delta0_re_MHz", "delta0_im_MHz"});
    read(n, "csv", "calibration", c.calibration.csv);
    read(n, "fit_delta0", "calibration", c.calibration.fit_delta0);
    double re = 0.0, im = 0.0;
    read(n, "delta0_re_MHz", "calibration", re);
    read(n, "delta0_im_MHz", "calibration", im);
    c.calibration.delta0_ghz = Complex(re * 1e-3, im * 1e-3);
  }
  if (const auto n = root["stark_line"]) {
    check_keys(n, "stark_line", {"n_r"});
    if (n["n_r"]) c.stark.n_r_grid = detail::read_grid(n["n_r"], "stark_line.n_r");
  }
  if (const auto n = root["spectrum"]) {
    check_keys(n, "spectrum", {"levels", "transitions"});
    read(n, "levels", "spectrum", c.spectrum.levels);
    read(n, "transitions", "spectrum", c.spectrum.transitions);
    if (c.spectrum.levels < 1 || c.spectrum.transitions < 1)
      fail(n, "spectrum", "levels and transitions must be >= 1");
  }
  if (const auto n = root["output"]) {
    check_keys(n, "output", {"dir"});
    read(n, "dir", "output", c.output_dir);
  }
  if (c.omega_p_ghz == c.circuit.omega_a_ghz)
    throw ConfigError("config: pump.omega_p_GHz equals circuit.omega_a_GHz; the displaced frame "
                      "diverges on resonance");
  return c;
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = path.empty() ? YAML::Node(YAML::NodeType::Map) : YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("config: cannot open " + path);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  for (const auto& o : overrides) apply_override(root, o);
  return parse_config(root);
}

inline const char* shape_name(SpectralShape s) { return s == SpectralShape::Flat ? "flat" : "ohmic"; }

inline nlohmann::ordered_json grid_json(const std::vector<double>& g) {
  auto a = nlohmann::ordered_json::array();
  for (double v : g) a.push_back(v);
  return a;
}

/// Every value the run uses, defaults included.
inline nlohmann::ordered_json resolved_json(const RunConfig& c, const CircuitParams& circuit,
                                            const DispersiveParams* dispersive) {
  nlohmann::ordered_json j;
  j["circuit"] = {{"E_J_GHz", circuit.ej_ghz},       {"E_C_GHz", circuit.ec_ghz},
                  {"g_GHz", circuit.g_ghz},          {"omega_a_GHz", circuit.omega_a_ghz},
                  {"N_g", circuit.n_g},              {"N_c", circuit.n_charge},
                  {"n_transmon", circuit.n_transmon}, {"n_fock", circuit.n_fock}};
  if (c.targets)
    j["targets"] = {{"omega_q_bar_GHz", c.targets->omega_q_bar},
                    {"omega_r_bar_GHz", c.targets->omega_r_bar},
                    {"alpha_q_GHz", c.targets->alpha_q},
                    {"chi_qr_GHz", c.targets->chi_qr}};
  else
    j["targets"] = nullptr;
  j["fit"] = {{"tolerance", c.fit.tolerance}, {"max_iterations", c.fit.max_iterations}};
  j["pump"] = {{"omega_p_GHz", c.omega_p_ghz}, {"n_bar", grid_json(c.n_bar_grid)}};
  const double omega_ref = c.bath.omega_ref > 0.0 ? c.bath.omega_ref : angular_from_ghz(circuit.omega_a_ghz);
  j["bath"] = {{"kappa_per_s", c.bath.kappa},
               {"n_th", c.bath.n_th},
               {"shape", shape_name(c.bath.shape)},
               {"omega_ref_GHz", ghz_from_angular(omega_ref)}};
  j["floquet"] = {{"steps", c.floquet.steps},
                  {"samples", c.floquet.samples},
                  {"k_max", c.floquet.k_max},
                  {"alias_tolerance", c.floquet.alias_tolerance},
                  {"rule", c.floquet.rule == StepRule::Magnus4 ? "magnus4" : "midpoint"}};
  if (dispersive)
    j["dispersive"] = {{"omega_q_bar_GHz", dispersive->omega_q_bar},
                       {"omega_r_bar_GHz", dispersive->omega_r_bar},
                       {"alpha_q_GHz", dispersive->alpha_q},
                       {"alpha_r_GHz", dispersive->alpha_r},
                       {"chi_qr_GHz", dispersive->chi_qr},
                       {"kappa_r_per_s", dispersive->kappa_r},
                       {"source", c.dispersive ? "config" : "circuit"}};
  else
    j["dispersive"] = {{"kappa_r_per_s", c.kappa_r}, {"source", c.dispersive ? "config" : "circuit"}};
  j["calibration"] = {{"csv", c.calibration.csv},
                      {"fit_delta0", c.calibration.fit_delta0},
                      {"delta0_re_MHz", c.calibration.delta0_ghz.real() * 1e3},
                      {"delta0_im_MHz", c.calibration.delta0_ghz.imag() * 1e3}};
  j["stark_line"] = {{"n_r", grid_json(c.stark.n_r_grid)}};
  j["spectrum"] = {{"levels", c.spectrum.levels}, {"transitions", c.spectrum.transitions}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

} // namespace tescape::app
