// Command-line front end: parameter fits, escape sweeps, thresholds,
// calibration fits, Stark lines and spectra, driven by one YAML config.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "run_config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace tescape;
using namespace tescape::app;

namespace {

constexpr int kSchemaVersion = 1;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct Options {
  std::string config;
  std::string out;
  int workers = 1;
  std::vector<std::string> overrides;
  std::string table; // threshold: existing sweep CSV
};

struct Run {
  RunConfig cfg;
  fs::path out_dir;
  CircuitParams circuit;
  json fitted = nullptr;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Run prepare(const Options& o) {
  Run r;
  r.cfg = load_config(o.config, o.overrides);
  r.out_dir = o.out.empty() ? fs::path(r.cfg.output_dir) : fs::path(o.out);
  fs::create_directories(r.out_dir);
  r.circuit = r.cfg.circuit;
  return r;
}

// Replaces the circuit energies by a fit when targets are configured.
void resolve_circuit(Run& r) {
  if (!r.cfg.targets) return;
  FitOptions opt = r.cfg.fit;
  opt.truncation = r.cfg.circuit;
  const FitResult fit = fit_circuit_params(*r.cfg.targets, opt);
  r.circuit = fit.params;
  const DressedParameters d = dressed_parameters(fit.params);
  r.fitted = {{"E_J_GHz", fit.params.ej_ghz},
              {"E_C_GHz", fit.params.ec_ghz},
              {"g_GHz", fit.params.g_ghz},
              {"omega_a_GHz", fit.params.omega_a_ghz},
              {"iterations", fit.iterations},
              {"evaluations", fit.evaluations},
              {"scaled_residuals", fit.residuals},
              {"predicted",
               {{"omega_q_bar_GHz", d.omega_q_bar},
                {"omega_r_bar_GHz", d.omega_r_bar},
                {"alpha_q_GHz", d.alpha_q},
                {"alpha_r_GHz", d.alpha_r},
                {"chi_qr_GHz", d.chi_qr}}}};
}

DispersiveParams resolve_dispersive(const Run& r) {
  if (r.cfg.dispersive) return *r.cfg.dispersive;
  return DispersiveParams::from(dressed_parameters(r.circuit), r.cfg.kappa_r);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_manifest(const Run& r, const std::string& command, const DispersiveParams* dispersive,
                    json results) {
  json m;
  m["schema_version"] = kSchemaVersion;
  m["command"] = command;
  m["code_version"] = TESCAPE_VERSION;
  m["timestamp"] = utc_timestamp();
  m["resolved_config"] = resolved_json(r.cfg, r.circuit, dispersive);
  m["fitted_params"] = r.fitted;
  m["results"] = std::move(results);
  m["runtime_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - r.start).count();
  write_text(r.out_dir / "manifest.json", m.dump(2) + "\n");
}

int cmd_fit_params(const Options& o) {
  Run r = prepare(o);
  if (!r.cfg.targets) throw ConfigError("fit-params: config has no targets section");
  resolve_circuit(r);
  write_text(r.out_dir / "fit.json", r.fitted.dump(2) + "\n");
  write_manifest(r, "fit-params", nullptr, {{"fit", "fit.json"}});
  std::cout << r.fitted.dump(2) << "\n";
  return 0;
}

json threshold_json(const std::vector<SweepRow>& rows) {
  const auto crit = detect_threshold(rows);
  const auto width = jump_width(rows);
  std::size_t failed = 0;
  for (const auto& row : rows) failed += row.failed() ? 1 : 0;
  json j;
  j["n_bar_crit"] = crit ? json(*crit) : json(nullptr);
  j["jump_width_0.1_to_0.9"] = width ? json(*width) : json(nullptr);
  auto bursts = json::array();
  for (auto i : mean_level_bursts(rows, crit.value_or(std::numeric_limits<double>::infinity())))
    bursts.push_back(rows[i].n_bar);
  j["mean_level_bursts_below_threshold"] = bursts;
  j["failed_points"] = failed;
  return j;
}

int cmd_sweep(const Options& o, const std::string& command = "sweep") {
  Run r = prepare(o);
  resolve_circuit(r);
  SweepConfig sc;
  sc.circuit = r.circuit;
  sc.omega_p_ghz = r.cfg.omega_p_ghz;
  sc.n_bar_grid = r.cfg.n_bar_grid;
  sc.bath = r.cfg.bath;
  sc.floquet = r.cfg.floquet;
  sc.workers = o.workers;
  const auto rows = run_escape_sweep(sc, [](const SweepRow& row) {
    std::cerr << "n_bar " << format_number(row.n_bar) << "  p_unconfined "
              << format_number(row.p_unconfined) << "  " << row.flag
              << (row.message.empty() ? "" : "  " + row.message) << "\n";
  });
  std::ostringstream csv, diag;
  write_sweep_csv(csv, rows, sc.circuit.n_transmon);
  write_sweep_diagnostics_csv(diag, rows);
  write_text(r.out_dir / "sweep.csv", csv.str());
  write_text(r.out_dir / "sweep_diagnostics.csv", diag.str());
  json results = threshold_json(rows);
  results["table"] = "sweep.csv";
  results["diagnostics"] = "sweep_diagnostics.csv";
  auto failures = json::array();
  for (const auto& row : rows)
    if (row.failed()) failures.push_back({{"n_bar", row.n_bar}, {"message", row.message}});
  results["failures"] = failures;
  if (command == "threshold") write_text(r.out_dir / "threshold.json", threshold_json(rows).dump(2) + "\n");
  write_manifest(r, command, nullptr, results);
  std::cout << threshold_json(rows).dump(2) << "\n";
  return 0;
}

// Reads n_bar, p_unconfined, mean_level and flag back from a sweep CSV.
std::vector<SweepRow> read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("threshold: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("threshold: " + path + " is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) header.push_back(c);
  }
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("threshold: " + path + " lacks column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto cn = column("n_bar"), cp = column("p_unconfined"), cm = column("mean_level"),
             cf = column("flag");
  std::vector<SweepRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != header.size())
      throw ConfigError("threshold: " + path + " line " + std::to_string(line_no) + ": wrong column count");
    SweepRow row;
    try {
      row.n_bar = std::stod(cells[cn]);
      row.p_unconfined = std::stod(cells[cp]);
      row.mean_level = std::stod(cells[cm]);
    } catch (const std::exception&) {
      throw ConfigError("threshold: " + path + " line " + std::to_string(line_no) + ": bad number");
    }
    row.flag = cells[cf];
    rows.push_back(row);
  }
  if (rows.empty()) throw ConfigError("threshold: " + path + " has no rows");
  return rows;
}

int cmd_threshold(const Options& o) {
  if (o.table.empty()) return cmd_sweep(o, "threshold");
  Run r = prepare(o);
  const auto rows = read_sweep_csv(o.table);
  json results = threshold_json(rows);
  results["table"] = o.table;
  write_text(r.out_dir / "threshold.json", results.dump(2) + "\n");
  write_manifest(r, "threshold", nullptr, results);
  std::cout << results.dump(2) << "\n";
  return 0;
}

int cmd_calibrate(const Options& o) {
  Run r = prepare(o);
  if (r.cfg.calibration.csv.empty()) throw ConfigError("calibrate: calibration.csv is not set");
  resolve_circuit(r);
  const DispersiveParams d = resolve_dispersive(r);
  fs::path csv_path = r.cfg.calibration.csv;
  if (csv_path.is_relative() && !o.config.empty())
    csv_path = fs::path(o.config).parent_path() / csv_path;
  const auto points = read_calibration_csv(csv_path.string());
  std::map<double, std::vector<CalibrationPoint>> groups;
  for (const auto& p : points) groups[p.omega_p].push_back(p);
  std::ostringstream out;
  out << "omega_p_GHz,C_photons_per_mW,re_delta0_MHz,im_delta0_MHz,rms_residual_MHz,points\n";
  json fits = json::array();
  for (const auto& [wp, group] : groups) {
    const CalibrationFit f = fit_calibration_constant(group, d, r.cfg.calibration.fit_delta0,
                                                      r.cfg.calibration.delta0_ghz);
    out << format_number(wp) << ',' << format_number(f.c) << ','
        << format_number(f.delta_0.real() * 1e3) << ',' << format_number(f.delta_0.imag() * 1e3)
        << ',' << format_number(f.residual * 1e3) << ',' << f.points << '\n';
    fits.push_back({{"omega_p_GHz", wp}, {"C_photons_per_mW", f.c}});
  }
  write_text(r.out_dir / "calibration.csv", out.str());
  write_manifest(r, "calibrate", &d, {{"table", "calibration.csv"}, {"fits", fits}});
  std::cout << out.str();
  return 0;
}

int cmd_stark_line(const Options& o) {
  Run r = prepare(o);
  resolve_circuit(r);
  const DispersiveParams d = resolve_dispersive(r);
  const auto rows = stark_line_table(d, r.cfg.stark.n_r_grid);
  std::ostringstream out;
  write_stark_csv(out, rows);
  write_text(r.out_dir / "stark_line.csv", out.str());
  write_manifest(r, "stark-line", &d,
                 {{"table", "stark_line.csv"}, {"slope_GHz_per_photon", -2.0 * d.alpha_r}});
  std::cout << out.str();
  return 0;
}

int cmd_spectrum(const Options& o) {
  Run r = prepare(o);
  resolve_circuit(r);
  const LabeledSpectrum s = dressed_spectrum(r.circuit);
  const DressedParameters d = dressed_parameters_from(s);
  std::ostringstream dressed;
  dressed << "index,energy_GHz,n_q,n_r,overlap_quality\n";
  const std::size_t rows = std::min<std::size_t>(s.energies_ghz.size(),
                                                 static_cast<std::size_t>(r.cfg.spectrum.levels) *
                                                     static_cast<std::size_t>(r.circuit.n_fock));
  for (std::size_t i = 0; i < rows; ++i) {
    dressed << i << ',' << format_number(s.energies_ghz[i] - s.energies_ghz[0]) << ',';
    if (s.labels[i]) dressed << s.labels[i]->n_q << ',' << s.labels[i]->n_r;
    else dressed << ",";
    dressed << ',' << format_number(s.overlap_quality[i]) << '\n';
  }
  write_text(r.out_dir / "dressed_spectrum.csv", dressed.str());

  const int kmax = std::min(r.cfg.spectrum.transitions, r.circuit.n_transmon - 1);
  const auto tf = transition_frequencies(r.circuit, kmax);
  std::ostringstream trans;
  trans << "k,omega_0k_GHz,drive_GHz,charge_dispersion_GHz\n";
  for (int k = 1; k <= kmax; ++k)
    trans << k << ',' << format_number(tf.omega_0k[static_cast<std::size_t>(k - 1)]) << ','
          << format_number(tf.drive[static_cast<std::size_t>(k - 1)]) << ','
          << format_number(charge_dispersion(r.circuit, k)) << '\n';
  write_text(r.out_dir / "transitions.csv", trans.str());

  const DispersiveParams dp = DispersiveParams::from(d, r.cfg.kappa_r);
  json results = {{"dressed_spectrum", "dressed_spectrum.csv"},
                  {"transitions", "transitions.csv"},
                  {"confined_level_count", confined_level_count(r.circuit)},
                  {"flagged_states", s.flagged.size()}};
  write_manifest(r, "spectrum", &dp, results);
  std::cout << "omega_q_bar " << format_number(d.omega_q_bar) << " GHz\n"
            << "omega_r_bar " << format_number(d.omega_r_bar) << " GHz\n"
            << "alpha_q " << format_number(d.alpha_q) << " GHz\n"
            << "alpha_r " << format_number(d.alpha_r) << " GHz\n"
            << "chi_qr " << format_number(d.chi_qr) << " GHz\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pumped transmon-resonator simulations"};
  app.set_version_flag("--version", std::string(TESCAPE_VERSION));
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "YAML run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides output.dir)");
    sub->add_option("--workers", o.workers, "parallel sweep workers")->check(CLI::PositiveNumber);
    sub->add_option("--override", o.overrides, "config override key=value (repeatable)");
  };
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Sub subs[] = {
      {"fit-params", "fit circuit parameters to measured dressed frequencies", cmd_fit_params},
      {"sweep", "Floquet steady-state escape sweep over the pump photon number",
       [](const Options& o) { return cmd_sweep(o); }},
      {"threshold", "escape threshold from a sweep table (or a fresh sweep)", cmd_threshold},
      {"calibrate", "fit photons-per-mW constants from Ramsey calibration data", cmd_calibrate},
      {"stark-line", "AC Stark shifted resonator frequency table", cmd_stark_line},
      {"spectrum", "dressed spectrum, transitions and charge dispersion", cmd_spectrum},
  };
  int (*selected)(const Options&) = nullptr;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    common(sub);
    if (std::string(s.name) == "threshold")
      sub->add_option("--table", o.table, "existing sweep CSV")->check(CLI::ExistingFile);
    sub->callback([&selected, fn = s.fn] { selected = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  try {
    return selected(o);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const YAML::Exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}
