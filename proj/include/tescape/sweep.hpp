#pragma once

// Drive sweeps of the Floquet steady state, threshold detection and table
// output.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "tescape/dispersive.hpp"
#include "tescape/floquet.hpp"
#include "tescape/spectrum.hpp"

namespace tescape {

struct SweepConfig {
  CircuitParams circuit;
  double omega_p_ghz = 8.1;
  std::vector<double> n_bar_grid;
  BathSpec bath; // omega_ref <= 0 resolves to the bare resonator frequency
  FloquetSettings floquet;
  int workers = 1;

  void validate() const {
    circuit.validate();
    floquet.validate();
    if (n_bar_grid.empty()) throw std::invalid_argument("SweepConfig: n_bar grid is empty");
    for (std::size_t i = 0; i < n_bar_grid.size(); ++i) {
      if (!(n_bar_grid[i] >= 0.0)) throw std::invalid_argument("SweepConfig: n_bar must be >= 0");
      if (i > 0 && !(n_bar_grid[i] > n_bar_grid[i - 1]))
        throw std::invalid_argument("SweepConfig: n_bar grid must be strictly increasing");
    }
    if (!(omega_p_ghz > 0.0)) throw std::invalid_argument("SweepConfig: omega_p must be positive");
    detail::require_off_resonance(omega_p_ghz, circuit.omega_a_ghz, "SweepConfig");
    if (workers < 1) throw std::invalid_argument("SweepConfig: workers must be >= 1");
    resolved_bath().validate();
  }

  [[nodiscard]] BathSpec resolved_bath() const {
    BathSpec b = bath;
    if (!(b.omega_ref > 0.0)) b.omega_ref = angular_from_ghz(circuit.omega_a_ghz);
    return b;
  }
};

/// Evenly spaced grid start, start + step, ... up to stop inclusive.
inline std::vector<double> range_grid(double start, double stop, double step) {
  if (!(step > 0.0) || stop < start) throw std::invalid_argument("range_grid: bad range");
  std::vector<double> g;
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long i = 0; i <= n; ++i) g.push_back(start + static_cast<double>(i) * step);
  return g;
}

struct SweepRow {
  double n_bar = 0.0;
  double a_p_ghz = 0.0;
  double quasienergy_gap_min = std::numeric_limits<double>::quiet_NaN(); // GHz
  RVector transmon_populations;
  double mean_level = std::numeric_limits<double>::quiet_NaN();
  double p_unconfined = std::numeric_limits<double>::quiet_NaN();
  double cavity_mean_photons_displaced = std::numeric_limits<double>::quiet_NaN();
  double unitarity_defect = std::numeric_limits<double>::quiet_NaN();
  int closed_classes = 0;
  std::string flag = "ok"; // ok | multiple_steady_states | failed
  std::string message;

  [[nodiscard]] bool failed() const { return flag == "failed"; }
};

inline SweepRow solve_sweep_point(const std::shared_ptr<const FrameOperators>& ops, double n_bar,
                                  const SweepConfig& cfg, int confined_count) {
  SweepRow row;
  row.n_bar = n_bar;
  const PumpDrive drive = drive_from_photons(n_bar, cfg.omega_p_ghz, cfg.circuit.omega_a_ghz);
  row.a_p_ghz = drive.a_p_ghz;
  try {
    const DisplacedFrameModel model(ops, drive);
    const FloquetSolution s =
        solve_floquet_steady_state(model, cfg.floquet, cfg.resolved_bath(), confined_count);
    row.quasienergy_gap_min = ghz_from_angular(s.min_quasienergy_gap);
    row.transmon_populations = s.state.rho_transmon_diag;
    row.mean_level = s.state.mean_level;
    row.p_unconfined = s.state.p_unconfined;
    row.cavity_mean_photons_displaced = s.state.cavity_photons;
    row.unitarity_defect = s.unitarity_defect;
    row.closed_classes = s.closed_classes;
    if (s.closed_classes > 1) row.flag = "multiple_steady_states";
  } catch (const std::exception& e) {
    row.flag = "failed";
    row.message = e.what();
    row.transmon_populations = RVector::Constant(cfg.circuit.n_transmon,
                                                 std::numeric_limits<double>::quiet_NaN());
  }
  return row;
}

/// One independent Floquet solve per grid point, merged in grid order.
/// Output does not depend on the worker count.
inline std::vector<SweepRow> run_escape_sweep(const SweepConfig& cfg,
                                              const std::function<void(const SweepRow&)>& progress = {}) {
  cfg.validate();
  const auto ops = build_frame_operators(cfg.circuit);
  const int confined = confined_level_count(cfg.circuit);
  const std::size_t n = cfg.n_bar_grid.size();
  std::vector<SweepRow> rows(n);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      rows[i] = solve_sweep_point(ops, cfg.n_bar_grid[i], cfg, confined);
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(rows[i]);
      }
    }
  };
  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), n));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return rows;
}

namespace detail {
// n where the segment (n0, p0)-(n1, p1) reaches level.
inline double interpolate_level(double n0, double p0, double n1, double p1, double level) {
  if (p1 == p0) return n1;
  return n0 + (level - p0) * (n1 - n0) / (p1 - p0);
}
} // namespace detail

/// First grid point with p_unconfined > 0.5, interpolated against the
/// previous valid point. Failed rows are skipped.
inline std::optional<double> detect_threshold(const std::vector<SweepRow>& rows, double level = 0.5) {
  if (rows.empty()) throw std::invalid_argument("detect_threshold: empty table");
  const SweepRow* prev = nullptr;
  for (const auto& r : rows) {
    if (r.failed() || std::isnan(r.p_unconfined)) continue;
    if (r.p_unconfined > level) {
      if (prev == nullptr) return r.n_bar;
      return detail::interpolate_level(prev->n_bar, prev->p_unconfined, r.n_bar, r.p_unconfined, level);
    }
    prev = &r;
  }
  return std::nullopt;
}

/// Width in n_bar over which p_unconfined climbs from `lo` to `hi` at the
/// first crossing of `hi`: the interpolated crossing of `hi` minus the
/// last interpolated upward crossing of `lo` before it.
inline std::optional<double> jump_width(const std::vector<SweepRow>& rows, double lo = 0.1,
                                        double hi = 0.9) {
  std::vector<const SweepRow*> v;
  for (const auto& r : rows)
    if (!r.failed() && !std::isnan(r.p_unconfined)) v.push_back(&r);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i]->p_unconfined <= hi) continue;
    const double n_hi =
        i == 0 ? v[i]->n_bar
               : detail::interpolate_level(v[i - 1]->n_bar, v[i - 1]->p_unconfined, v[i]->n_bar,
                                           v[i]->p_unconfined, hi);
    for (std::size_t j = i; j-- > 0;) {
      if (v[j]->p_unconfined < lo) {
        const double n_lo = detail::interpolate_level(v[j]->n_bar, v[j]->p_unconfined,
                                                      v[j + 1]->n_bar, v[j + 1]->p_unconfined, lo);
        return n_hi - n_lo;
      }
    }
    return std::nullopt;
  }
  return std::nullopt;
}

/// Indices of strict local maxima of mean_level below `n_limit`.
inline std::vector<std::size_t> mean_level_bursts(const std::vector<SweepRow>& rows, double n_limit) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    if (rows[i].n_bar >= n_limit) break;
    const double a = rows[i - 1].mean_level, b = rows[i].mean_level, c = rows[i + 1].mean_level;
    if (b > a && b > c) out.push_back(i);
  }
  return out;
}

struct StarkLineRow {
  double n_r_bar;
  double omega_r; // GHz
};

inline std::vector<StarkLineRow> stark_line_table(const DispersiveParams& p,
                                                  const std::vector<double>& n_grid) {
  p.validate();
  std::vector<StarkLineRow> out;
  out.reserve(n_grid.size());
  for (double n : n_grid) out.push_back({n, stark_shifted_frequency(n, p)});
  return out;
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, int n_transmon) {
  out << "n_bar,A_p_GHz,p_unconfined,mean_level";
  for (int k = 0; k < n_transmon; ++k) out << ",pop_" << k;
  out << ",flag\n";
  for (const auto& r : rows) {
    out << format_number(r.n_bar) << ',' << format_number(r.a_p_ghz) << ','
        << format_number(r.p_unconfined) << ',' << format_number(r.mean_level);
    for (int k = 0; k < n_transmon; ++k)
      out << ',' << format_number(k < r.transmon_populations.size() ? r.transmon_populations(k)
                                                                    : std::numeric_limits<double>::quiet_NaN());
    out << ',' << r.flag << '\n';
  }
}

inline void write_sweep_diagnostics_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "n_bar,quasienergy_gap_min_GHz,cavity_mean_photons_displaced,unitarity_defect,closed_classes\n";
  for (const auto& r : rows)
    out << format_number(r.n_bar) << ',' << format_number(r.quasienergy_gap_min) << ','
        << format_number(r.cavity_mean_photons_displaced) << ',' << format_number(r.unitarity_defect)
        << ',' << r.closed_classes << '\n';
}

inline void write_stark_csv(std::ostream& out, const std::vector<StarkLineRow>& rows) {
  out << "n_r_bar,omega_r_GHz\n";
  for (const auto& r : rows) out << format_number(r.n_r_bar) << ',' << format_number(r.omega_r) << '\n';
}

} // namespace tescape
