#pragma once

// Low-energy two-mode model
//   H/h = wq a_q^dag a_q - alpha_q/2 a_q^dag^2 a_q^2 + wr a_r^dag a_r
//         - alpha_r/2 a_r^dag^2 a_r^2 - chi a_q^dag a_q a_r^dag a_r
// and the power-to-photon calibration built on it. Public frequencies are
// GHz; the complex-detuning algebra runs in rad/s and kappa_r is a rate in 1/s.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "tescape/spectrum.hpp"
#include "tescape/units.hpp"

namespace tescape {

struct DispersiveParams {
  double omega_q_bar = 5.353; // GHz
  double omega_r_bar = 7.761;
  double alpha_q = 0.173;
  double alpha_r = 43e-6;
  double chi_qr = 0.005;
  double kappa_r = kDefaultKappa; // 1/s

  void validate() const {
    if (!(kappa_r > 0.0)) throw std::invalid_argument("DispersiveParams: kappa_r must be positive");
    if (!(omega_q_bar > 0.0 && omega_r_bar > 0.0 && alpha_q > 0.0 && alpha_r > 0.0 && chi_qr > 0.0))
      throw std::invalid_argument("DispersiveParams: frequencies must be positive");
  }

  static DispersiveParams from(const DressedParameters& d, double kappa_r = kDefaultKappa) {
    return {d.omega_q_bar, d.omega_r_bar, d.alpha_q, d.alpha_r, d.chi_qr, kappa_r};
  }
};

/// wr(n_r) = wr_bar - 2 alpha_r n_r.
inline double stark_shifted_frequency(double n_r_bar, const DispersiveParams& p) {
  if (!(n_r_bar >= 0.0)) throw std::invalid_argument("stark_shifted_frequency: n_r must be >= 0");
  return p.omega_r_bar - 2.0 * p.alpha_r * n_r_bar;
}

/// wr(n_q) = wr_bar - n_q chi.
inline double qubit_pulled_frequency(int n_q, const DispersiveParams& p) {
  if (n_q < 0 || n_q > 6) throw std::invalid_argument("qubit_pulled_frequency: n_q must be in 0..6");
  return p.omega_r_bar - n_q * p.chi_qr;
}

struct CoherentResponse {
  Complex alpha_g;
  Complex alpha_e;
};

/// Steady coherent amplitudes for a drive of amplitude A_pr (GHz) at wp,
/// with Delta = wr_bar - wp; the excited branch sees Delta - chi.
inline CoherentResponse coherent_response(double omega_p_ghz, double a_pr_ghz,
                                          const DispersiveParams& p) {
  p.validate();
  const double delta = angular_from_ghz(p.omega_r_bar - omega_p_ghz);
  const double chi = angular_from_ghz(p.chi_qr);
  const Complex drive = -kI * (angular_from_ghz(a_pr_ghz) / 2.0);
  return {drive / (kI * delta + p.kappa_r / 2.0), drive / (kI * (delta - chi) + p.kappa_r / 2.0)};
}

/// Measurement-induced complex detuning (GHz) with A_pr^2 = kappa_r^2 C P_p
/// and Delta = wr - wp; wr defaults to wr_bar. Re is the Stark shift, -Im
/// the dephasing rate.
inline Complex measurement_backaction(double omega_p_ghz, double p_mw, double c_per_mw,
                                      const DispersiveParams& p, double omega_r_ghz = -1.0) {
  p.validate();
  if (!(c_per_mw > 0.0)) throw std::invalid_argument("measurement_backaction: C must be positive");
  if (!(p_mw >= 0.0)) throw std::invalid_argument("measurement_backaction: P_p must be >= 0");
  const double wr = omega_r_ghz > 0.0 ? omega_r_ghz : p.omega_r_bar;
  const double delta = angular_from_ghz(wr - omega_p_ghz);
  const double chi = angular_from_ghz(p.chi_qr);
  const double k = p.kappa_r;
  const Complex den = (kI * (delta - chi) + k / 2.0) * (-kI * delta + k / 2.0);
  const Complex dm = -(c_per_mw * k * k * chi * p_mw / 4.0) / den;
  return {ghz_from_angular(dm.real()), ghz_from_angular(dm.imag())};
}

/// Lorentzian photon number for a drive calibrated by C.
inline double photons_from_power(double omega_p_ghz, double p_mw, double c_per_mw,
                                 double omega_r_ghz, double kappa_r = kDefaultKappa) {
  if (!(p_mw >= 0.0)) throw std::invalid_argument("photons_from_power: P_p must be >= 0");
  if (!(kappa_r > 0.0)) throw std::invalid_argument("photons_from_power: kappa_r must be positive");
  const double d = angular_from_ghz(omega_r_ghz - omega_p_ghz);
  const double h = kappa_r * kappa_r / 4.0;
  return c_per_mw * p_mw * h / (d * d + h);
}

/// Photon number for drive amplitude A_pr (GHz) when the resonance follows
/// its own Stark shift, wr(n) = wr_bar - 2 alpha_r n clamped to [wa, wr_bar].
/// The map n -> n_r(wr(n)) decreases for wp > wr_bar, so the root of
/// n - n_r(wr(n)) is unique and bracketed by [0, n_r(wr_bar)].
inline double self_consistent_photons(double omega_p_ghz, double a_pr_ghz,
                                      const DispersiveParams& p, double omega_a_ghz) {
  p.validate();
  const double lo_f = std::min(omega_a_ghz, p.omega_r_bar);
  auto resonance = [&](double n) {
    return std::clamp(p.omega_r_bar - 2.0 * p.alpha_r * n, lo_f, p.omega_r_bar);
  };
  auto photons = [&](double wr) {
    const double d = angular_from_ghz(wr - omega_p_ghz);
    const double a = angular_from_ghz(a_pr_ghz) / 2.0;
    return a * a / (d * d + p.kappa_r * p.kappa_r / 4.0);
  };
  double lo = 0.0, hi = std::max(photons(p.omega_r_bar), photons(lo_f));
  if (hi == 0.0) return 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid - photons(resonance(mid)) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

struct CalibrationPoint {
  double omega_p = 0.0; // GHz
  double p_mw = 0.0;
  Complex delta_tot;    // GHz; real part the Ramsey detuning, -imag the dephasing rate
};

struct CalibrationFit {
  double c = 0.0; // photons per mW
  Complex delta_0;
  double residual = 0.0; // rms |delta_tot - delta_0 - delta_m|, GHz
  double omega_p = 0.0;
  int points = 0;
};

/// Least squares over complex residuals, linear in (C, delta_0). With
/// fit_delta0 unset delta_0 is pinned to `pinned_delta0`.
inline CalibrationFit fit_calibration_constant(const std::vector<CalibrationPoint>& points,
                                               const DispersiveParams& p, bool fit_delta0 = true,
                                               Complex pinned_delta0 = {0.0, 0.0}) {
  p.validate();
  if (points.size() < 2) throw std::invalid_argument("fit_calibration_constant: need >= 2 points");
  const double wp = points.front().omega_p;
  double pmin = points.front().p_mw, pmax = pmin;
  for (const auto& pt : points) {
    if (pt.omega_p != wp)
      throw std::invalid_argument("fit_calibration_constant: points must share one pump frequency");
    if (!(pt.p_mw >= 0.0)) throw std::invalid_argument("fit_calibration_constant: P_p must be >= 0");
    pmin = std::min(pmin, pt.p_mw);
    pmax = std::max(pmax, pt.p_mw);
  }
  if (pmin == pmax)
    throw std::invalid_argument("fit_calibration_constant: all powers equal, fit is rank-deficient");

  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index cols = fit_delta0 ? 3 : 1;
  RMatrix a = RMatrix::Zero(2 * n, cols);
  RVector b(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& pt = points[static_cast<std::size_t>(i)];
    const Complex unit = pt.p_mw > 0.0 ? measurement_backaction(wp, pt.p_mw, 1.0, p) : Complex{};
    const Complex target = fit_delta0 ? pt.delta_tot : pt.delta_tot - pinned_delta0;
    a(2 * i, 0) = unit.real();
    a(2 * i + 1, 0) = unit.imag();
    if (fit_delta0) {
      a(2 * i, 1) = 1.0;
      a(2 * i + 1, 2) = 1.0;
    }
    b(2 * i) = target.real();
    b(2 * i + 1) = target.imag();
  }
  Eigen::ColPivHouseholderQR<RMatrix> qr(a);
  qr.setThreshold(1e-12);
  if (qr.rank() < cols) throw std::invalid_argument("fit_calibration_constant: rank-deficient data");
  const RVector x = qr.solve(b);

  CalibrationFit out;
  out.c = x(0);
  out.delta_0 = fit_delta0 ? Complex(x(1), x(2)) : pinned_delta0;
  out.residual = std::sqrt((a * x - b).squaredNorm() / static_cast<double>(n));
  out.omega_p = wp;
  out.points = static_cast<int>(n);
  return out;
}

/// One fit per distinct pump frequency, in ascending frequency order.
inline std::vector<CalibrationFit> fit_calibration_by_frequency(
    const std::vector<CalibrationPoint>& points, const DispersiveParams& p, bool fit_delta0 = true) {
  std::map<double, std::vector<CalibrationPoint>> groups;
  for (const auto& pt : points) groups[pt.omega_p].push_back(pt);
  std::vector<CalibrationFit> out;
  for (const auto& [wp, group] : groups) out.push_back(fit_calibration_constant(group, p, fit_delta0));
  return out;
}

/// Reads columns omega_p_GHz, P_p_mW, re_delta_tot_MHz, im_delta_tot_MHz (any
/// order, header required, '#' comment lines skipped).
inline std::vector<CalibrationPoint> read_calibration_csv(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    return cells;
  };
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = split(line);
  }
  const char* names[4] = {"omega_p_GHz", "P_p_mW", "re_delta_tot_MHz", "im_delta_tot_MHz"};
  std::size_t col[4];
  for (int i = 0; i < 4; ++i) {
    const auto it = std::find(header.begin(), header.end(), names[i]);
    if (it == header.end())
      throw std::invalid_argument(std::string("calibration CSV: missing column ") + names[i]);
    col[i] = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<CalibrationPoint> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const auto cells = split(line);
    double v[4];
    for (int i = 0; i < 4; ++i) {
      try {
        if (col[i] >= cells.size()) throw std::invalid_argument("short row");
        std::size_t used = 0;
        v[i] = std::stod(cells[col[i]], &used);
        if (used != cells[col[i]].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw std::invalid_argument("calibration CSV line " + std::to_string(line_no) +
                                    ": bad value in column " + names[i]);
      }
    }
    out.push_back({v[0], v[1], Complex(v[2] * 1e-3, v[3] * 1e-3)});
  }
  return out;
}

inline std::vector<CalibrationPoint> read_calibration_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open calibration CSV " + path);
  return read_calibration_csv(in);
}

} // namespace tescape
