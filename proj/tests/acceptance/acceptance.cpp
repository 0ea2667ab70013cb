// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails. Sweep tables are written next to the binary.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "support/toy_model.hpp"
#include "tescape/dispersive.hpp"
#include "tescape/spectrum.hpp"
#include "tescape/sweep.hpp"

using namespace tescape;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch {
public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

bool within(double x, double ref, double rel) { return std::abs(x - ref) <= rel * std::abs(ref); }

const FitTargets kTargets{5.353, 7.761, 0.173, 0.005};

void parameter_fit(CircuitParams& fitted) {
  const Stopwatch sw;
  const FitResult r = fit_circuit_params(kTargets);
  const double t = sw.seconds();
  fitted = r.params;
  const auto& p = r.params;
  const bool ok = within(p.ec_ghz, 0.166, 0.02) && within(p.ej_ghz, 23.3, 0.02) &&
                  within(p.g_ghz, 0.179, 0.03) && within(p.omega_a_ghz, 7.739, 0.0005) && t < 60.0;
  report("parameter_fit", ok,
         fmt("E_C=%.4f GHz E_J=%.3f GHz g=%.4f GHz omega_a=%.4f GHz in %.1f s", p.ec_ghz, p.ej_ghz,
             p.g_ghz, p.omega_a_ghz, t));
}

void predicted_alpha_r(const CircuitParams& fitted) {
  const double a = dressed_parameters(fitted).alpha_r;
  report("predicted_alpha_r", within(a, 43e-6, 0.25), fmt("alpha_r=%.2f kHz (43 kHz +-25%%)", a * 1e6));
}

std::vector<SweepRow> sweep(int n_transmon, int n_fock, double step, double& seconds, const char* csv) {
  SweepConfig cfg;
  cfg.circuit.n_transmon = n_transmon;
  cfg.circuit.n_fock = n_fock;
  cfg.omega_p_ghz = 8.1;
  cfg.n_bar_grid = range_grid(0.0, 300.0, step);
  cfg.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const Stopwatch sw;
  auto rows = run_escape_sweep(cfg, [](const SweepRow& r) {
    std::fprintf(stderr, "  n_bar=%g p_unconfined=%g mean_level=%g %s\n", r.n_bar, r.p_unconfined,
                 r.mean_level, r.flag.c_str());
  });
  seconds = sw.seconds();
  std::ofstream out(csv);
  write_sweep_csv(out, rows, n_transmon);
  return rows;
}

std::string opt(const std::optional<double>& v) { return v ? fmt("%.1f", *v) : std::string("none"); }

void escape_threshold() {
  double t_smoke = 0.0;
  const auto smoke = sweep(30, 8, 10.0, t_smoke, "acceptance_sweep_30x8.csv");
  const auto crit_smoke = detect_threshold(smoke);
  report("escape_threshold_smoke_30x8", crit_smoke && *crit_smoke >= 80 && *crit_smoke <= 300 && t_smoke < 600,
         fmt("n_crit=%s in [80, 300], %.0f s (< 600 s)", opt(crit_smoke).c_str(), t_smoke));

  double t_full = 0.0;
  const auto full = sweep(45, 10, 2.0, t_full, "acceptance_sweep_45x10.csv");
  const auto crit = detect_threshold(full);
  int failed = 0;
  for (const auto& r : full) failed += r.failed() ? 1 : 0;
  report("escape_threshold_45x10", crit && *crit >= 100 && *crit <= 250 && t_full < 7200,
         fmt("n_crit=%s in [100, 250], %.0f s (< 7200 s), %d failed points", opt(crit).c_str(), t_full, failed));
  const auto width = jump_width(full);
  double p_max = 0.0;
  for (const auto& r : full)
    if (!r.failed()) p_max = std::max(p_max, r.p_unconfined);
  report("escape_jump_sharpness", width && *width <= 20.0,
         fmt("0.1 -> 0.9 width=%s (<= 20), max p_unconfined=%.3f", opt(width).c_str(), p_max));

  const auto bursts = crit ? mean_level_bursts(full, *crit) : std::vector<std::size_t>{};
  std::string where;
  for (auto i : bursts) where += fmt(" %g", full[i].n_bar);
  report("subthreshold_bursts", !bursts.empty(),
         fmt("%zu local maxima of mean_level below n_crit:%s", bursts.size(), where.c_str()));
}

void photon_number_consistency() {
  const DispersiveParams p{5.353, 7.761, 0.173, 43e-6, 0.005, kDefaultKappa};
  const double wa = 7.739, wp = 8.1;
  double worst = 0.0;
  for (int i = 0; i <= 30; ++i) {
    const double n = std::pow(10.0, 3.0 * i / 30.0);
    const double a_p = drive_from_photons(n, wp, wa).a_p_ghz;
    const double n_r = self_consistent_photons(wp, a_p, p, wa);
    worst = std::max(worst, std::abs(pump_photon_number(a_p, wp, wa) - n_r) / n_r);
  }
  report("photon_number_consistency", worst < 0.15,
         fmt("max |n_bar - n_r| / n_r = %.3f over 1..1000 photons (< 0.15)", worst));
}

void stark_line() {
  const DispersiveParams p{5.353, 7.761, 0.173, 43e-6, 0.005, kDefaultKappa};
  const auto rows = stark_line_table(p, range_grid(0.0, 200.0, 10.0));
  double worst = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double slope = (rows[i].omega_r - rows[0].omega_r) / rows[i].n_r_bar;
    worst = std::max(worst, std::abs(slope * 1e6 + 86.0));
  }
  report("stark_line_slope", worst < 1e-9, fmt("max |slope + 86 kHz/photon| = %.2e kHz", worst));
}

void property_suite() {
  const Stopwatch suite;
  const CircuitParams reference;
  const auto ops = build_frame_operators(reference);
  const int confined = confined_level_count(reference);

  {
    const DisplacedFrameModel m(ops, drive_from_photons(170.0, 8.1, reference.omega_a_ghz));
    FloquetSettings fs;
    const auto prop = propagate_period(m, fs.steps, fs.samples);
    const auto fine = propagate_period(m, 2 * fs.steps, fs.samples);
    report("property_unitarity", prop.unitarity_defect < 1e-8,
           fmt("||U^dag U - 1|| = %.2e at n_bar=170 (< 1e-8)", prop.unitarity_defect));
    const RVector e1 = floquet_decompose(prop).quasienergies;
    const RVector e2 = floquet_decompose(fine).quasienergies;
    const double drift = (e1 - e2).cwiseAbs().maxCoeff() / m.omega_p();
    report("property_step_convergence", drift < 1e-7,
           fmt("doubling steps moves quasienergies by %.2e omega_p (< 1e-7)", drift));
  }

  {
    const DisplacedFrameModel m(ops, drive_from_photons(0.0, 8.1, reference.omega_a_ghz));
    FloquetSettings fs;
    const auto basis = floquet_decompose(propagate_period(m, fs.steps, fs.samples));
    const RVector e = Eigen::SelfAdjointEigenSolver<CMatrix>(ops->h_static, Eigen::EigenvaluesOnly).eigenvalues();
    std::vector<double> folded;
    for (int i = 0; i < e.size(); ++i) folded.push_back(fold_quasienergy(e(i), m.omega_p()));
    std::sort(folded.begin(), folded.end());
    double dq = 0.0;
    for (int i = 0; i < e.size(); ++i)
      dq = std::max(dq, std::abs(ghz_from_angular(basis.quasienergies(i) - folded[static_cast<std::size_t>(i)])));
    report("property_undriven_quasienergies", dq < 1e-8, fmt("max deviation %.2e GHz (< 1e-8)", dq));

    const auto xk = x_fourier_components(ops->x_op, basis, fs.k_max, fs.alias_tolerance);
    const auto rates = floquet_rates(xk, basis, BathSpec{});
    const int g = ground_like_mode(basis);
    const auto sp = steady_populations(rates.generator, g);
    const auto st = reduce_transmon(sp.p, basis, reference.n_transmon, reference.n_fock, confined);
    const CVector ground = Eigen::SelfAdjointEigenSolver<CMatrix>(ops->h_static).eigenvectors().col(0);
    double dev = std::abs(1.0 - sp.p(g));
    for (int k = 0; k < reference.n_transmon; ++k)
      dev = std::max(dev, std::abs(st.rho_transmon_diag(k) -
                                   ground.segment(k * reference.n_fock, reference.n_fock).squaredNorm()));
    report("property_undriven_ground", dev < 1e-6,
           fmt("max deviation from the dressed ground state %.2e (< 1e-6)", dev));
  }

  {
    double worst = 0.0;
    for (double n_th : {0.0, 0.1, 1.0, 7.5}) {
      CMatrix h = CMatrix::Zero(2, 2), x = CMatrix::Zero(2, 2);
      h(1, 1) = 1.0;
      x(0, 1) = x(1, 0) = 1.0;
      const double period = kTwoPi / 0.37;
      const auto basis = floquet_decompose(propagate_period([&](double) { return h; }, period, 256, 16));
      BathSpec bath;
      bath.kappa = 1e-3;
      bath.n_th = n_th;
      const auto xk = x_fourier_components(x, basis, 6);
      const auto sp = steady_populations(floquet_rates(xk, basis, bath).generator, ground_like_mode(basis));
      const int e = 1 - ground_like_mode(basis);
      worst = std::max(worst, std::abs(sp.p(e) / sp.p(1 - e) - n_th / (n_th + 1.0)));
    }
    report("property_detailed_balance", worst < 1e-6, fmt("max |p_e/p_g - n_th/(n_th+1)| = %.2e", worst));
  }

  {
    const auto toy = oracle::make_toy_model();
    const RVector p_fm = oracle::floquet_markov_steady_state(toy).diagonal().real();
    const RVector p_me = oracle::master_equation_steady_state(toy).diagonal().real();
    double worst = 0.0;
    for (int i = 0; i < p_me.size(); ++i)
      worst = std::max(worst, std::abs(p_fm(i) - p_me(i)) / std::max(p_me(i), 0.05));
    report("property_toy_master_equation", worst < 0.02,
           fmt("max relative population deviation %.4f (< 0.02)", worst));
  }

  {
    const DispersiveParams p{5.353, 7.761, 0.173, 43e-6, 0.005, kDefaultKappa};
    double worst = 0.0;
    for (double wp : {7.6, 7.7, 7.761, 7.9, 8.1}) {
      std::vector<CalibrationPoint> pts;
      for (int i = 0; i <= 8; ++i) {
        const double pw = 0.05 * i;
        pts.push_back({wp, pw, pw > 0 ? measurement_backaction(wp, pw, 1234.5, p) : Complex{}});
      }
      worst = std::max(worst, std::abs(fit_calibration_constant(pts, p).c - 1234.5) / 1234.5);
    }
    report("property_calibration_roundtrip", worst < 1e-10, fmt("max relative C error %.2e", worst));
  }

  {
    std::mt19937_64 rng(20150101);
    std::uniform_real_distribution<double> ej(15.0, 35.0), ec(0.12, 0.25), g(0.08, 0.25), detune(1.5, 3.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      CircuitParams p;
      p.ej_ghz = ej(rng);
      p.ec_ghz = ec(rng);
      p.g_ghz = g(rng);
      p.omega_a_ghz = std::sqrt(8.0 * p.ej_ghz * p.ec_ghz) - p.ec_ghz + detune(rng);
      const auto d = dressed_parameters(p);
      const auto f = fit_circuit_params({d.omega_q_bar, d.omega_r_bar, d.alpha_q, d.chi_qr}).params;
      for (auto [a, b] : {std::pair{f.ej_ghz, p.ej_ghz}, {f.ec_ghz, p.ec_ghz}, {f.g_ghz, p.g_ghz},
                          {f.omega_a_ghz, p.omega_a_ghz}})
        worst = std::max(worst, std::abs(a - b) / b);
    }
    report("property_fit_roundtrip", worst < 0.005, fmt("max relative parameter error %.2e over 20 sets", worst));
  }

  const double t = suite.seconds();
  report("property_suite_runtime", t < 900, fmt("%.0f s (< 900 s)", t));
}

void charge_dispersion_ordering() {
  const CircuitParams p;
  std::vector<double> d;
  for (int k = 1; k <= 7; ++k) d.push_back(charge_dispersion(p, k));
  bool monotone = true;
  for (std::size_t i = 1; i < d.size(); ++i) monotone = monotone && d[i] >= d[i - 1];
  const double ratio = d[5] / d[0];
  report("charge_dispersion_ordering", monotone && ratio > 100,
         fmt("monotone=%s, dispersion(6)/dispersion(1)=%.3g (> 100)", monotone ? "yes" : "no", ratio));
}

} // namespace

int main() {
  CircuitParams fitted;
  parameter_fit(fitted);
  predicted_alpha_r(fitted);
  photon_number_consistency();
  stark_line();
  charge_dispersion_ordering();
  property_suite();
  escape_threshold();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
