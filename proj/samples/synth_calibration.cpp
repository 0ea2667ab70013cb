// Writes noisy synthetic Ramsey calibration data (CSV on stdout) for a set of
// pump frequencies, using a known photons-per-mW constant per frequency.

#include <iostream>
#include <random>

#include "tescape/dispersive.hpp"
#include "tescape/sweep.hpp"

int main() {
  using namespace tescape;
  const DispersiveParams p{5.353, 7.761, 0.173, 43e-6, 0.005, kDefaultKappa};
  std::mt19937_64 rng(20150101);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double freqs[] = {7.6, 7.7, 7.75, 7.761, 7.8, 8.1};
  const double c_true[] = {900.0, 1000.0, 1100.0, 1000.0, 950.0, 800.0};
  std::cout << "omega_p_GHz,P_p_mW,re_delta_tot_MHz,im_delta_tot_MHz\n";
  for (int f = 0; f < 6; ++f) {
    const Complex delta0(0.2e-3, 0.0);
    const double p_max = 40.0 / c_true[f] * (1.0 + 200.0 * std::abs(freqs[f] - p.omega_r_bar));
    const double scale = std::abs(measurement_backaction(freqs[f], p_max, c_true[f], p));
    for (int i = 0; i <= 10; ++i) {
      const double pw = p_max * i / 10.0;
      Complex d = delta0 + (pw > 0 ? measurement_backaction(freqs[f], pw, c_true[f], p) : Complex{});
      d += 0.01 * scale * Complex(noise(rng), noise(rng));
      std::cout << format_number(freqs[f]) << ',' << format_number(pw) << ','
                << format_number(d.real() * 1e3) << ',' << format_number(d.imag() * 1e3) << '\n';
    }
  }
}
