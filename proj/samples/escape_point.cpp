// Floquet steady state at a single pump strength; prints the reduced
// transmon populations.
//   escape_point [n_bar] [omega_p_GHz] [n_transmon] [n_fock]

#include <cstdlib>
#include <iostream>

#include "tescape/sweep.hpp"

int main(int argc, char** argv) {
  using namespace tescape;
  CircuitParams p;
  const double n_bar = argc > 1 ? std::atof(argv[1]) : 100.0;
  const double omega_p = argc > 2 ? std::atof(argv[2]) : 8.1;
  if (argc > 3) p.n_transmon = std::atoi(argv[3]);
  if (argc > 4) p.n_fock = std::atoi(argv[4]);
  const auto ops = build_frame_operators(p);
  const DisplacedFrameModel model(ops, drive_from_photons(n_bar, omega_p, p.omega_a_ghz));
  BathSpec bath;
  const auto s = solve_floquet_steady_state(model, FloquetSettings{}, bath, confined_level_count(p));
  std::cout << "p_unconfined " << s.state.p_unconfined << "\nmean_level " << s.state.mean_level
            << "\n";
  for (Eigen::Index k = 0; k < s.state.rho_transmon_diag.size(); ++k)
    std::cout << k << ' ' << s.state.rho_transmon_diag(k) << '\n';
}
