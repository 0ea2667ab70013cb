#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace tescape {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Public quantities are ordinary frequencies in GHz (energies as E/h).
// Everything inside the solvers runs with hbar = 1, angular frequencies in
// rad/s and times in seconds. These two functions are the only crossing.
constexpr double angular_from_ghz(double f_ghz) { return kTwoPi * 1e9 * f_ghz; }
constexpr double ghz_from_angular(double w) { return w / (kTwoPi * 1e9); }

// Decay rate of the readout resonator, 1/(55 ns), as an angular rate.
inline constexpr double kDefaultKappa = 1.0 / 55e-9;

/// Raised when a solver cannot produce a trustworthy result (loss of
/// unitarity, non-convergence, aliasing). Precondition violations use
/// std::invalid_argument instead.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace tescape
