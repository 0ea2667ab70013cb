#pragma once

// Displaced frame for a strongly pumped resonator.
//
// With E_J = 0 the pumped circuit is linear and the classical response is
//   a0(t) = sqrt(nbar) e^{-i wp t},  N0 = 0,
//   theta0(t) = 2 (g/wp) sqrt(nbar) sin(wp t),
//   nbar = (A_p/2)^2 / (wp - wa)^2,
// with an overall sign flip when wp < wa. Shifting by that response leaves
//   H(t) = 4E_C N^2 - E_J cos(theta + theta0(t)) + wa a^dag a + g N (a + a^dag),
// a T_p-periodic Hamiltonian whose resonator stays close to vacuum. It is
// written in the basis |T_k> (x) |F_l> of bare transmon eigenstates and
// resonator Fock states.

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "tescape/operators.hpp"

namespace tescape {

struct PumpDrive {
  double a_p_ghz = 0.0;     // pump amplitude A_p / 2pi
  double omega_p_ghz = 0.0; // pump frequency
  double omega_a_ghz = 0.0; // bare resonator frequency the drive refers to
  double n_bar = 0.0;
  int sign = 1; // sign(wp - wa)
};

namespace detail {
inline void require_off_resonance(double omega_p_ghz, double omega_a_ghz, const char* where) {
  if (omega_p_ghz == omega_a_ghz)
    throw std::invalid_argument(std::string(where) +
                                ": pump resonant with the bare resonator; the displaced frame "
                                "diverges here, use the dispersive photon number n_r instead");
}
} // namespace detail

/// nbar = (A_p/2)^2 / (wp - wa)^2.
inline double pump_photon_number(double a_p_ghz, double omega_p_ghz, double omega_a_ghz) {
  detail::require_off_resonance(omega_p_ghz, omega_a_ghz, "pump_photon_number");
  if (a_p_ghz < 0.0) throw std::invalid_argument("pump_photon_number: A_p must be >= 0");
  const double detuning = omega_p_ghz - omega_a_ghz;
  return (0.25 * a_p_ghz * a_p_ghz) / (detuning * detuning);
}

inline PumpDrive drive_from_photons(double n_bar, double omega_p_ghz, double omega_a_ghz) {
  detail::require_off_resonance(omega_p_ghz, omega_a_ghz, "drive_from_photons");
  if (!(n_bar >= 0.0)) throw std::invalid_argument("drive_from_photons: nbar must be >= 0");
  PumpDrive d;
  d.omega_p_ghz = omega_p_ghz;
  d.omega_a_ghz = omega_a_ghz;
  d.n_bar = n_bar;
  d.a_p_ghz = 2.0 * std::sqrt(n_bar) * std::abs(omega_p_ghz - omega_a_ghz);
  d.sign = omega_p_ghz > omega_a_ghz ? 1 : -1;
  return d;
}

/// Largest |theta0|: 2 (g / wp) sqrt(nbar).
inline double theta0_amplitude(const PumpDrive& d, double g_ghz) {
  return 2.0 * (g_ghz / d.omega_p_ghz) * std::sqrt(d.n_bar);
}

/// Classical junction phase of the linear response at time t (seconds).
inline double theta0(double t, const PumpDrive& d, double g_ghz) {
  return d.sign * theta0_amplitude(d, g_ghz) * std::sin(angular_from_ghz(d.omega_p_ghz) * t);
}

/// Drive-independent operators of the displaced-frame model. Built once per
/// circuit and shared read-only by every drive point of a sweep.
struct FrameOperators {
  CircuitParams params;
  TransmonEigenbasis transmon;
  CMatrix h_static;  // H0: diag(E_k) (x) I + wa I (x) a^dag a + g N (x) (a + a^dag)
  CMatrix cos_block; // cos(theta) projected, (x) I
  CMatrix sin_block; // sin(theta) projected, (x) I
  CMatrix x_op;      // I (x) (a + a^dag)
  CMatrix number_op; // I (x) a^dag a
  double ej = 0.0;   // rad/s

  // When N_g = 0 every operator above becomes real after the diagonal basis
  // change |k,l> -> i^{p_k + l} |k,l> (p_k = 0 for even, 1 for odd transmon
  // states). `parity` is the generalised parity (-1)^{p_k + l}, which maps
  // H(t) onto H(t + T_p/2).
  struct RealForm {
    RMatrix h_static, cos_block, sin_block;
    CVector phase;
    RVector parity;
  };
  std::optional<RealForm> real_form;

  [[nodiscard]] Eigen::Index dim() const { return h_static.rows(); }
  [[nodiscard]] Basis basis() const {
    return Basis::joint(Basis::transmon_eigen(params.n_transmon), Basis::fock(params.n_fock));
  }
};

namespace detail {

// Weight of the outermost charge states in the highest kept transmon state.
inline double charge_edge_weight(const TransmonEigenbasis& tb) {
  const auto v = tb.vectors.col(tb.size() - 1);
  if (v.size() < 5) return 1.0;
  return v.head(2).squaredNorm() + v.tail(2).squaredNorm();
}

inline std::optional<FrameOperators::RealForm> make_real_form(const FrameOperators& f) {
  if (f.params.n_g != 0.0) return std::nullopt;
  const int nt = f.params.n_transmon, nf = f.params.n_fock;
  FrameOperators::RealForm rf;
  rf.phase.resize(f.dim());
  rf.parity.resize(f.dim());
  static const Complex powers[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (int k = 0; k < nt; ++k) {
    if (f.transmon.parity[static_cast<std::size_t>(k)] == 0) return std::nullopt;
    const int pk = f.transmon.parity[static_cast<std::size_t>(k)] > 0 ? 0 : 1;
    for (int l = 0; l < nf; ++l) {
      rf.phase(k * nf + l) = powers[(pk + l) % 4];
      rf.parity(k * nf + l) = ((pk + l) % 2 == 0) ? 1.0 : -1.0;
    }
  }
  auto to_real = [&](const CMatrix& m, RMatrix& out) {
    const CMatrix r = rf.phase.conjugate().asDiagonal() * m * rf.phase.asDiagonal();
    if (r.imag().norm() > 1e-12 * std::max(1.0, r.norm())) return false;
    out = r.real();
    return true;
  };
  if (!to_real(f.h_static, rf.h_static) || !to_real(f.cos_block, rf.cos_block) ||
      !to_real(f.sin_block, rf.sin_block))
    return std::nullopt;
  return rf;
}

} // namespace detail

inline std::shared_ptr<const FrameOperators> build_frame_operators(const CircuitParams& p) {
  p.validate();
  auto f = std::make_shared<FrameOperators>();
  f->params = p;
  f->transmon = transmon_eigenbasis(p, p.n_transmon);
  if (detail::charge_edge_weight(f->transmon) > 1e-8)
    throw std::invalid_argument(
        "build_frame_operators: n_transmon = " + std::to_string(p.n_transmon) +
        " reaches the charge cutoff N_c = " + std::to_string(p.n_charge) + "; increase N_c");
  const auto q = build_charge_operators(p.n_charge, p.n_g);
  const auto fo = build_fock_operators(p.n_fock);
  const CMatrix id_f = CMatrix::Identity(p.n_fock, p.n_fock);
  const CMatrix id_t = CMatrix::Identity(p.n_transmon, p.n_transmon);
  f->h_static = projected_joint_hamiltonian(p, f->transmon);
  f->cos_block = kron(f->transmon.project(q.cos_theta.data()), id_f);
  f->sin_block = kron(f->transmon.project(q.sin_theta.data()), id_f);
  f->x_op = kron(id_t, fo.a.data() + fo.a.data().adjoint());
  f->number_op = kron(id_t, fo.number.data());
  f->ej = angular_from_ghz(p.ej_ghz);
  f->real_form = detail::make_real_form(*f);
  return f;
}

/// H(t) = H0 + E_J (1 - cos theta0(t)) C + E_J sin theta0(t) S, where the
/// static -E_J cos(theta) piece already sits in H0.
class DisplacedFrameModel {
public:
  DisplacedFrameModel(std::shared_ptr<const FrameOperators> ops, const PumpDrive& drive)
      : ops_(std::move(ops)), drive_(drive) {
    if (!ops_) throw std::invalid_argument("DisplacedFrameModel: null operators");
    detail::require_off_resonance(drive.omega_p_ghz, ops_->params.omega_a_ghz,
                                  "DisplacedFrameModel");
    if (!(drive.omega_p_ghz > 0.0))
      throw std::invalid_argument("DisplacedFrameModel: pump frequency must be positive");
    omega_p_ = angular_from_ghz(drive.omega_p_ghz);
    amplitude_ = tescape::theta0_amplitude(drive, ops_->params.g_ghz);
  }

  [[nodiscard]] const FrameOperators& operators() const { return *ops_; }
  [[nodiscard]] const std::shared_ptr<const FrameOperators>& shared_operators() const { return ops_; }
  [[nodiscard]] const PumpDrive& drive() const { return drive_; }
  [[nodiscard]] double omega_p() const { return omega_p_; } // rad/s
  [[nodiscard]] double period() const { return kTwoPi / omega_p_; }
  [[nodiscard]] double theta0_amplitude() const { return amplitude_; }
  [[nodiscard]] Eigen::Index dim() const { return ops_->dim(); }

  [[nodiscard]] double theta0_at(double t) const {
    return drive_.sign * amplitude_ * std::sin(omega_p_ * t);
  }

  [[nodiscard]] CMatrix hamiltonian(double t) const {
    const double th = theta0_at(t);
    return ops_->h_static + (ops_->ej * (1.0 - std::cos(th))) * ops_->cos_block +
           (ops_->ej * std::sin(th)) * ops_->sin_block;
  }
  CMatrix operator()(double t) const { return hamiltonian(t); }

  /// H(t) in the real basis, only when operators().real_form is set.
  [[nodiscard]] RMatrix real_hamiltonian(double t) const {
    const auto& rf = ops_->real_form.value();
    const double th = theta0_at(t);
    return rf.h_static + (ops_->ej * (1.0 - std::cos(th))) * rf.cos_block +
           (ops_->ej * std::sin(th)) * rf.sin_block;
  }

  [[nodiscard]] OperatorMatrix hamiltonian_operator(double t) const {
    return OperatorMatrix(hamiltonian(t), ops_->basis());
  }

private:
  std::shared_ptr<const FrameOperators> ops_;
  PumpDrive drive_;
  double omega_p_ = 0.0;
  double amplitude_ = 0.0;
};

inline DisplacedFrameModel build_displaced_model(std::shared_ptr<const FrameOperators> ops,
                                                 const PumpDrive& drive) {
  return DisplacedFrameModel(std::move(ops), drive);
}

inline DisplacedFrameModel build_displaced_model(const CircuitParams& p, const PumpDrive& drive) {
  return DisplacedFrameModel(build_frame_operators(p), drive);
}

} // namespace tescape
