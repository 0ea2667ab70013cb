#pragma once

// Static spectrum of the circuit: diagonalisation, dressed-state labelling,
// the low-energy two-mode parameters and their inversion, multi-photon
// transition frequencies and charge dispersion.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tescape/linalg.hpp"
#include "tescape/operators.hpp"

namespace tescape {

struct Eigensystem {
  RVector energies; // rad/s, ascending
  CMatrix states;   // orthonormal columns
};

/// Hermitian eigendecomposition. Purely real input takes the real solver.
inline Eigensystem eigensystem(const OperatorMatrix& h, double hermiticity_tol = 1e-10) {
  if (h.hermiticity_defect() > hermiticity_tol)
    throw std::invalid_argument("eigensystem: matrix is not Hermitian (relative defect " +
                                std::to_string(h.hermiticity_defect()) + ")");
  Eigensystem out;
  if (h.data().imag().cwiseAbs().maxCoeff() == 0.0) {
    RMatrix a = h.data().real();
    linalg::symmetric_eigen(a, out.energies);
    out.states = a.cast<Complex>();
  } else {
    CMatrix a = h.data();
    linalg::hermitian_eigen(a, out.energies);
    out.states = std::move(a);
  }
  return out;
}

struct DressedLabel {
  int n_q = 0;
  int n_r = 0;
  friend bool operator==(const DressedLabel&, const DressedLabel&) = default;
};

struct LabeledSpectrum {
  std::vector<double> energies_ghz; // E/h, ascending
  CMatrix states;
  std::vector<std::optional<DressedLabel>> labels;
  std::vector<double> overlap_quality; // |<bare|dressed>|^2 of the assigned label
  std::vector<int> flagged;            // indices with overlap_quality < 0.5

  /// Index of the eigenstate carrying `label`, if any.
  [[nodiscard]] std::optional<std::size_t> find(DressedLabel label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] && *labels[i] == label) return i;
    return std::nullopt;
  }
};

/// Assigns each eigenvector the (n_q, n_r) of the bare product state
/// |T_nq> (x) |n_r> it overlaps most with. Pairs are taken greedily in
/// order of decreasing overlap so that a label used once is skipped later.
/// `bare_transmon_states` holds the bare transmon states as columns in the
/// transmon factor of the joint basis (identity when the joint Hamiltonian
/// is already written in the transmon eigenbasis).
inline LabeledSpectrum label_dressed_states(const Eigensystem& es,
                                            const CMatrix& bare_transmon_states, int n_fock) {
  const Eigen::Index dim_t = bare_transmon_states.rows();
  const Eigen::Index n_bare_q = bare_transmon_states.cols();
  const Eigen::Index n_states = es.states.cols();
  if (dim_t * n_fock != es.states.rows())
    throw std::invalid_argument("label_dressed_states: basis dimensions do not match");

  // overlap(q * n_fock + r, i) = |<T_q, r | psi_i>|^2
  RMatrix overlap(n_bare_q * n_fock, n_states);
  for (int r = 0; r < n_fock; ++r) {
    CMatrix slice(dim_t, n_states);
    for (Eigen::Index t = 0; t < dim_t; ++t) slice.row(t) = es.states.row(t * n_fock + r);
    const CMatrix amp = bare_transmon_states.adjoint() * slice;
    for (Eigen::Index q = 0; q < n_bare_q; ++q)
      overlap.row(q * n_fock + r) = amp.row(q).cwiseAbs2();
  }

  struct Candidate {
    double value;
    Eigen::Index label;
    Eigen::Index state;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(static_cast<std::size_t>(overlap.size()));
  for (Eigen::Index i = 0; i < n_states; ++i)
    for (Eigen::Index l = 0; l < overlap.rows(); ++l)
      if (overlap(l, i) > 1e-6) candidates.push_back({overlap(l, i), l, i});
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.value > b.value; });

  LabeledSpectrum out;
  out.states = es.states;
  out.energies_ghz.resize(static_cast<std::size_t>(n_states));
  for (Eigen::Index i = 0; i < n_states; ++i)
    out.energies_ghz[static_cast<std::size_t>(i)] = ghz_from_angular(es.energies(i));
  out.labels.assign(static_cast<std::size_t>(n_states), std::nullopt);
  out.overlap_quality.assign(static_cast<std::size_t>(n_states), 0.0);

  std::vector<char> label_used(static_cast<std::size_t>(overlap.rows()), 0);
  for (const auto& c : candidates) {
    auto& slot = out.labels[static_cast<std::size_t>(c.state)];
    if (slot || label_used[static_cast<std::size_t>(c.label)]) continue;
    label_used[static_cast<std::size_t>(c.label)] = 1;
    slot = DressedLabel{static_cast<int>(c.label / n_fock), static_cast<int>(c.label % n_fock)};
    out.overlap_quality[static_cast<std::size_t>(c.state)] = c.value;
  }
  for (Eigen::Index i = 0; i < n_states; ++i)
    if (out.overlap_quality[static_cast<std::size_t>(i)] < 0.5)
      out.flagged.push_back(static_cast<int>(i));
  return out;
}

/// Joint spectrum in the projected transmon-eigenstate (x) Fock basis.
inline LabeledSpectrum dressed_spectrum(const CircuitParams& p) {
  p.validate();
  const TransmonEigenbasis tb = transmon_eigenbasis(p, p.n_transmon);
  const OperatorMatrix h(projected_joint_hamiltonian(p, tb),
                         Basis::joint(Basis::transmon_eigen(p.n_transmon), Basis::fock(p.n_fock)));
  const Eigensystem es = eigensystem(h);
  return label_dressed_states(es, CMatrix::Identity(p.n_transmon, p.n_transmon), p.n_fock);
}

/// Parameters of the two-mode low-energy Hamiltonian, GHz. Signs follow
///   H/h = wq n_q - aq/2 n_q(n_q-1) + wr n_r - ar/2 n_r(n_r-1) - chi n_q n_r.
struct DressedParameters {
  double omega_q_bar = 0.0;
  double omega_r_bar = 0.0;
  double alpha_q = 0.0;
  double alpha_r = 0.0;
  double chi_qr = 0.0;
};

inline DressedParameters dressed_parameters_from(const LabeledSpectrum& s) {
  auto energy = [&](int q, int r) {
    const auto idx = s.find({q, r});
    if (!idx) {
      std::ostringstream msg;
      msg << "dressed_parameters: label (" << q << "," << r << ") not found";
      throw NumericalError(msg.str());
    }
    if (s.overlap_quality[*idx] < 0.5) {
      std::ostringstream msg;
      msg << "dressed_parameters: label (" << q << "," << r << ") is ambiguous (overlap "
          << s.overlap_quality[*idx] << ")";
      throw NumericalError(msg.str());
    }
    return s.energies_ghz[*idx];
  };
  const double e00 = energy(0, 0), e10 = energy(1, 0), e20 = energy(2, 0);
  const double e01 = energy(0, 1), e02 = energy(0, 2), e11 = energy(1, 1);
  return {e10 - e00, e01 - e00, 2 * e10 - e00 - e20, 2 * e01 - e00 - e02, e10 + e01 - e00 - e11};
}

inline DressedParameters dressed_parameters(const CircuitParams& p) {
  return dressed_parameters_from(dressed_spectrum(p));
}

struct FitTargets {
  double omega_q_bar = 0.0;
  double omega_r_bar = 0.0;
  double alpha_q = 0.0;
  double chi_qr = 0.0;
};

struct FitOptions {
  double tolerance = 1e-4; // required max relative residual
  double goal = 1e-9;      // iteration stops once residuals fall below this
  int max_iterations = 60;
  CircuitParams truncation{}; // supplies N_g, N_c, n_transmon, n_fock
};

struct FitResult {
  CircuitParams params;
  std::array<double, 4> residuals{}; // scaled, same order as FitTargets
  int iterations = 0;
  int evaluations = 0;
};

namespace detail {

inline std::array<double, 4> fit_scales(const FitTargets& t) {
  return {std::abs(t.omega_q_bar), std::abs(t.omega_r_bar), std::abs(t.alpha_q),
          std::max(std::abs(t.chi_qr), 1e-3 * std::abs(t.alpha_q))};
}

} // namespace detail

/// Inverts dressed_parameters for (E_J, E_C, g, w_a) given four measured
/// dressed quantities. Levenberg-Marquardt on exact diagonalisation with a
/// forward-difference Jacobian; the dispersive formulas only seed it.
inline FitResult fit_circuit_params(const FitTargets& t, const FitOptions& opt = {}) {
  if (!(t.omega_q_bar > 0 && t.omega_r_bar > 0 && t.alpha_q > 0 && t.chi_qr >= 0))
    throw std::invalid_argument("fit_circuit_params: targets must be positive (chi >= 0)");
  if (t.alpha_q >= 0.5 * t.omega_q_bar)
    throw std::invalid_argument("fit_circuit_params: alpha_q must be small against omega_q");

  const auto scales = detail::fit_scales(t);
  const double g_unit = 0.1;

  // x = (ln E_J, ln E_C, g / g_unit, ln w_a)
  auto to_params = [&](const Eigen::Vector4d& x) {
    CircuitParams p = opt.truncation;
    p.ej_ghz = std::exp(x(0));
    p.ec_ghz = std::exp(x(1));
    p.g_ghz = x(2) * g_unit;
    p.omega_a_ghz = std::exp(x(3));
    return p;
  };
  int evaluations = 0;
  auto residual = [&](const Eigen::Vector4d& x) {
    ++evaluations;
    const DressedParameters d = dressed_parameters(to_params(x));
    Eigen::Vector4d r;
    r << (d.omega_q_bar - t.omega_q_bar) / scales[0], (d.omega_r_bar - t.omega_r_bar) / scales[1],
        (d.alpha_q - t.alpha_q) / scales[2], (d.chi_qr - t.chi_qr) / scales[3];
    return r;
  };

  const double ec0 = t.alpha_q;
  const double ej0 = (t.omega_q_bar + ec0) * (t.omega_q_bar + ec0) / (8.0 * ec0);
  const double delta = t.omega_q_bar - t.omega_r_bar;
  const double n01 = std::pow(ej0 / (8.0 * ec0), 0.25) / std::sqrt(2.0);
  const double g0 = std::sqrt(t.chi_qr * delta * delta / (2.0 * t.alpha_q)) / n01;

  Eigen::Vector4d x(std::log(ej0), std::log(ec0), g0 / g_unit, std::log(t.omega_r_bar));
  Eigen::Vector4d r = residual(x);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  int it = 0;
  for (; it < opt.max_iterations && r.cwiseAbs().maxCoeff() > opt.goal; ++it) {
    Eigen::Matrix4d jac;
    for (int j = 0; j < 4; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
      Eigen::Vector4d xh = x;
      xh(j) += h;
      jac.col(j) = (residual(xh) - r) / h;
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d jtr = jac.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 12 && !improved; ++tries) {
      Eigen::Matrix4d a = jtj;
      a.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::Vector4d step = a.ldlt().solve(-jtr);
      const Eigen::Vector4d xn = x + step;
      Eigen::Vector4d rn;
      try {
        rn = residual(xn);
      } catch (const NumericalError&) {
        lambda *= 10.0;
        continue;
      }
      if (rn.squaredNorm() < cost) {
        x = xn;
        r = rn;
        cost = rn.squaredNorm();
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }

  FitResult out;
  out.params = to_params(x);
  out.params.g_ghz = std::abs(out.params.g_ghz);
  out.iterations = it;
  out.evaluations = evaluations;
  for (int i = 0; i < 4; ++i) out.residuals[static_cast<std::size_t>(i)] = r(i);
  if (r.cwiseAbs().maxCoeff() > opt.tolerance) {
    std::ostringstream msg;
    msg << "fit_circuit_params: no convergence after " << it << " iterations; residuals"
        << " omega_q=" << r(0) << " omega_r=" << r(1) << " alpha_q=" << r(2) << " chi_qr=" << r(3);
    throw NumericalError(msg.str());
  }
  return out;
}

struct TransitionFrequencies {
  std::vector<double> omega_0k; // (E_k - E_0)/h, GHz, k = 1..k_max
  std::vector<double> drive;    // omega_0k / k, GHz
};

/// Bare-transmon k-photon transition frequencies from the ground state.
inline TransitionFrequencies transition_frequencies(const CircuitParams& p, int k_max) {
  p.validate();
  if (k_max < 1 || k_max >= p.n_transmon)
    throw std::invalid_argument("transition_frequencies: need 1 <= k_max < n_transmon");
  const TransmonEigenbasis tb = transmon_eigenbasis(p, k_max + 1);
  TransitionFrequencies out;
  for (int k = 1; k <= k_max; ++k) {
    const double w = ghz_from_angular(tb.energies(k) - tb.energies(0));
    out.omega_0k.push_back(w);
    out.drive.push_back(w / k);
  }
  return out;
}

/// Spread of omega_0k over N_g in {0, 0.05, ..., 0.5}, GHz.
inline double charge_dispersion(const CircuitParams& p, int k) {
  p.validate();
  if (k < 0 || k >= p.n_transmon)
    throw std::invalid_argument("charge_dispersion: need 0 <= k < n_transmon");
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i <= 10; ++i) {
    CircuitParams q = p;
    q.n_g = 0.05 * i;
    const RMatrix h = transmon_hamiltonian_real(q);
    Eigen::SelfAdjointEigenSolver<RMatrix> es(h, Eigen::EigenvaluesOnly);
    const double w = ghz_from_angular(es.eigenvalues()(k) - es.eigenvalues()(0));
    lo = i == 0 ? w : std::min(lo, w);
    hi = i == 0 ? w : std::max(hi, w);
  }
  return hi - lo;
}

/// Number of transmon levels at N_g = 0 lying below the top of the cosine
/// potential (+E_J; the well bottom is -E_J).
inline int confined_level_count(const CircuitParams& p) {
  CircuitParams q = p;
  q.n_g = 0.0;
  const RMatrix h = transmon_hamiltonian_real(q);
  Eigen::SelfAdjointEigenSolver<RMatrix> es(h, Eigen::EigenvaluesOnly);
  const double top = angular_from_ghz(q.ej_ghz);
  return static_cast<int>((es.eigenvalues().array() < top).count());
}

} // namespace tescape
