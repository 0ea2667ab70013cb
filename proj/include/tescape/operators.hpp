#pragma once

/// Matrix representations of the transmon-resonator circuit
///
///   H = 4 E_C (N - N_g)^2 - E_J cos(theta) + w_a a^dag a + g (N - N_g)(a + a^dag)
///
/// with the island charge N and the Cooper-pair transfer operators
/// cos(theta), sin(theta) in the charge basis {|n>, n = -N_c..N_c}, and the
/// resonator in a truncated Fock basis. All Hamiltonians are returned in
/// angular-frequency units (hbar = 1, rad/s).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "tescape/units.hpp"

namespace tescape {

enum class BasisKind { Charge, Fock, TransmonEigen, Joint };

/// Which Hilbert space a matrix lives in. Charge(N_c) has 2 N_c + 1 states,
/// Fock(n) and TransmonEigen(n) have n, a Joint basis is the ordered
/// Kronecker product of its parts (first factor is the slow index).
struct Basis {
  BasisKind kind = BasisKind::Fock;
  int size_param = 0;
  std::vector<Basis> parts;

  static Basis charge(int n_c) { return {BasisKind::Charge, n_c, {}}; }
  static Basis fock(int n) { return {BasisKind::Fock, n, {}}; }
  static Basis transmon_eigen(int n) { return {BasisKind::TransmonEigen, n, {}}; }

  static Basis joint(const Basis& a, const Basis& b) {
    Basis out{BasisKind::Joint, 0, {}};
    for (const Basis* x : {&a, &b}) {
      if (x->kind == BasisKind::Joint)
        out.parts.insert(out.parts.end(), x->parts.begin(), x->parts.end());
      else
        out.parts.push_back(*x);
    }
    return out;
  }

  [[nodiscard]] std::int64_t dim() const {
    switch (kind) {
    case BasisKind::Charge: return 2 * static_cast<std::int64_t>(size_param) + 1;
    case BasisKind::Fock:
    case BasisKind::TransmonEigen: return size_param;
    case BasisKind::Joint: {
      std::int64_t d = 1;
      for (const auto& p : parts) d *= p.dim();
      return d;
    }
    }
    return 0;
  }

  friend bool operator==(const Basis&, const Basis&) = default;
};

// Largest dense operator we are willing to allocate (about 1 GB complex).
inline constexpr std::int64_t kMaxDenseDim = 8192;

/// Dense square complex matrix tagged with its basis.
class OperatorMatrix {
public:
  OperatorMatrix(CMatrix data, Basis basis) : data_(std::move(data)), basis_(std::move(basis)) {
    if (data_.rows() != data_.cols())
      throw std::invalid_argument("OperatorMatrix: matrix is not square");
    if (data_.rows() != basis_.dim())
      throw std::invalid_argument("OperatorMatrix: dimension " + std::to_string(data_.rows()) +
                                  " does not match basis dimension " +
                                  std::to_string(basis_.dim()));
  }

  [[nodiscard]] const CMatrix& data() const { return data_; }
  [[nodiscard]] const Basis& basis() const { return basis_; }
  [[nodiscard]] Eigen::Index dim() const { return data_.rows(); }

  /// ||A - A^dag||_F / ||A||_F (zero for the zero matrix).
  [[nodiscard]] double hermiticity_defect() const {
    const double norm = data_.norm();
    if (norm == 0.0) return 0.0;
    return (data_ - data_.adjoint()).norm() / norm;
  }
  [[nodiscard]] bool is_hermitian(double tol = 1e-12) const { return hermiticity_defect() <= tol; }

private:
  CMatrix data_;
  Basis basis_;
};

/// Physical constants and truncations of the circuit. Energies are E/h and
/// rates are w/2pi, both in GHz.
struct CircuitParams {
  double ej_ghz = 23.3;
  double ec_ghz = 0.166;
  double g_ghz = 0.179;
  double omega_a_ghz = 7.739;
  double n_g = 0.0;
  int n_charge = 40;   // charge states -N_c..N_c
  int n_transmon = 45; // transmon eigenstates kept for driven runs
  int n_fock = 10;

  void validate() const {
    if (!(ej_ghz >= 0.0) || !std::isfinite(ej_ghz))
      throw std::invalid_argument("CircuitParams: E_J must be >= 0");
    if (!(ec_ghz > 0.0) || !std::isfinite(ec_ghz))
      throw std::invalid_argument("CircuitParams: E_C must be > 0");
    if (!std::isfinite(g_ghz) || !std::isfinite(omega_a_ghz) || !std::isfinite(n_g))
      throw std::invalid_argument("CircuitParams: non-finite parameter");
    if (n_charge < 1) throw std::invalid_argument("CircuitParams: N_c must be >= 1");
    if (n_transmon < 1 || n_transmon > 2 * n_charge + 1)
      throw std::invalid_argument("CircuitParams: n_transmon must lie in [1, 2 N_c + 1]");
    if (n_fock < 2) throw std::invalid_argument("CircuitParams: n_fock must be >= 2");
  }
};

struct ChargeOperators {
  OperatorMatrix n;         // diag(n - N_g)
  OperatorMatrix cos_theta; // (e^{i theta} + e^{-i theta}) / 2
  OperatorMatrix sin_theta; // (e^{i theta} - e^{-i theta}) / 2i
};

/// Charge-basis operators. Convention: e^{i theta}|n> = |n+1>, so sin_theta
/// has -i/2 just below the diagonal and +i/2 just above it.
inline ChargeOperators build_charge_operators(int n_c, double n_g) {
  if (n_c < 1) throw std::invalid_argument("build_charge_operators: N_c must be >= 1");
  const Eigen::Index d = 2 * n_c + 1;
  CMatrix n = CMatrix::Zero(d, d);
  CMatrix c = CMatrix::Zero(d, d);
  CMatrix s = CMatrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) n(i, i) = static_cast<double>(i - n_c) - n_g;
  for (Eigen::Index i = 0; i + 1 < d; ++i) {
    c(i + 1, i) = 0.5;
    c(i, i + 1) = 0.5;
    s(i + 1, i) = Complex(0.0, -0.5);
    s(i, i + 1) = Complex(0.0, 0.5);
  }
  const Basis b = Basis::charge(n_c);
  return {OperatorMatrix(std::move(n), b), OperatorMatrix(std::move(c), b),
          OperatorMatrix(std::move(s), b)};
}

struct FockOperators {
  OperatorMatrix a;
  OperatorMatrix number;
};

inline FockOperators build_fock_operators(int n_fock) {
  if (n_fock < 2) throw std::invalid_argument("build_fock_operators: n_fock must be >= 2");
  CMatrix a = CMatrix::Zero(n_fock, n_fock);
  CMatrix num = CMatrix::Zero(n_fock, n_fock);
  for (int k = 1; k < n_fock; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  for (int k = 0; k < n_fock; ++k) num(k, k) = static_cast<double>(k);
  const Basis b = Basis::fock(n_fock);
  return {OperatorMatrix(std::move(a), b), OperatorMatrix(std::move(num), b)};
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Kronecker product A (x) B with a Joint basis tag.
inline OperatorMatrix tensor(const OperatorMatrix& a, const OperatorMatrix& b) {
  if (a.dim() * b.dim() > kMaxDenseDim)
    throw std::invalid_argument("tensor: product dimension " + std::to_string(a.dim() * b.dim()) +
                                " exceeds dense limit");
  return OperatorMatrix(kron(a.data(), b.data()), Basis::joint(a.basis(), b.basis()));
}

inline OperatorMatrix identity(const Basis& b) {
  return OperatorMatrix(CMatrix::Identity(b.dim(), b.dim()), b);
}

/// 4 E_C (N - N_g)^2 - E_J cos(theta) in the charge basis, as a real matrix.
inline RMatrix transmon_hamiltonian_real(const CircuitParams& p) {
  p.validate();
  const Eigen::Index d = 2 * p.n_charge + 1;
  const double ec = angular_from_ghz(p.ec_ghz);
  const double ej = angular_from_ghz(p.ej_ghz);
  RMatrix h = RMatrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double n = static_cast<double>(i - p.n_charge) - p.n_g;
    h(i, i) = 4.0 * ec * n * n;
  }
  for (Eigen::Index i = 0; i + 1 < d; ++i) {
    h(i + 1, i) = -0.5 * ej;
    h(i, i + 1) = -0.5 * ej;
  }
  return h;
}

inline OperatorMatrix transmon_hamiltonian(const CircuitParams& p) {
  return OperatorMatrix(transmon_hamiltonian_real(p).cast<Complex>(), Basis::charge(p.n_charge));
}

/// Full undriven Hamiltonian in the charge (x) Fock basis.
inline OperatorMatrix joint_static_hamiltonian(const CircuitParams& p) {
  p.validate();
  const auto q = build_charge_operators(p.n_charge, p.n_g);
  const auto f = build_fock_operators(p.n_fock);
  const OperatorMatrix ht = transmon_hamiltonian(p);
  const CMatrix x = f.a.data() + f.a.data().adjoint();
  const CMatrix id_t = CMatrix::Identity(ht.dim(), ht.dim());
  const CMatrix id_f = CMatrix::Identity(p.n_fock, p.n_fock);
  CMatrix h = kron(ht.data(), id_f) + angular_from_ghz(p.omega_a_ghz) * kron(id_t, f.number.data()) +
              angular_from_ghz(p.g_ghz) * kron(q.n.data(), x);
  return OperatorMatrix(std::move(h), Basis::joint(ht.basis(), f.a.basis()));
}

/// Lowest transmon eigenstates expressed in the charge basis.
struct TransmonEigenbasis {
  RVector energies;        // rad/s, ascending
  RMatrix vectors;         // (2 N_c + 1) x count, real orthonormal columns
  std::vector<int> parity; // +1 / -1 under n -> -n when N_g = 0, else 0
  int n_charge = 0;
  double n_g = 0.0;

  [[nodiscard]] Eigen::Index size() const { return energies.size(); }

  /// V^T A V for a charge-basis operator A.
  [[nodiscard]] CMatrix project(const CMatrix& charge_op) const {
    return vectors.transpose().cast<Complex>() * charge_op * vectors.cast<Complex>();
  }
};

/// Diagonalises the transmon and keeps the `count` lowest states. At N_g = 0
/// the even and odd charge-parity sectors are diagonalised separately so that
/// every returned state has definite parity, even where the two sectors are
/// numerically degenerate (free-rotor-like states far above the well).
inline TransmonEigenbasis transmon_eigenbasis(const CircuitParams& p, int count) {
  const RMatrix h = transmon_hamiltonian_real(p);
  const Eigen::Index d = h.rows();
  if (count < 1 || count > d)
    throw std::invalid_argument("transmon_eigenbasis: count must lie in [1, 2 N_c + 1]");

  TransmonEigenbasis out;
  out.n_charge = p.n_charge;
  out.n_g = p.n_g;
  out.energies.resize(count);
  out.vectors.resize(d, count);
  out.parity.assign(count, 0);

  if (p.n_g != 0.0) {
    Eigen::SelfAdjointEigenSolver<RMatrix> es(h);
    out.energies = es.eigenvalues().head(count);
    out.vectors = es.eigenvectors().leftCols(count);
    return out;
  }

  const int nc = p.n_charge;
  const double r = std::sqrt(0.5);
  RMatrix pe = RMatrix::Zero(d, nc + 1); // |0>, (|n> + |-n>)/sqrt2
  RMatrix po = RMatrix::Zero(d, nc);     // (|n> - |-n>)/sqrt2
  pe(nc, 0) = 1.0;
  for (int n = 1; n <= nc; ++n) {
    pe(nc + n, n) = r;
    pe(nc - n, n) = r;
    po(nc + n, n - 1) = r;
    po(nc - n, n - 1) = -r;
  }
  Eigen::SelfAdjointEigenSolver<RMatrix> even(pe.transpose() * h * pe);
  Eigen::SelfAdjointEigenSolver<RMatrix> odd(po.transpose() * h * po);
  const RMatrix ve = pe * even.eigenvectors();
  const RMatrix vo = po * odd.eigenvectors();

  Eigen::Index ie = 0, io = 0;
  for (int k = 0; k < count; ++k) {
    const bool take_even =
        io >= odd.eigenvalues().size() ||
        (ie < even.eigenvalues().size() && even.eigenvalues()(ie) <= odd.eigenvalues()(io));
    if (take_even) {
      out.energies(k) = even.eigenvalues()(ie);
      out.vectors.col(k) = ve.col(ie++);
      out.parity[k] = +1;
    } else {
      out.energies(k) = odd.eigenvalues()(io);
      out.vectors.col(k) = vo.col(io++);
      out.parity[k] = -1;
    }
  }
  return out;
}

/// Undriven joint Hamiltonian with the transmon projected onto `tb`:
/// diag(E_k) (x) I + w_a I (x) a^dag a + g N_kk' (x) (a + a^dag).
inline CMatrix projected_joint_hamiltonian(const CircuitParams& p, const TransmonEigenbasis& tb) {
  const auto q = build_charge_operators(p.n_charge, p.n_g);
  const auto f = build_fock_operators(p.n_fock);
  const CMatrix n_proj = tb.project(q.n.data());
  const CMatrix x = f.a.data() + f.a.data().adjoint();
  const CMatrix e = tb.energies.cast<Complex>().asDiagonal();
  const CMatrix id_t = CMatrix::Identity(tb.size(), tb.size());
  const CMatrix id_f = CMatrix::Identity(p.n_fock, p.n_fock);
  return kron(e, id_f) + angular_from_ghz(p.omega_a_ghz) * kron(id_t, f.number.data()) +
         angular_from_ghz(p.g_ghz) * kron(n_proj, x);
}

} // namespace tescape
