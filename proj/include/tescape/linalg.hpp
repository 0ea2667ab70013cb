#pragma once

// Dense eigen-kernels shared by the spectrum and Floquet solvers.

#include <algorithm>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "tescape/units.hpp"

namespace tescape::linalg {

/// In-place real symmetric eigendecomposition: on return `a` holds the
/// orthonormal eigenvectors column-wise and `w` the ascending eigenvalues.
inline void symmetric_eigen(RMatrix& a, RVector& w) {
  if (a.rows() == 0) {
    w.resize(0);
    return;
  }
  Eigen::SelfAdjointEigenSolver<RMatrix> es(a);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
  w = es.eigenvalues();
  a = es.eigenvectors();
}

inline void hermitian_eigen(CMatrix& a, RVector& w) {
  if (a.rows() == 0) {
    w.resize(0);
    return;
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(a);
  if (es.info() != Eigen::Success) throw NumericalError("Hermitian eigensolver did not converge");
  w = es.eigenvalues();
  a = es.eigenvectors();
}

struct UnitaryEigen {
  CVector eigenvalues; // on the unit circle
  CMatrix vectors;     // orthonormal columns
  double residual = 0; // ||U V - V diag(lambda)||_F
};

/// Eigendecomposition of a unitary matrix.
///
/// U = A + iB with commuting Hermitian A = (U + U^H)/2, B = (U - U^H)/2i, so
/// the Hermitian pencil A + mu B shares U's eigenvectors. Eigenphases that
/// the pencil maps onto (nearly) equal values are separated by a small
/// Schur factorisation of U restricted to that cluster, which also returns
/// an orthonormal basis for genuinely degenerate eigenspaces.
inline UnitaryEigen unitary_eigen(const CMatrix& u, double cluster_tol = 1e-7) {
  const Eigen::Index n = u.rows();
  UnitaryEigen out;
  if (n == 0) return out;
  constexpr double mu = 0.6180339887498949;
  const CMatrix ua = u.adjoint();
  CMatrix pencil = 0.5 * (u + ua) + (mu / 2.0) * Complex(0.0, -1.0) * (u - ua);
  pencil = 0.5 * (pencil + pencil.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(pencil);
  if (es.info() != Eigen::Success) throw NumericalError("unitary_eigen: pencil solve failed");
  CMatrix v = es.eigenvectors();
  const RVector& lam = es.eigenvalues();

  Eigen::Index start = 0;
  while (start < n) {
    Eigen::Index stop = start + 1;
    while (stop < n && lam(stop) - lam(stop - 1) < cluster_tol) ++stop;
    const Eigen::Index m = stop - start;
    if (m > 1) {
      const CMatrix q = v.middleCols(start, m);
      const CMatrix restricted = q.adjoint() * u * q;
      Eigen::ComplexSchur<CMatrix> schur(restricted);
      v.middleCols(start, m) = q * schur.matrixU();
    }
    start = stop;
  }

  out.eigenvalues.resize(n);
  const CMatrix uv = u * v;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex lambda = v.col(i).dot(uv.col(i)); // v^H U v
    out.eigenvalues(i) = lambda / std::abs(lambda);
  }
  out.residual = (uv - v * out.eigenvalues.asDiagonal()).norm();
  out.vectors = std::move(v);
  return out;
}

} // namespace tescape::linalg
