#include <gtest/gtest.h>

#include <random>

#include "tescape/floquet.hpp"
#include "tescape/spectrum.hpp"
#include "support/toy_model.hpp"

using namespace tescape;

namespace {

CMatrix random_hermitian(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  CMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = Complex(d(rng), d(rng));
  return 0.5 * (a + a.adjoint());
}

CMatrix expm_hermitian(const CMatrix& h, double t) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  const CVector ph = (es.eigenvalues() * -t).unaryExpr([](double x) { return std::polar(1.0, x); });
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

CMatrix pauli_x() {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 1) = m(1, 0) = 1.0;
  return m;
}
CMatrix pauli_y() {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 1) = Complex(0, -1);
  m(1, 0) = Complex(0, 1);
  return m;
}
CMatrix pauli_z() {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  return m;
}

CircuitParams small_circuit() {
  CircuitParams p;
  p.n_transmon = 12;
  p.n_fock = 4;
  return p;
}

// Floquet pipeline for a constant Hamiltonian.
FloquetBasis static_basis(const CMatrix& h, double period, int samples = 16) {
  auto prop = propagate_period([&](double) { return h; }, period, 128, samples);
  return floquet_decompose(std::move(prop));
}

} // namespace

TEST(Propagate, ZeroHamiltonianIsIdentity) {
  const auto r = propagate_period([](double) { return CMatrix::Zero(3, 3).eval(); }, 1.0, 128, 8);
  EXPECT_LT((r.u_period - CMatrix::Identity(3, 3)).norm(), 1e-15);
  ASSERT_EQ(r.u_samples.size(), 8u);
  for (const auto& u : r.u_samples) EXPECT_LT((u - CMatrix::Identity(3, 3)).norm(), 1e-15);
}

TEST(Propagate, ConstantGeneratorIsExponential) {
  std::mt19937_64 rng(3);
  const CMatrix h = random_hermitian(6, rng);
  const auto r = propagate_period([&](double) { return h; }, 2.5, 256, 16);
  EXPECT_LT((r.u_period - expm_hermitian(h, 2.5)).norm(), 1e-11);
  EXPECT_LT((r.u_samples[5] - expm_hermitian(h, 2.5 * 5 / 16)).norm(), 1e-11);
  // Roundoff grows with the number of exponentials: one per step for the
  // midpoint rule, two for Magnus4.
  EXPECT_LT(propagate_period([&](double) { return h; }, 2.5, 256, 16, StepRule::Midpoint).unitarity_defect, 1e-12);
  EXPECT_LT(r.unitarity_defect, 2e-12);
}

TEST(Propagate, RotatingDriveMatchesRabiSolution) {
  // H = w0/2 sz + W (cos wt sx + sin wt sy) has
  // U(t) = exp(-i w t sz/2) exp(-i [(w0 - w)/2 sz + W sx] t).
  // At fixed steps the midpoint error scales as W dt^2 and the Magnus4 error
  // as W dt^4.
  const double w0 = 1.0, w = 1.0;
  const double period = kTwoPi / w;
  auto error = [&](double rabi, int steps, StepRule rule) {
    auto h = [&](double t) -> CMatrix {
      return 0.5 * w0 * pauli_z() + rabi * (std::cos(w * t) * pauli_x() + std::sin(w * t) * pauli_y());
    };
    const auto r = propagate_period(h, period, steps, 8, rule);
    const CMatrix rot = expm_hermitian(0.5 * w * pauli_z(), period);
    const CMatrix exact = rot * expm_hermitian(0.5 * (w0 - w) * pauli_z() + rabi * pauli_x(), period);
    return (r.u_period - exact).norm();
  };
  EXPECT_LT(error(5e-4, 1024, StepRule::Midpoint), 1e-8);
  const double coarse = error(0.01, 1024, StepRule::Midpoint), fine = error(0.01, 2048, StepRule::Midpoint);
  EXPECT_NEAR(coarse / fine, 4.0, 0.1);
  EXPECT_LT(error(0.01, 1024, StepRule::Magnus4), 1e-8);
  EXPECT_LT(error(0.3, 1024, StepRule::Magnus4), 1e-8);
  const double c4 = error(0.3, 128, StepRule::Magnus4), f4 = error(0.3, 256, StepRule::Magnus4);
  EXPECT_NEAR(c4 / f4, 16.0, 1.0);
}

TEST(Propagate, RejectsCoarseGrid) {
  auto h = [](double) { return CMatrix::Identity(2, 2).eval(); };
  EXPECT_THROW(propagate_period(h, 1.0, 64, 8), std::invalid_argument);
  EXPECT_THROW(propagate_period(h, 1.0, 128, 3), std::invalid_argument);
}

TEST(Propagate, SymmetricSchemeMatchesDirectProduct) {
  const auto ops = build_frame_operators(small_circuit());
  const DisplacedFrameModel m(ops, drive_from_photons(80.0, 8.1, 7.739));
  const auto fast = propagate_period(m, 256, 32);
  const auto direct = propagate_period(m, 256, 32, StepRule::Magnus4, PropagationMethod::Direct);
  EXPECT_LT((fast.u_period - direct.u_period).norm(), 1e-9);
  for (int j = 0; j < 32; ++j) EXPECT_LT((fast.u_samples[j] - direct.u_samples[j]).norm(), 1e-9) << j;
  EXPECT_LT(fast.unitarity_defect, 1e-8);
}

TEST(Propagate, SymmetricSchemeMatchesDirectProductForMidpoint) {
  const auto ops = build_frame_operators(small_circuit());
  const DisplacedFrameModel m(ops, drive_from_photons(80.0, 8.1, 7.739));
  const auto fast = propagate_period(m, 256, 32, StepRule::Midpoint);
  const auto direct = propagate_period(m, 256, 32, StepRule::Midpoint, PropagationMethod::Direct);
  EXPECT_LT((fast.u_period - direct.u_period).norm(), 1e-9);
}

TEST(Propagate, UndrivenModelIsExponential) {
  const auto ops = build_frame_operators(small_circuit());
  const DisplacedFrameModel m(ops, drive_from_photons(0.0, 8.1, 7.739));
  const auto r = propagate_period(m, 1024, 16);
  EXPECT_LT((r.u_period - expm_hermitian(ops->h_static, m.period())).norm(), 1e-9);
}

TEST(Floquet, UndrivenQuasienergiesAreFoldedEnergies) {
  const auto ops = build_frame_operators(small_circuit());
  const DisplacedFrameModel m(ops, drive_from_photons(0.0, 8.1, 7.739));
  const auto basis = floquet_decompose(propagate_period(m, 1024, 16));
  const RVector e = Eigen::SelfAdjointEigenSolver<CMatrix>(ops->h_static, Eigen::EigenvaluesOnly).eigenvalues();
  std::vector<double> folded;
  for (int i = 0; i < e.size(); ++i) folded.push_back(fold_quasienergy(e(i), m.omega_p()));
  std::sort(folded.begin(), folded.end());
  for (int i = 0; i < e.size(); ++i)
    EXPECT_NEAR(basis.quasienergies(i), folded[static_cast<std::size_t>(i)], 1e-8 * m.omega_p());
}

TEST(Floquet, ModesPeriodicOrthonormalAndDeterminant) {
  const auto ops = build_frame_operators(small_circuit());
  const DisplacedFrameModel m(ops, drive_from_photons(120.0, 8.1, 7.739));
  auto prop = propagate_period(m, 512, 64);
  const CMatrix u = prop.u_period;
  const auto basis = floquet_decompose(prop);
  const double T = basis.period;
  const Eigen::Index n = basis.dim();
  for (int j = 0; j < basis.samples(); j += 7)
    EXPECT_LT((basis.modes_t[j].adjoint() * basis.modes_t[j] - CMatrix::Identity(n, n)).norm(), 1e-8);
  // Propagating the t = 0 modes over one period and removing the quasienergy phase returns them.
  const CVector ph = (basis.quasienergies * T).unaryExpr([](double x) { return std::polar(1.0, x); });
  EXPECT_LT((u * basis.modes0() * ph.asDiagonal() - basis.modes0()).norm(), 1e-8);
  // Sum of quasienergy phases against det U(T).
  const double phase_sum = -basis.quasienergies.sum() * T;
  const double det_phase = std::arg(u.determinant());
  EXPECT_NEAR(std::remainder(phase_sum - det_phase, kTwoPi), 0.0, 1e-8);
  for (int i = 0; i + 1 < n; ++i) EXPECT_LE(basis.quasienergies(i), basis.quasienergies(i + 1));
  EXPECT_GT(basis.quasienergies.minCoeff(), -basis.omega() / 2);
  EXPECT_LE(basis.quasienergies.maxCoeff(), basis.omega() / 2);
}

TEST(Floquet, FoldingConvention) {
  const double w = 2.0;
  EXPECT_DOUBLE_EQ(fold_quasienergy(-1.0, w), 1.0);
  EXPECT_DOUBLE_EQ(fold_quasienergy(1.0, w), 1.0);
  EXPECT_DOUBLE_EQ(fold_quasienergy(2.5, w), 0.5);
  EXPECT_DOUBLE_EQ(fold_quasienergy(-0.5, w), -0.5);
}

TEST(Floquet, DegenerateEigenvaluesFlaggedAndOrthogonalised) {
  CMatrix h = CMatrix::Zero(4, 4);
  h.diagonal() << 0.1, 0.1, 0.3, -0.2;
  std::mt19937_64 rng(5);
  // Rotate so the degenerate block is not axis aligned.
  const CMatrix q = Eigen::HouseholderQR<CMatrix>(random_hermitian(4, rng)).householderQ();
  const CMatrix hr = q * h * q.adjoint();
  const auto basis = static_basis(hr, 1.0);
  EXPECT_EQ(basis.degenerate.size(), 1u);
  EXPECT_LT((basis.modes0().adjoint() * basis.modes0() - CMatrix::Identity(4, 4)).norm(), 1e-10);
}

TEST(Fourier, UndrivenSingleHarmonicPerPair) {
  CircuitParams p = small_circuit();
  const auto ops = build_frame_operators(p);
  const DisplacedFrameModel m(ops, drive_from_photons(0.0, 8.1, 7.739));
  const auto basis = floquet_decompose(propagate_period(m, 1024, 64));
  const auto xk = x_fourier_components(ops->x_op, basis, 20);
  const Eigen::SelfAdjointEigenSolver<CMatrix> es(ops->h_static);
  const Eigen::Index n = basis.dim();
  for (Eigen::Index a = 0; a < n; a += 5)
    for (Eigen::Index b = 0; b < n; b += 3) {
      double total = 0.0, peak = 0.0;
      for (int k = -20; k <= 20; ++k) {
        const double w = std::norm(xk.at(k, a, b));
        total += w;
        peak = std::max(peak, w);
      }
      EXPECT_NEAR(total - peak, 0.0, 1e-10);
      // Magnitude equals the static eigenbasis element.
      const CVector va = basis.modes0().col(a), vb = basis.modes0().col(b);
      EXPECT_NEAR(std::sqrt(peak), std::abs(va.dot(ops->x_op * vb)), 1e-8);
    }
}

TEST(Fourier, InZoneEnergiesUseZeroHarmonic) {
  CMatrix h = CMatrix::Zero(2, 2);
  h.diagonal() << -0.5, 0.5;
  const auto basis = static_basis(h, 1.0, 16); // zone (-pi, pi]
  const auto xk = x_fourier_components(pauli_x(), basis, 5);
  EXPECT_NEAR(std::abs(xk.at(0, 0, 1)), 1.0, 1e-12);
  for (int k = 1; k <= 5; ++k) EXPECT_NEAR(std::abs(xk.at(k, 0, 1)), 0.0, 1e-12);
}

TEST(Fourier, ParsevalAndHermiticity) {
  const auto ops = build_frame_operators(small_circuit());
  const DisplacedFrameModel m(ops, drive_from_photons(150.0, 8.1, 7.739));
  const auto basis = floquet_decompose(propagate_period(m, 512, 64));
  std::mt19937_64 rng(9);
  const CMatrix x = random_hermitian(static_cast<int>(basis.dim()), rng);
  const auto xk = x_fourier_components(x, basis, 31, 1.0);
  const int s = basis.samples();
  for (Eigen::Index a = 0; a < basis.dim(); a += 7)
    for (Eigen::Index b = 0; b < basis.dim(); b += 5) {
      double spectral = 0.0, temporal = 0.0;
      for (int k = -s / 2; k < s / 2; ++k) spectral += std::norm(xk.raw(k, a, b));
      for (int j = 0; j < s; ++j) {
        const CMatrix& phi = basis.modes_t[j];
        temporal += std::norm(phi.col(a).dot(x * phi.col(b)));
      }
      EXPECT_NEAR(spectral, temporal / s, 1e-8 * std::max(1.0, temporal / s));
      for (int k = -10; k <= 10; ++k)
        EXPECT_LT(std::abs(xk.at(-k, b, a) - std::conj(xk.at(k, a, b))), 1e-8);
    }
}

TEST(Fourier, AliasingGuard) {
  // A mode whose phase winds faster than k_max harmonics.
  const auto ops = build_frame_operators(small_circuit());
  const DisplacedFrameModel m(ops, drive_from_photons(150.0, 8.1, 7.739));
  const auto basis = floquet_decompose(propagate_period(m, 512, 64));
  EXPECT_THROW(x_fourier_components(ops->x_op, basis, 0), NumericalError);
  EXPECT_THROW(x_fourier_components(ops->x_op, basis, 40), std::invalid_argument);
}

TEST(Rates, ZeroTemperatureHasNoUpwardComponent) {
  BathSpec bath;
  bath.n_th = 0.0;
  EXPECT_EQ(bath_rate(-1.0, bath), 0.0);
  EXPECT_EQ(bath_rate(0.0, bath), 0.0);
  EXPECT_EQ(bath_rate(2.0, bath), bath.kappa);
  bath.shape = SpectralShape::Ohmic;
  bath.omega_ref = 4.0;
  EXPECT_DOUBLE_EQ(bath_rate(2.0, bath), 0.5 * bath.kappa);
  bath.n_th = 0.3;
  EXPECT_DOUBLE_EQ(bath_rate(-2.0, bath), 0.5 * bath.kappa * 0.3);
}

TEST(Rates, TwoLevelTextbookRates) {
  CMatrix h = CMatrix::Zero(2, 2);
  h.diagonal() << -0.5, 0.5;
  const auto basis = static_basis(h, 1.0);
  const auto xk = x_fourier_components(pauli_x(), basis, 5);
  for (double n_th : {0.0, 0.25, 2.0}) {
    BathSpec bath;
    bath.kappa = 3.0;
    bath.n_th = n_th;
    const auto r = floquet_rates(xk, basis, bath);
    // index 0 = ground, 1 = excited; rates(b, a) is a -> b
    EXPECT_NEAR(r.rates(0, 1), bath.kappa * (n_th + 1.0), 1e-12);
    EXPECT_NEAR(r.rates(1, 0), bath.kappa * n_th, 1e-12);
  }
}

TEST(Rates, GeneratorColumnsSumToZero) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const CMatrix h = random_hermitian(5, rng);
    const auto basis = static_basis(0.3 * h, 1.0);
    const auto xk = x_fourier_components(random_hermitian(5, rng), basis, 5);
    BathSpec bath;
    bath.n_th = 0.1 * trial;
    const auto r = floquet_rates(xk, basis, bath);
    EXPECT_GE(r.rates.minCoeff(), 0.0);
    const double scale = r.rates.cwiseAbs().maxCoeff();
    EXPECT_LT(r.generator.colwise().sum().cwiseAbs().maxCoeff(), 1e-12 * scale);
  }
}

TEST(Steady, DetailedBalance) {
  for (double n_th : {0.0, 0.1, 1.0, 7.5}) {
    RMatrix rates = RMatrix::Zero(2, 2);
    rates(0, 1) = 2.0 * (n_th + 1.0);
    rates(1, 0) = 2.0 * n_th;
    const auto sp = steady_populations(generator_from_rates(rates).generator);
    EXPECT_NEAR(sp.p(1) / sp.p(0), n_th / (n_th + 1.0), 1e-6);
    EXPECT_NEAR(sp.p.sum(), 1.0, 1e-12);
  }
}

TEST(Steady, MatchesReplacedRowSolve) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6 + trial;
    RMatrix rates(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) rates(i, j) = std::pow(10.0, -6.0 * u(rng));
    const RMatrix l = generator_from_rates(rates).generator;
    RMatrix a = l;
    a.row(0).setOnes();
    RVector b = RVector::Zero(n);
    b(0) = 1.0;
    const RVector oracle = a.fullPivLu().solve(b);
    const auto sp = steady_populations(l);
    EXPECT_LT((sp.p - oracle).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((l * sp.p).norm(), 1e-12 * l.norm());
    EXPECT_EQ(sp.closed_classes, 1);
  }
}

TEST(Steady, PermutationEquivariance) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 8;
  RMatrix rates(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) rates(i, j) = u(rng) < 0.5 ? 0.0 : u(rng);
  const RMatrix l = generator_from_rates(rates).generator;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  RMatrix lp(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) lp(i, j) = l(perm[i], perm[j]);
  const auto a = steady_populations(l), b = steady_populations(lp);
  for (int i = 0; i < n; ++i) EXPECT_NEAR(b.p(i), a.p(perm[i]), 1e-12);
}

TEST(Steady, MultipleClosedClassesUseStartMode) {
  // 0 <-> 1 closed, 3 absorbing, 2 transient feeding both.
  RMatrix rates = RMatrix::Zero(4, 4);
  rates(1, 0) = 1.0;
  rates(0, 1) = 3.0;
  rates(0, 2) = 1.0; // 2 -> 0
  rates(3, 2) = 3.0; // 2 -> 3
  const RMatrix l = generator_from_rates(rates).generator;
  const auto from_closed = steady_populations(l, 1);
  EXPECT_EQ(from_closed.closed_classes, 2);
  EXPECT_TRUE(from_closed.multiple());
  EXPECT_NEAR(from_closed.p(0), 0.75, 1e-12);
  EXPECT_NEAR(from_closed.p(1), 0.25, 1e-12);
  const auto from_transient = steady_populations(l, 2);
  EXPECT_NEAR(from_transient.p(3), 0.75, 1e-12);
  EXPECT_NEAR(from_transient.p(0), 0.25 * 0.75, 1e-12);
  EXPECT_NEAR(from_transient.p.sum(), 1.0, 1e-12);
}

TEST(Steady, RejectsImproperGenerator) {
  RMatrix l = RMatrix::Zero(2, 2);
  l(0, 1) = 1.0;
  EXPECT_THROW(steady_populations(l), std::invalid_argument);
}

TEST(Reduce, PureGroundAndMaximallyMixed) {
  const int nt = 4, nf = 3;
  const CMatrix modes = CMatrix::Identity(nt * nf, nt * nf);
  RVector p = RVector::Zero(nt * nf);
  p(0) = 1.0;
  const auto g = reduce_transmon(p, modes, nt, nf, 2);
  EXPECT_NEAR(g.rho_transmon_diag(0), 1.0, 1e-15);
  EXPECT_EQ(g.mean_level, 0.0);
  EXPECT_EQ(g.p_unconfined, 0.0);
  const auto mixed = reduce_transmon(RVector::Constant(nt * nf, 1.0 / (nt * nf)), modes, nt, nf, 2);
  for (int k = 0; k < nt; ++k) EXPECT_NEAR(mixed.rho_transmon_diag(k), 1.0 / nt, 1e-15);
  EXPECT_NEAR(mixed.p_unconfined, 0.5, 1e-15);
  EXPECT_NEAR(mixed.cavity_photons, 1.0, 1e-15);
}

TEST(Reduce, TraceDeviationRejected) {
  const CMatrix modes = 1.1 * CMatrix::Identity(4, 4);
  RVector p = RVector::Zero(4);
  p(0) = 1.0;
  EXPECT_THROW(reduce_transmon(p, modes, 2, 2, 1), NumericalError);
}

TEST(EndToEnd, UndrivenSettlesInGroundMode) {
  const CircuitParams p = small_circuit();
  const auto ops = build_frame_operators(p);
  const DisplacedFrameModel m(ops, drive_from_photons(0.0, 8.1, 7.739));
  FloquetSettings fs;
  fs.samples = 128;
  fs.k_max = 40;
  auto basis = floquet_decompose(propagate_period(m, fs.steps, fs.samples));
  const auto xk = x_fourier_components(ops->x_op, basis, fs.k_max);
  const auto rates = floquet_rates(xk, basis, BathSpec{});
  const int g = ground_like_mode(basis);
  const auto sp = steady_populations(rates.generator, g);
  EXPECT_NEAR(sp.p(g), 1.0, 1e-6);
  // The reduced state is the partial trace of the dressed ground state.
  const Eigen::SelfAdjointEigenSolver<CMatrix> es(ops->h_static);
  const CVector ground = es.eigenvectors().col(0);
  const auto st = reduce_transmon(sp.p, basis, p.n_transmon, p.n_fock, confined_level_count(p));
  for (int k = 0; k < p.n_transmon; ++k)
    EXPECT_NEAR(st.rho_transmon_diag(k), ground.segment(k * p.n_fock, p.n_fock).squaredNorm(), 1e-6);
  EXPECT_LT(st.p_unconfined, 1e-6);
}

TEST(EndToEnd, ToyModelMatchesMasterEquationIntegration) {
  const auto toy = oracle::make_toy_model();
  const RVector p_fm = oracle::floquet_markov_steady_state(toy).diagonal().real();
  const RVector p_me = oracle::master_equation_steady_state(toy).diagonal().real();
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(p_fm(i), p_me(i), 0.02 * std::max(p_me(i), 0.05)) << i;
  EXPECT_GT(p_me.segment(3, 3).sum(), 0.1); // the drive populates the excited transmon level
}
