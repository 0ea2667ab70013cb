#pragma once

// Floquet-Markov steady state of a periodically driven system coupled
// weakly to a bath through an operator X.
//
//  1. U(t, 0) over one period as a product of fourth-order Magnus steps,
//  2. Floquet modes U(T)|phi_a(0)> = e^{-i e_a T}|phi_a(0)>, periodic modes
//     |phi_a(t)> = e^{i e_a t} U(t, 0)|phi_a(0)>,
//  3. harmonics X_abk = (1/T) int <phi_a(t)|X|phi_b(t)> e^{-i k w t} dt,
//  4. rates a -> b = sum_k gamma(e_a - e_b + k w) |X_abk|^2,
//  5. stationary populations of that rate equation, and the reduced
//     transmon populations of rho(0) = sum_a p_a |phi_a(0)><phi_a(0)|.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "tescape/frame.hpp"
#include "tescape/linalg.hpp"

namespace tescape {

/// Per-step rule of the time-ordered product. Magnus4 is the fourth-order
/// commutator-free Magnus step with two exponentials at the Gauss nodes;
/// Midpoint is exp(-i H(t_mid) dt).
enum class StepRule { Magnus4, Midpoint };

struct FloquetSettings {
  int steps = 256;   // time steps per period
  StepRule rule = StepRule::Magnus4;
  int samples = 256; // mode samples per period
  int k_max = 100;   // harmonics kept, -k_max..k_max
  double alias_tolerance = 1e-4;

  void validate() const {
    if (steps < 128) throw std::invalid_argument("FloquetSettings: steps must be >= 128");
    if (samples < 1 || steps % samples != 0)
      throw std::invalid_argument("FloquetSettings: samples must divide steps");
    if (k_max < 0 || samples < 2 * k_max + 2)
      throw std::invalid_argument("FloquetSettings: need samples >= 2 k_max + 2");
  }
};

struct PropagationResult {
  CMatrix u_period;
  std::vector<CMatrix> u_samples; // U(t_j, 0), t_j = j T / S, j = 0..S-1
  double period = 0.0;
  int steps = 0;
  double unitarity_defect = 0.0; // ||U(T)^H U(T) - I||_F
};

enum class PropagationMethod {
  Automatic, // symmetric quarter-period scheme whenever the model allows it
  Direct,    // step through the whole period
};

namespace detail {

inline double unitarity_defect(const CMatrix& u) {
  return (u.adjoint() * u - CMatrix::Identity(u.rows(), u.cols())).norm();
}

inline void check_propagation_grid(int steps, int samples) {
  if (steps < 128) throw std::invalid_argument("propagate_period: steps must be >= 128");
  if (samples < 1 || samples > steps || steps % samples != 0)
    throw std::invalid_argument("propagate_period: samples must divide steps");
}

// exp(-i H dt) for real symmetric H; the result is complex symmetric.
inline CMatrix real_step_propagator(const RMatrix& h, double dt) {
  RMatrix v = h;
  RVector w;
  linalg::symmetric_eigen(v, w);
  const RVector c = (w * dt).array().cos();
  const RVector s = (w * dt).array().sin();
  const RMatrix re = (v * c.asDiagonal()) * v.transpose();
  const RMatrix im = -(v * s.asDiagonal()) * v.transpose();
  CMatrix out(h.rows(), h.cols());
  out.real() = re;
  out.imag() = im;
  return out;
}

inline CMatrix step_propagator(const CMatrix& h, double dt) {
  if (h.imag().cwiseAbs().maxCoeff() == 0.0) return real_step_propagator(h.real(), dt);
  CMatrix v = 0.5 * (h + h.adjoint());
  RVector w;
  linalg::hermitian_eigen(v, w);
  const CVector phase = (w * (-dt)).unaryExpr([](double x) { return std::polar(1.0, x); });
  return (v * phase.asDiagonal()) * v.adjoint();
}

// Gauss nodes c_1,2 = 1/2 -+ sqrt(3)/6 and weights a_1,2 = 1/4 +- sqrt(3)/6;
// one step is exp(-i dt (a2 H1 + a1 H2)) exp(-i dt (a1 H1 + a2 H2)).
inline constexpr double kGaussOffset = 0.28867513459481288225; // sqrt(3)/6
inline constexpr double kMagnusA1 = 0.25 + kGaussOffset;
inline constexpr double kMagnusA2 = 0.25 - kGaussOffset;

inline void finish_propagation(PropagationResult& out) {
  out.unitarity_defect = unitarity_defect(out.u_period);
  if (out.unitarity_defect > 1e-6) {
    std::ostringstream msg;
    msg << "propagate_period: propagator lost unitarity (defect " << out.unitarity_defect
        << "); increase the step count above " << out.steps;
    throw NumericalError(msg.str());
  }
}

} // namespace detail

/// Time-ordered propagator over one period of any T-periodic Hamiltonian
/// `h(t)` (a callable returning a Hermitian CMatrix in rad/s), as an ordered
/// product of step propagators.
template <class HamiltonianFn>
PropagationResult propagate_period(const HamiltonianFn& h, double period, int steps, int samples,
                                   StepRule rule = StepRule::Magnus4) {
  detail::check_propagation_grid(steps, samples);
  if (!(period > 0.0)) throw std::invalid_argument("propagate_period: period must be positive");
  const double dt = period / steps;
  const int stride = steps / samples;
  PropagationResult out;
  out.period = period;
  out.steps = steps;
  CMatrix u;
  for (int j = 0; j < steps; ++j) {
    const double t = j * dt;
    if (rule == StepRule::Midpoint) {
      const CMatrix hm = h(t + 0.5 * dt);
      if (j == 0) u = CMatrix::Identity(hm.rows(), hm.cols());
      if (j % stride == 0) out.u_samples.push_back(u);
      u = detail::step_propagator(hm, dt) * u;
      continue;
    }
    const CMatrix h1 = h(t + (0.5 - detail::kGaussOffset) * dt);
    const CMatrix h2 = h(t + (0.5 + detail::kGaussOffset) * dt);
    if (j == 0) u = CMatrix::Identity(h1.rows(), h1.cols());
    if (j % stride == 0) out.u_samples.push_back(u);
    u = detail::step_propagator(detail::kMagnusA1 * h1 + detail::kMagnusA2 * h2, dt) * u;
    u = detail::step_propagator(detail::kMagnusA2 * h1 + detail::kMagnusA1 * h2, dt) * u;
  }
  out.u_period = std::move(u);
  detail::finish_propagation(out);
  return out;
}

namespace detail {

// Quarter-period scheme for a model with a real form. In that basis every
// exponential is complex symmetric. Since theta0(T/2 - t) = theta0(t), the
// step mirrored about T/4 is the transpose of step j (the Magnus factors swap
// order), and E_{j+n/2} = P E_j P with the generalised parity P because
// theta0(t + T/2) = -theta0(t). With Q = U(T/4):
//   U(T/2) = Q^T Q,  U(T/2 - s) = conj(U(s)) U(T/2),
//   U(T/2 + s) = P U(s) P U(T/2),  U(T) = P U(T/2) P U(T/2).
inline PropagationResult propagate_symmetric(const DisplacedFrameModel& m, int steps, int samples,
                                             StepRule rule) {
  const auto& rf = m.operators().real_form.value();
  const double period = m.period();
  const double dt = period / steps;
  const int stride = steps / samples;
  const int quarter_steps = steps / 4;
  const int quarter_samples = samples / 4;
  const Eigen::Index n = m.dim();

  std::vector<CMatrix> quarter; // U(t_j) for j = 0..S/4
  quarter.reserve(static_cast<std::size_t>(quarter_samples + 1));
  CMatrix u = CMatrix::Identity(n, n);
  quarter.push_back(u);
  for (int j = 0; j < quarter_steps; ++j) {
    const double t = j * dt;
    if (rule == StepRule::Midpoint) {
      u = real_step_propagator(m.real_hamiltonian(t + 0.5 * dt), dt) * u;
    } else {
      const RMatrix h1 = m.real_hamiltonian(t + (0.5 - kGaussOffset) * dt);
      const RMatrix h2 = m.real_hamiltonian(t + (0.5 + kGaussOffset) * dt);
      u = real_step_propagator(kMagnusA1 * h1 + kMagnusA2 * h2, dt) * u;
      u = real_step_propagator(kMagnusA2 * h1 + kMagnusA1 * h2, dt) * u;
    }
    if ((j + 1) % stride == 0) quarter.push_back(u);
  }
  const CMatrix half = quarter.back().transpose() * quarter.back();
  const RMatrix pp = rf.parity * rf.parity.transpose();
  auto parity_conjugate = [&](const CMatrix& a) -> CMatrix { return a.cwiseProduct(pp.cast<Complex>()); };

  std::vector<CMatrix> real_samples(static_cast<std::size_t>(samples));
  for (int j = 0; j <= quarter_samples && j < samples; ++j)
    real_samples[static_cast<std::size_t>(j)] = quarter[static_cast<std::size_t>(j)];
  for (int j = quarter_samples + 1; j <= samples / 2 && j < samples; ++j)
    real_samples[static_cast<std::size_t>(j)] =
        quarter[static_cast<std::size_t>(samples / 2 - j)].conjugate() * half;
  quarter.clear();
  quarter.shrink_to_fit();
  for (int j = samples / 2 + 1; j < samples; ++j)
    real_samples[static_cast<std::size_t>(j)] =
        parity_conjugate(real_samples[static_cast<std::size_t>(j - samples / 2)]) * half;
  const CMatrix full = parity_conjugate(half) * half;

  PropagationResult out;
  out.period = period;
  out.steps = steps;
  auto to_model_basis = [&](const CMatrix& a) -> CMatrix {
    return rf.phase.asDiagonal() * a * rf.phase.conjugate().asDiagonal();
  };
  out.u_period = to_model_basis(full);
  out.u_samples.reserve(static_cast<std::size_t>(samples));
  for (auto& s : real_samples) {
    out.u_samples.push_back(to_model_basis(s));
    s.resize(0, 0);
  }
  finish_propagation(out);
  return out;
}

} // namespace detail

inline PropagationResult propagate_period(const DisplacedFrameModel& m, int steps, int samples,
                                          StepRule rule = StepRule::Magnus4,
                                          PropagationMethod method = PropagationMethod::Automatic) {
  detail::check_propagation_grid(steps, samples);
  const bool symmetric = method == PropagationMethod::Automatic &&
                         m.operators().real_form.has_value() && steps % 4 == 0 &&
                         samples % 4 == 0 && samples >= 4;
  if (symmetric) return detail::propagate_symmetric(m, steps, samples, rule);
  return propagate_period([&m](double t) { return m.hamiltonian(t); }, m.period(), steps, samples, rule);
}

struct FloquetBasis {
  RVector quasienergies;        // rad/s, ascending, in (-w/2, w/2]
  std::vector<CMatrix> modes_t; // periodic modes at t_j = j T / S, as columns
  double period = 0.0;
  std::vector<int> degenerate;  // i where e_{i+1} - e_i (cyclically) is below 1e-10 in phase

  [[nodiscard]] double omega() const { return kTwoPi / period; }
  [[nodiscard]] int samples() const { return static_cast<int>(modes_t.size()); }
  [[nodiscard]] Eigen::Index dim() const { return quasienergies.size(); }
  [[nodiscard]] const CMatrix& modes0() const { return modes_t.front(); }

  /// Smallest cyclic spacing between quasienergies, rad/s.
  [[nodiscard]] double min_gap() const {
    const Eigen::Index n = quasienergies.size();
    if (n < 2) return omega();
    double gap = quasienergies(0) + omega() - quasienergies(n - 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i)
      gap = std::min(gap, quasienergies(i + 1) - quasienergies(i));
    return gap;
  }
};

/// Fold a quasienergy into (-w/2, w/2].
inline double fold_quasienergy(double e, double omega) {
  double f = std::remainder(e, omega);
  if (f <= -0.5 * omega) f += omega;
  return f;
}

/// Floquet modes from a period propagator. Consumes the samples to build the
/// periodic modes in place.
inline FloquetBasis floquet_decompose(PropagationResult&& prop) {
  if (prop.u_samples.empty()) throw std::invalid_argument("floquet_decompose: no samples");
  const Eigen::Index n = prop.u_period.rows();
  const double period = prop.period;
  const double omega = kTwoPi / period;
  const auto ue = linalg::unitary_eigen(prop.u_period);
  if (ue.residual > 1e-7 * std::sqrt(static_cast<double>(std::max<Eigen::Index>(n, 1))))
    throw NumericalError("floquet_decompose: eigendecomposition residual " +
                         std::to_string(ue.residual));

  RVector eps(n);
  for (Eigen::Index i = 0; i < n; ++i)
    eps(i) = fold_quasienergy(-std::arg(ue.eigenvalues(i)) / period, omega);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return eps(a) < eps(b); });

  FloquetBasis out;
  out.period = period;
  out.quasienergies.resize(n);
  CMatrix phi0(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    out.quasienergies(i) = eps(src);
    CVector v = ue.vectors.col(src);
    Eigen::Index imax = 0;
    v.cwiseAbs2().maxCoeff(&imax);
    v *= std::conj(v(imax)) / std::abs(v(imax));
    phi0.col(i) = v;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index next = (i + 1) % n;
    double gap = out.quasienergies(next) - out.quasienergies(i);
    if (next == 0) gap += omega;
    if (n > 1 && gap * period < 1e-10) out.degenerate.push_back(static_cast<int>(i));
  }

  const int samples = static_cast<int>(prop.u_samples.size());
  out.modes_t.resize(static_cast<std::size_t>(samples));
  for (int j = 0; j < samples; ++j) {
    const double t = period * j / samples;
    const CVector phase =
        (out.quasienergies * t).unaryExpr([](double x) { return std::polar(1.0, x); });
    CMatrix modes = prop.u_samples[static_cast<std::size_t>(j)] * phi0;
    prop.u_samples[static_cast<std::size_t>(j)].resize(0, 0);
    out.modes_t[static_cast<std::size_t>(j)] = modes * phase.asDiagonal();
  }
  out.modes_t.front() = phi0;
  return out;
}

inline FloquetBasis floquet_decompose(const PropagationResult& prop) {
  PropagationResult copy = prop;
  return floquet_decompose(std::move(copy));
}

/// Harmonics X_abk of an operator in the Floquet basis, from an S-point DFT
/// over the period. All S bins are kept; `at(k, a, b)` serves |k| <= k_max.
class FourierComponents {
public:
  FourierComponents(std::vector<Complex> bins, int samples, Eigen::Index dim, int k_max,
                    double aliased_fraction)
      : bins_(std::move(bins)), samples_(samples), dim_(dim), k_max_(k_max),
        aliased_fraction_(aliased_fraction) {}

  [[nodiscard]] int k_max() const { return k_max_; }
  [[nodiscard]] int samples() const { return samples_; }
  [[nodiscard]] Eigen::Index dim() const { return dim_; }
  /// Spectral weight outside |k| <= k_max over total weight.
  [[nodiscard]] double aliased_fraction() const { return aliased_fraction_; }

  [[nodiscard]] Complex at(int k, Eigen::Index a, Eigen::Index b) const {
    if (k < -k_max_ || k > k_max_) throw std::out_of_range("FourierComponents: |k| > k_max");
    return raw(k, a, b);
  }
  /// Any DFT bin, k in [-S/2, S/2).
  [[nodiscard]] Complex raw(int k, Eigen::Index a, Eigen::Index b) const {
    const int bin = ((k % samples_) + samples_) % samples_;
    return bins_[static_cast<std::size_t>(bin) * static_cast<std::size_t>(dim_ * dim_) +
                 static_cast<std::size_t>(a + dim_ * b)];
  }
  /// Contiguous dim x dim column-major block of harmonic k.
  [[nodiscard]] const Complex* harmonic(int k) const {
    const int bin = ((k % samples_) + samples_) % samples_;
    return bins_.data() + static_cast<std::size_t>(bin) * static_cast<std::size_t>(dim_ * dim_);
  }

private:
  std::vector<Complex> bins_;
  int samples_;
  Eigen::Index dim_;
  int k_max_;
  double aliased_fraction_;
};

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
} // namespace detail

inline FourierComponents x_fourier_components(const CMatrix& x, const FloquetBasis& basis, int k_max,
                                              double alias_tolerance = 1e-4) {
  const int s = basis.samples();
  const Eigen::Index n = basis.dim();
  if (x.rows() != n || x.cols() != n)
    throw std::invalid_argument("x_fourier_components: operator dimension mismatch");
  if (k_max < 0 || s < 2 * k_max + 2)
    throw std::invalid_argument("x_fourier_components: need samples >= 2 k_max + 2");

  const std::size_t block = static_cast<std::size_t>(n * n);
  std::vector<Complex> bins(block * static_cast<std::size_t>(s));
  const Eigen::SparseMatrix<Complex> xs = x.sparseView();
  for (int j = 0; j < s; ++j) {
    const CMatrix& phi = basis.modes_t[static_cast<std::size_t>(j)];
    const CMatrix xphi = xs * phi;
    Eigen::Map<CMatrix> dst(bins.data() + block * static_cast<std::size_t>(j), n, n);
    dst.noalias() = phi.adjoint() * xphi;
  }

  fftw_plan plan = nullptr;
  {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    int len = s;
    auto* data = reinterpret_cast<fftw_complex*>(bins.data());
    plan = fftw_plan_many_dft(1, &len, static_cast<int>(block), data, nullptr,
                              static_cast<int>(block), 1, data, nullptr, static_cast<int>(block), 1,
                              FFTW_FORWARD, FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw NumericalError("x_fourier_components: FFTW planning failed");
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / s;
  double total = 0.0, outside = 0.0;
  for (int bin = 0; bin < s; ++bin) {
    const int k = bin < (s + 1) / 2 ? bin : bin - s;
    double w = 0.0;
    for (std::size_t i = 0; i < block; ++i) {
      Complex& c = bins[static_cast<std::size_t>(bin) * block + i];
      c *= scale;
      w += std::norm(c);
    }
    total += w;
    if (std::abs(k) > k_max) outside += w;
  }
  const double fraction = total > 0.0 ? outside / total : 0.0;
  if (fraction > alias_tolerance) {
    std::ostringstream msg;
    msg << "x_fourier_components: " << fraction << " of the spectral weight lies beyond k_max = "
        << k_max << "; increase k_max (and samples)";
    throw NumericalError(msg.str());
  }
  return FourierComponents(std::move(bins), s, n, k_max, fraction);
}

enum class SpectralShape { Flat, Ohmic };

struct BathSpec {
  double kappa = kDefaultKappa; // 1/s
  double n_th = 0.0;
  SpectralShape shape = SpectralShape::Flat;
  double omega_ref = 0.0; // rad/s; Ohmic shape is |w| / omega_ref

  void validate() const {
    if (!(kappa > 0.0)) throw std::invalid_argument("BathSpec: kappa must be positive");
    if (!(n_th >= 0.0)) throw std::invalid_argument("BathSpec: n_th must be >= 0");
    if (shape == SpectralShape::Ohmic && !(omega_ref > 0.0))
      throw std::invalid_argument("BathSpec: Ohmic bath needs a positive reference frequency");
  }
};

/// Bath rate for an energy transfer `delta` (rad/s) from system to bath.
inline double bath_rate(double delta, const BathSpec& bath) {
  if (delta == 0.0) return 0.0;
  const double shape = bath.shape == SpectralShape::Flat ? 1.0 : std::abs(delta) / bath.omega_ref;
  return bath.kappa * shape * (delta > 0.0 ? bath.n_th + 1.0 : bath.n_th);
}

struct RateMatrix {
  RMatrix rates;     // rates(b, a): transition a -> b, zero diagonal
  RMatrix generator; // rates - diag(column sums); dp/dt = generator p
};

inline RateMatrix generator_from_rates(RMatrix rates) {
  rates.diagonal().setZero();
  RateMatrix out;
  out.generator = rates;
  out.generator.diagonal() = -rates.colwise().sum().transpose();
  out.rates = std::move(rates);
  return out;
}

inline RateMatrix floquet_rates(const FourierComponents& xk, const FloquetBasis& basis,
                                const BathSpec& bath) {
  bath.validate();
  const Eigen::Index n = basis.dim();
  if (xk.dim() != n) throw std::invalid_argument("floquet_rates: dimension mismatch");
  const double omega = basis.omega();
  const RVector& eps = basis.quasienergies;
  RMatrix rates = RMatrix::Zero(n, n);
  for (int k = -xk.k_max(); k <= xk.k_max(); ++k) {
    const Eigen::Map<const CMatrix> xkm(xk.harmonic(k), n, n);
    for (Eigen::Index b = 0; b < n; ++b)
      for (Eigen::Index a = 0; a < n; ++a) {
        if (a == b) continue;
        const double g = bath_rate(eps(a) - eps(b) + k * omega, bath);
        if (g != 0.0) rates(b, a) += g * std::norm(xkm(a, b));
      }
  }
  if (rates.minCoeff() < 0.0) throw NumericalError("floquet_rates: negative rate");
  return generator_from_rates(std::move(rates));
}

struct SteadyPopulations {
  RVector p;
  int closed_classes = 1; // > 1 means the stationary state is not unique
  bool multiple() const { return closed_classes > 1; }
};

namespace detail {

// Grassmann-Taksar-Heyman state reduction for the stationary vector of an
// irreducible chain; q(i, j) is the rate i -> j. Subtraction-free, so it
// stays accurate when rates span many orders of magnitude.
inline RVector gth_stationary(RMatrix q) {
  const Eigen::Index m = q.rows();
  RVector p = RVector::Zero(m);
  if (m == 1) {
    p(0) = 1.0;
    return p;
  }
  RVector out_rate(m);
  for (Eigen::Index k = m - 1; k >= 1; --k) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) s += q(k, j);
    if (!(s > 0.0)) throw NumericalError("steady_populations: chain is not irreducible");
    out_rate(k) = s;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double f = q(k, j) / s;
      if (f == 0.0) continue;
      for (Eigen::Index i = 0; i < k; ++i) q(i, j) += q(i, k) * f;
    }
  }
  p(0) = 1.0;
  for (Eigen::Index k = 1; k < m; ++k) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) acc += p(i) * q(i, k);
    p(k) = acc / out_rate(k);
  }
  return p / p.sum();
}

// Strongly connected components of the directed graph adj[i] (Tarjan).
inline std::vector<int> strongly_connected(const std::vector<std::vector<int>>& adj, int& count) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<char> on_stack(n, 0);
  int next = 0;
  count = 0;
  std::function<void(int)> visit = [&](int v) {
    index[v] = low[v] = next++;
    stack.push_back(v);
    on_stack[v] = 1;
    for (int w : adj[v]) {
      if (index[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      int w = -1;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = 0;
        comp[w] = count;
      } while (w != v);
      ++count;
    }
  };
  for (int v = 0; v < n; ++v)
    if (index[v] < 0) visit(v);
  return comp;
}

} // namespace detail

/// Stationary populations of dp/dt = L p. Rates below `relative_floor`
/// times the largest rate are treated as absent. When the chain has a single
/// closed class its stationary vector is returned; otherwise the long-time
/// limit starting from `start_mode` (absorption-weighted mixture of the
/// closed classes) is returned and `closed_classes` reports the multiplicity.
inline SteadyPopulations steady_populations(const RMatrix& generator, int start_mode = 0,
                                            double relative_floor = 1e-20) {
  const Eigen::Index n = generator.rows();
  if (n == 0 || generator.cols() != n)
    throw std::invalid_argument("steady_populations: generator must be square and non-empty");
  if (start_mode < 0 || start_mode >= n)
    throw std::invalid_argument("steady_populations: start mode out of range");
  RMatrix q = generator.transpose(); // q(i, j): rate i -> j
  q.diagonal().setZero();
  const double scale = std::max(q.cwiseAbs().maxCoeff(), 1e-300);
  if (q.minCoeff() < -1e-12 * scale)
    throw std::invalid_argument("steady_populations: negative off-diagonal rate");
  const RVector col_sums = generator.colwise().sum().transpose();
  if (col_sums.cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw std::invalid_argument("steady_populations: generator columns do not sum to zero");
  const double floor = relative_floor * scale;
  q = q.unaryExpr([floor](double r) { return r > floor ? r : 0.0; });

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (q(i, j) > 0.0) adj[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
  int ncomp = 0;
  const std::vector<int> comp = detail::strongly_connected(adj, ncomp);
  std::vector<char> closed(static_cast<std::size_t>(ncomp), 1);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j : adj[static_cast<std::size_t>(i)])
      if (comp[static_cast<std::size_t>(i)] != comp[static_cast<std::size_t>(j)])
        closed[static_cast<std::size_t>(comp[static_cast<std::size_t>(i)])] = 0;

  auto members = [&](int c) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i)
      if (comp[static_cast<std::size_t>(i)] == c) idx.push_back(i);
    return idx;
  };
  auto class_stationary = [&](const std::vector<Eigen::Index>& idx) {
    const auto m = static_cast<Eigen::Index>(idx.size());
    RMatrix sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b)
        sub(a, b) = q(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    return detail::gth_stationary(std::move(sub));
  };

  std::vector<int> closed_ids;
  for (int c = 0; c < ncomp; ++c)
    if (closed[static_cast<std::size_t>(c)]) closed_ids.push_back(c);

  SteadyPopulations out;
  out.p = RVector::Zero(n);
  out.closed_classes = static_cast<int>(closed_ids.size());
  auto add_class = [&](int c, double weight) {
    if (weight == 0.0) return;
    const auto idx = members(c);
    const RVector pc = class_stationary(idx);
    for (std::size_t a = 0; a < idx.size(); ++a) out.p(idx[a]) += weight * pc(static_cast<Eigen::Index>(a));
  };

  if (closed_ids.size() == 1) {
    add_class(closed_ids.front(), 1.0);
    return out;
  }
  const int start_comp = comp[static_cast<std::size_t>(start_mode)];
  if (closed[static_cast<std::size_t>(start_comp)]) {
    add_class(start_comp, 1.0);
    return out;
  }
  // Absorption probabilities from the transient states into each closed class:
  // out_i h_i - sum_{j transient} q_ij h_j = sum_{j in c} q_ij.
  std::vector<Eigen::Index> transient;
  std::vector<Eigen::Index> pos(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!closed[static_cast<std::size_t>(comp[static_cast<std::size_t>(i)])]) {
      pos[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(transient.size());
      transient.push_back(i);
    }
  const auto t = static_cast<Eigen::Index>(transient.size());
  RMatrix a = RMatrix::Zero(t, t);
  RMatrix rhs = RMatrix::Zero(t, static_cast<Eigen::Index>(closed_ids.size()));
  for (Eigen::Index r = 0; r < t; ++r) {
    const Eigen::Index i = transient[static_cast<std::size_t>(r)];
    a(r, r) = q.row(i).sum();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (q(i, j) == 0.0) continue;
      if (pos[static_cast<std::size_t>(j)] >= 0) {
        a(r, pos[static_cast<std::size_t>(j)]) -= q(i, j);
      } else {
        const int c = comp[static_cast<std::size_t>(j)];
        const auto col = std::find(closed_ids.begin(), closed_ids.end(), c) - closed_ids.begin();
        rhs(r, col) += q(i, j);
      }
    }
  }
  const RMatrix h = a.fullPivLu().solve(rhs);
  const Eigen::Index r0 = pos[static_cast<std::size_t>(start_mode)];
  for (std::size_t c = 0; c < closed_ids.size(); ++c)
    add_class(closed_ids[c], std::max(0.0, h(r0, static_cast<Eigen::Index>(c))));
  const double total = out.p.sum();
  if (!(total > 0.0)) throw NumericalError("steady_populations: absorption solve failed");
  out.p /= total;
  return out;
}

struct SteadyState {
  RVector populations;       // Floquet-mode populations p_a
  RVector rho_transmon_diag; // diag Tr_cav rho(0), transmon eigenstate populations
  double mean_level = 0.0;
  double p_unconfined = 0.0;
  double cavity_photons = 0.0; // <a^dag a> in the displaced frame
};

/// Partial trace over the resonator of rho(0) = sum_a p_a |phi_a(0)><phi_a(0)|
/// in the |T_k> (x) |F_l> basis.
inline SteadyState reduce_transmon(const RVector& populations, const CMatrix& modes0, int n_transmon,
                                   int n_fock, int confined_count) {
  const Eigen::Index m = static_cast<Eigen::Index>(n_transmon) * n_fock;
  if (modes0.rows() != m || populations.size() != modes0.cols())
    throw std::invalid_argument("reduce_transmon: dimension mismatch");
  SteadyState out;
  out.populations = populations.unaryExpr([](double x) { return x < 0.0 ? 0.0 : x; });
  const double psum = out.populations.sum();
  if (std::abs(psum - 1.0) > 1e-8)
    throw NumericalError("reduce_transmon: populations sum to " + std::to_string(psum));
  out.populations /= psum;

  const RMatrix weight = modes0.cwiseAbs2(); // |<k,l|phi_a>|^2
  const RVector level = weight * out.populations;
  out.rho_transmon_diag = RVector::Zero(n_transmon);
  for (int k = 0; k < n_transmon; ++k)
    for (int l = 0; l < n_fock; ++l) {
      out.rho_transmon_diag(k) += level(k * n_fock + l);
      out.cavity_photons += l * level(k * n_fock + l);
    }
  const double trace = out.rho_transmon_diag.sum();
  if (std::abs(trace - 1.0) > 1e-8)
    throw NumericalError("reduce_transmon: reduced trace deviates from 1 by " +
                         std::to_string(trace - 1.0));
  for (int k = 0; k < n_transmon; ++k) {
    out.mean_level += k * out.rho_transmon_diag(k);
    if (k >= confined_count) out.p_unconfined += out.rho_transmon_diag(k);
  }
  out.p_unconfined = std::clamp(out.p_unconfined, 0.0, 1.0);
  return out;
}

inline SteadyState reduce_transmon(const RVector& populations, const FloquetBasis& basis,
                                   int n_transmon, int n_fock, int confined_count) {
  return reduce_transmon(populations, basis.modes0(), n_transmon, n_fock, confined_count);
}

/// Floquet mode with the largest weight on |T_0> (x) |F_0>.
inline int ground_like_mode(const FloquetBasis& basis) {
  Eigen::Index best = 0;
  basis.modes0().row(0).cwiseAbs2().maxCoeff(&best);
  return static_cast<int>(best);
}

struct FloquetSolution {
  SteadyState state;
  double min_quasienergy_gap = 0.0; // rad/s
  double unitarity_defect = 0.0;
  double aliased_fraction = 0.0;
  int closed_classes = 1;
  int degenerate_pairs = 0;
};

/// Full pipeline for one drive point of the displaced-frame model.
inline FloquetSolution solve_floquet_steady_state(const DisplacedFrameModel& model,
                                                  const FloquetSettings& settings,
                                                  const BathSpec& bath, int confined_count) {
  settings.validate();
  FloquetSolution out;
  PropagationResult prop = propagate_period(model, settings.steps, settings.samples);
  out.unitarity_defect = prop.unitarity_defect;
  FloquetBasis basis = floquet_decompose(std::move(prop));
  out.min_quasienergy_gap = basis.min_gap();
  out.degenerate_pairs = static_cast<int>(basis.degenerate.size());
  RateMatrix rates;
  {
    const FourierComponents xk =
        x_fourier_components(model.operators().x_op, basis, settings.k_max, settings.alias_tolerance);
    out.aliased_fraction = xk.aliased_fraction();
    rates = floquet_rates(xk, basis, bath);
  }
  const SteadyPopulations sp = steady_populations(rates.generator, ground_like_mode(basis));
  out.closed_classes = sp.closed_classes;
  const auto& p = model.operators().params;
  out.state = reduce_transmon(sp.p, basis, p.n_transmon, p.n_fock, confined_count);
  return out;
}

} // namespace tescape
