// Time evolution of the (electronic) x (Fock) state under a laser drive and noise.
//
// The interaction-picture Hamiltonian of one pulse is
//
//   H(t) = sum_s (Omega/2) M_{n+s,n}(eta) |D,n+s><S,n| exp(i((s nu - delta) t + phi)) + h.c.
//
// with t measured from the start of the sequence, so consecutive pulses share one laser
// phase reference. All retained terms of one pulse share nu and delta, which makes the
// generator time-independent in the frame rotating with H0 = nu a^dag a - delta |D><D|.
// Pulses are therefore propagated exactly by diagonalizing that constant Hamiltonian.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "ionlab/error.hpp"
#include "ionlab/quantum_core.hpp"

namespace ionlab {

struct DriveTerm {
  int order = 0;             // sideband order s
  double half_rabi = 0.0;    // Omega / 2, rad/s; multiplied by M_{n+s,n}(eta) per level
  double lamb_dicke = 0.0;   // eta
  double detuning = 0.0;     // s * nu - delta, rad/s
  double phase = 0.0;        // rad

  double coupling(int n) const {
    if (n + order < 0) return 0.0;
    return half_rabi * coupling_strength(n, order, lamb_dicke);
  }
};

/// Laser parameters of one pulse. detuning = w_laser - w_atom.
struct LaserSettings {
  double rabi_frequency = 0.0;  // bare carrier Rabi frequency Omega, rad/s
  double detuning = 0.0;
  double phase = 0.0;
};

struct NoiseModel {
  double dephasing_rate = 0.0;  // coherence decays as exp(-rate t), 1/s
  double d_decay_rate = 0.0;    // 1/s
  double heating_rate = 0.0;    // quanta/s

  bool is_zero() const {
    return dephasing_rate == 0.0 && d_decay_rate == 0.0 && heating_rate == 0.0;
  }
  void validate() const {
    if (dephasing_rate < 0.0 || d_decay_rate < 0.0 || heating_rate < 0.0)
      throw DomainError("noise rates must be non-negative");
  }
  bool operator==(const NoiseModel&) const = default;
};

struct CoolingParams {
  double a_minus = 0.0;  // 1/s
  double a_plus = 0.0;   // 1/s
  double duration = 0.0;  // s

  double steady_state_nbar() const { return a_plus / (a_minus - a_plus); }

  void validate() const {
    if (!(a_plus >= 0.0)) throw DomainError("A+ must be non-negative");
    if (!(a_minus > a_plus)) throw DomainError("cooling requires A- > A+");
    if (!(duration >= 0.0)) throw DomainError("cooling duration must be non-negative");
  }
  bool operator==(const CoolingParams&) const = default;
};

/// Rate coefficients for resolved-sideband cooling in the weak-excitation limit, with the
/// D level broadened to an effective linewidth by the 854 nm repumper. recoil_factor is
/// the angular factor of the spontaneous-emission recoil (2/5 for a dipole pattern).
inline CoolingParams cooling_params_from_drive(double rabi, double eta, double effective_linewidth,
                                               double trap_frequency, double duration,
                                               double recoil_factor = 0.4) {
  const double g = effective_linewidth;
  const double nu = trap_frequency;
  auto lorentz = [g](double detuning) { return g / (g * g + 4.0 * detuning * detuning); };
  const double scale = eta * eta * rabi * rabi;
  CoolingParams p;
  p.a_minus = scale * (lorentz(0.0) + recoil_factor * lorentz(nu));
  p.a_plus = scale * (lorentz(2.0 * nu) + recoil_factor * lorentz(nu));
  p.duration = duration;
  p.validate();
  return p;
}

/// A+ chosen so the steady state has the requested ground-state population.
inline CoolingParams calibrated_cooling_params(double target_p0, double a_minus = 1e4,
                                               double duration = 10e-3) {
  if (!(target_p0 > 0.0 && target_p0 <= 1.0)) throw DomainError("target p0 must lie in (0, 1]");
  const double nbar = 1.0 / target_p0 - 1.0;
  CoolingParams p{a_minus, a_minus * nbar / (1.0 + nbar), duration};
  p.validate();
  return p;
}

/// One term per sideband order s in [-s_max, s_max].
inline std::vector<DriveTerm> build_drive(const LaserSettings& laser, double eta,
                                          double trap_frequency, int s_max) {
  if (eta < 0.0) throw DomainError("Lamb-Dicke parameter must be non-negative");
  if (s_max < 1) throw DomainError("s_max must be at least 1");
  std::vector<DriveTerm> terms;
  terms.reserve(2 * s_max + 1);
  for (int s = -s_max; s <= s_max; ++s) {
    DriveTerm t;
    t.order = s;
    t.half_rabi = 0.5 * laser.rabi_frequency;
    t.lamb_dicke = eta;
    t.detuning = s * trap_frequency - laser.detuning;
    t.phase = laser.phase;
    terms.push_back(t);
  }
  return terms;
}

/// The single term closest to resonance (rotating-wave truncation of the drive).
inline std::vector<DriveTerm> keep_resonant(std::span<const DriveTerm> terms) {
  if (terms.empty()) return {};
  auto it = std::min_element(terms.begin(), terms.end(), [](const auto& a, const auto& b) {
    return std::abs(a.detuning) < std::abs(b.detuning);
  });
  return {*it};
}

/// Duration for a pulse of the given area on the |n> -> |n+s> transition.
inline double pulse_duration_for_area(double area, double rabi, double eta, int order,
                                      int reference_n) {
  const double m = coupling_strength(reference_n, order, eta);
  if (!(rabi > 0.0) || !(m > 0.0)) throw DomainError("transition has zero coupling");
  return area / (rabi * m);
}

namespace detail {

struct RotatingFrame {
  double trap_frequency = 0.0;
  double laser_detuning = 0.0;
};

// Solve s * nu - delta = detuning_s for (nu, delta) shared by all terms.
inline RotatingFrame common_frame(std::span<const DriveTerm> terms) {
  RotatingFrame f;
  if (terms.empty()) return f;
  bool distinct_orders = false;
  for (const auto& t : terms) distinct_orders |= t.order != terms.front().order;
  if (!distinct_orders) {
    f.laser_detuning = -terms.front().detuning;
    for (const auto& t : terms)
      if (t.detuning != terms.front().detuning || t.phase != terms.front().phase)
        throw DomainError("drive terms do not share a common frame");
    return f;
  }
  Eigen::MatrixXd A(terms.size(), 2);
  Eigen::VectorXd b(terms.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    A(i, 0) = terms[i].order;
    A(i, 1) = -1.0;
    b(i) = terms[i].detuning;
    scale = std::max(scale, std::abs(terms[i].detuning));
  }
  const Eigen::Vector2d x = A.colPivHouseholderQr().solve(b);
  if ((A * x - b).lpNorm<Eigen::Infinity>() > 1e-9 * std::max(scale, 1.0))
    throw DomainError("drive terms do not share a common frame");
  f.trap_frequency = x(0);
  f.laser_detuning = x(1);
  return f;
}

// Diagonal of H0 = nu n - delta |D><D|.
inline Eigen::VectorXd frame_energies(const RotatingFrame& f, int n_max) {
  const int dim = 2 * (n_max + 1);
  Eigen::VectorXd h(dim);
  for (int e = 0; e < 2; ++e)
    for (int n = 0; n <= n_max; ++n)
      h(e * (n_max + 1) + n) = f.trap_frequency * n - (e == 1 ? f.laser_detuning : 0.0);
  return h;
}

inline ComplexMatrix rotating_hamiltonian(std::span<const DriveTerm> terms,
                                          const RotatingFrame& f, int n_max) {
  const int dim = 2 * (n_max + 1);
  ComplexMatrix H = ComplexMatrix::Zero(dim, dim);
  H.diagonal() = frame_energies(f, n_max).cast<Complex>();
  for (const auto& term : terms) {
    const Complex c = term.half_rabi * std::polar(1.0, term.phase);
    for (int n = 0; n <= n_max; ++n) {
      const int m = n + term.order;
      if (m < 0 || m > n_max) continue;
      const Complex v = c * displacement_element(m, n, term.lamb_dicke);
      const int row = QuantumState::index(QuantumState::D, m, n_max);
      const int col = QuantumState::index(QuantumState::S, n, n_max);
      H(row, col) += v;
      H(col, row) += std::conj(v);
    }
  }
  return H;
}

inline Complex phase_factor(double angle) {
  return std::polar(1.0, std::remainder(angle, constants::two_pi));
}

// Converts a rotating-frame operator to the interaction picture: U_I = P(t1) U_R P(t0)^dag.
inline ComplexMatrix to_interaction_picture(const ComplexMatrix& u_rot, const Eigen::VectorXd& h,
                                            double t0, double t1) {
  ComplexMatrix u = u_rot;
  for (int j = 0; j < u.rows(); ++j)
    for (int k = 0; k < u.cols(); ++k) u(j, k) *= phase_factor(h(j) * t1 - h(k) * t0);
  return u;
}

}  // namespace detail

/// Interaction-picture propagator from t0 to t0 + duration.
inline ComplexMatrix interaction_propagator(std::span<const DriveTerm> terms, int n_max,
                                            double t0, double duration) {
  if (duration < 0.0) throw DomainError("duration must be non-negative");
  const int dim = 2 * (n_max + 1);
  if (terms.empty() || duration == 0.0) return ComplexMatrix::Identity(dim, dim);
  const auto frame = detail::common_frame(terms);
  const ComplexMatrix H = detail::rotating_hamiltonian(terms, frame, n_max);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(H);
  ComplexVector phases(dim);
  for (int j = 0; j < dim; ++j) phases(j) = detail::phase_factor(-es.eigenvalues()(j) * duration);
  const ComplexMatrix u_rot =
      es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
  return detail::to_interaction_picture(u_rot, detail::frame_energies(frame, n_max), t0,
                                        t0 + duration);
}

/// Closed-system evolution over [t0, t0 + duration].
inline QuantumState evolve_unitary(const QuantumState& state, std::span<const DriveTerm> terms,
                                   double t0, double duration) {
  const ComplexMatrix U = interaction_propagator(terms, state.n_max(), t0, duration);
  ComplexMatrix rho = U * state.rho() * U.adjoint();
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return QuantumState(std::move(rho), state.n_max());
}

namespace detail {

// Sum of Lindblad dissipators, applied elementwise in O(dim^2).
//   dephasing  sqrt(gamma/2) sigma_z
//   decay      sqrt(Gamma) |S><D| (x) 1, phonon conserving
//   heating    sqrt(h) a and sqrt(h) a^dag on the truncated mode
class Dissipator {
 public:
  Dissipator(const NoiseModel& noise, int n_max)
      : N_(n_max + 1), decay_(noise.d_decay_rate), heating_(noise.heating_rate > 0.0) {
    const int dim = 2 * N_;
    const double gp = noise.dephasing_rate, gd = noise.d_decay_rate, h = noise.heating_rate;
    diagonal_ = ComplexMatrix::Zero(dim, dim);
    for (int e = 0; e < 2; ++e)
      for (int f = 0; f < 2; ++f)
        for (int n = 0; n < N_; ++n)
          for (int m = 0; m < N_; ++m) {
            const double cn = n + (n < n_max ? n + 1 : 0);
            const double cm = m + (m < n_max ? m + 1 : 0);
            diagonal_(e * N_ + n, f * N_ + m) =
                -(e != f ? gp : 0.0) - 0.5 * gd * ((e == 1) + (f == 1)) - 0.5 * h * (cn + cm);
          }
    if (heating_ && N_ > 1) {
      shift_ = ComplexMatrix(N_ - 1, N_ - 1);
      for (int n = 0; n + 1 < N_; ++n)
        for (int m = 0; m + 1 < N_; ++m) shift_(n, m) = h * std::sqrt((n + 1.0) * (m + 1.0));
    }
  }

  ComplexMatrix apply(const ComplexMatrix& rho) const {
    ComplexMatrix out = rho.cwiseProduct(diagonal_);
    if (heating_ && N_ > 1) {
      const int k = N_ - 1;
      for (int e = 0; e < 2; ++e)
        for (int f = 0; f < 2; ++f) {
          // a rho a^dag and a^dag rho a move populations along the (n, m) diagonals.
          out.block(e * N_, f * N_, k, k) += shift_.cwiseProduct(rho.block(e * N_ + 1, f * N_ + 1, k, k));
          out.block(e * N_ + 1, f * N_ + 1, k, k) += shift_.cwiseProduct(rho.block(e * N_, f * N_, k, k));
        }
    }
    if (decay_ > 0.0) out.block(0, 0, N_, N_) += decay_ * rho.block(N_, N_, N_, N_);
    return out;
  }

  void rk4_step(ComplexMatrix& rho, double h) const {
    const ComplexMatrix k1 = apply(rho);
    const ComplexMatrix k2 = apply(rho + 0.5 * h * k1);
    const ComplexMatrix k3 = apply(rho + 0.5 * h * k2);
    const ComplexMatrix k4 = apply(rho + h * k3);
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

 private:
  int N_;
  double decay_;
  bool heating_;
  ComplexMatrix diagonal_;  // elementwise rates of the no-jump part and of dephasing
  ComplexMatrix shift_;     // h sqrt((n+1)(m+1))
};

// exp(-i H dt) assembled from the connected blocks of H, each diagonalized separately.
// A single sideband term under the RWA splits into 2x2 blocks, so the propagator is sparse.
class BlockPropagator {
 public:
  explicit BlockPropagator(const ComplexMatrix& H) : dim_(static_cast<int>(H.rows())) {
    std::vector<int> root(dim_);
    std::iota(root.begin(), root.end(), 0);
    auto find = [&](int i) {
      while (root[i] != i) i = root[i] = root[root[i]];
      return i;
    };
    for (int j = 0; j < dim_; ++j)
      for (int k = j + 1; k < dim_; ++k)
        if (H(j, k) != Complex(0.0)) root[find(j)] = find(k);
    std::vector<std::vector<int>> members(dim_);
    for (int j = 0; j < dim_; ++j) members[find(j)].push_back(j);
    for (auto& idx : members) {
      if (idx.empty()) continue;
      const int b = static_cast<int>(idx.size());
      ComplexMatrix sub(b, b);
      for (int j = 0; j < b; ++j)
        for (int k = 0; k < b; ++k) sub(j, k) = H(idx[j], idx[k]);
      Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sub);
      blocks_.push_back({std::move(idx), es.eigenvectors(), es.eigenvalues()});
    }
  }

  // Sparse products pay off only when H splits into small blocks.
  bool sparse() const {
    std::size_t nnz = 0;
    for (const auto& blk : blocks_) nnz += blk.index.size() * blk.index.size();
    return 4 * nnz <= static_cast<std::size_t>(dim_) * static_cast<std::size_t>(dim_);
  }

  Eigen::SparseMatrix<Complex> at(double dt) const {
    std::vector<Eigen::Triplet<Complex>> entries;
    for (const auto& blk : blocks_) {
      const int b = static_cast<int>(blk.index.size());
      ComplexVector ph(b);
      for (int j = 0; j < b; ++j) ph(j) = phase_factor(-blk.energies(j) * dt);
      const ComplexMatrix u = blk.vectors * ph.asDiagonal() * blk.vectors.adjoint();
      for (int j = 0; j < b; ++j)
        for (int k = 0; k < b; ++k) entries.emplace_back(blk.index[j], blk.index[k], u(j, k));
    }
    Eigen::SparseMatrix<Complex> out(dim_, dim_);
    out.setFromTriplets(entries.begin(), entries.end());
    return out;
  }

 private:
  struct Block {
    std::vector<int> index;
    ComplexMatrix vectors;
    Eigen::VectorXd energies;
  };
  int dim_;
  std::vector<Block> blocks_;
};

}  // namespace detail

struct LindbladOptions {
  double tolerance = 1e-9;
  long max_steps = 5'000'000;
  double step_override = 0.0;  // > 0 forces this step (convergence studies)
};

/// Open-system evolution. The coherent part is propagated exactly in the rotating frame and
/// interleaved with fourth-order Runge-Kutta steps of the dissipator (Strang splitting).
/// The dissipators are covariant under H0, so they take the same form in every frame used.
/// With a drive, the step count starts where a step resolves the couplings and doubles until
/// two successive Richardson-extrapolated results agree within the tolerance.
inline QuantumState evolve_lindblad(const QuantumState& state, std::span<const DriveTerm> terms,
                                    const NoiseModel& noise, double t0, double duration,
                                    const LindbladOptions& options = {}) {
  noise.validate();
  if (duration < 0.0) throw DomainError("duration must be non-negative");
  if (noise.is_zero()) return evolve_unitary(state, terms, t0, duration);
  if (duration == 0.0) return state;

  const int n_max = state.n_max();
  const int dim = state.dim();
  const double dissipative_scale = noise.dephasing_rate + noise.d_decay_rate +
                                   noise.heating_rate * (2.0 * n_max + 1.0);
  // RK4 global error ~ (g h)^4 g T / 120 for the dissipator alone.
  const double rk4_step =
      std::min(0.05, std::pow(120.0 * options.tolerance / (dissipative_scale * duration), 0.25)) /
      dissipative_scale;
  auto step_count = [&](double step) {
    const double needed = std::ceil(duration / step);
    if (needed > static_cast<double>(options.max_steps))
      throw IntegratorError("Lindblad step size underflow: " + std::to_string(needed) +
                            " steps required");
    return std::max(1L, static_cast<long>(needed));
  };
  const bool fixed = options.step_override > 0.0;
  long steps = step_count(fixed ? options.step_override : rk4_step);

  ComplexMatrix rho;
  if (terms.empty()) {
    const double h = duration / static_cast<double>(steps);
    rho = state.rho();
    const detail::Dissipator diss(noise, n_max);
    for (long k = 0; k < steps; ++k) diss.rk4_step(rho, h);
  } else {
    const auto frame = detail::common_frame(terms);
    const Eigen::VectorXd energies = detail::frame_energies(frame, n_max);
    const ComplexMatrix H = detail::rotating_hamiltonian(terms, frame, n_max);
    const detail::BlockPropagator propagator(H);

    const detail::Dissipator diss(noise, n_max);
    // Step doubling is reliable only once a step resolves the couplings: h * |offdiag H|_inf <= 1.
    // The diagonal of H commutes with the dissipators and adds no splitting error.
    const double coupling = (H - ComplexMatrix(H.diagonal().asDiagonal())).cwiseAbs().rowwise().sum().maxCoeff();
    if (!fixed) steps = std::max(steps, step_count(1.0 / std::max(coupling, 1.0 / duration)));

    // Into the rotating frame at t0.
    ComplexMatrix start = state.rho();
    for (int j = 0; j < dim; ++j)
      for (int k = 0; k < dim; ++k)
        start(j, k) *= detail::phase_factor(-(energies(j) - energies(k)) * t0);

    auto strang = [&]<typename Matrix>(long n) {
      const double h = duration / static_cast<double>(n);
      const Matrix half = propagator.at(0.5 * h), full = propagator.at(h);
      const Matrix half_adj = half.adjoint(), full_adj = full.adjoint();
      ComplexMatrix r = half * start;
      r = r * half_adj;
      ComplexMatrix tmp(dim, dim);
      for (long k = 0; k < n; ++k) {
        diss.rk4_step(r, h);
        const bool last = k + 1 == n;
        tmp = (last ? half : full) * r;
        r = tmp * (last ? half_adj : full_adj);
      }
      return r;
    };
    const bool sparse = propagator.sparse();
    auto integrate = [&](long n) {
      return sparse ? strang.template operator()<Eigen::SparseMatrix<Complex>>(n)
                    : strang.template operator()<ComplexMatrix>(n);
    };

    rho = integrate(steps);
    if (!fixed) {
      // Strang error is even in h: (4 rho_2N - rho_N) / 3 removes the h^2 term.
      ComplexMatrix extrapolated;
      for (;;) {
        if (2 * steps > options.max_steps)
          throw IntegratorError("Lindblad splitting did not reach tolerance within " +
                                std::to_string(options.max_steps) + " steps");
        steps *= 2;
        ComplexMatrix finer = integrate(steps);
        ComplexMatrix next = (4.0 * finer - rho) / 3.0;
        const double change = extrapolated.size() == 0 ? (finer - rho).cwiseAbs().maxCoeff()
                                                       : (next - extrapolated).cwiseAbs().maxCoeff();
        rho = std::move(finer);
        extrapolated = std::move(next);
        if (change <= options.tolerance) break;
      }
      rho = std::move(extrapolated);
    }

    const double t1 = t0 + duration;
    for (int j = 0; j < dim; ++j)
      for (int k = 0; k < dim; ++k)
        rho(j, k) *= detail::phase_factor((energies(j) - energies(k)) * t1);
  }

  rho = 0.5 * (rho + rho.adjoint()).eval();
  const double trace = rho.trace().real();
  if (std::abs(trace - 1.0) > 1e-8)
    throw IntegratorError("Lindblad evolution lost trace (" + std::to_string(trace) + ")");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> check(rho, Eigen::EigenvaluesOnly);
  if (check.eigenvalues().minCoeff() < -1e-6)
    throw IntegratorError("Lindblad evolution violated positivity beyond tolerance");
  return QuantumState(std::move(rho), n_max, QuantumState::unchecked);
}

/// Generator of the sideband-cooling rate equations on 0..n_max:
///   dp_n/dt = A-[(n+1)p_{n+1} - n p_n] + A+[n p_{n-1} - (n+1) p_n]
/// with the n_max -> n_max + 1 channel removed so probability is conserved.
inline Eigen::MatrixXd cooling_rate_matrix(const CoolingParams& params, int n_max) {
  const int N = n_max + 1;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, N);
  for (int n = 0; n < N; ++n) {
    if (n > 0) {
      W(n - 1, n) += params.a_minus * n;
      W(n, n) -= params.a_minus * n;
    }
    if (n < n_max) {
      W(n + 1, n) += params.a_plus * (n + 1);
      W(n, n) -= params.a_plus * (n + 1);
    }
  }
  return W;
}

inline PhononDistribution sideband_cool(const PhononDistribution& distribution,
                                        const CoolingParams& params) {
  params.validate();
  const int n_max = distribution.n_max();
  const auto& p0 = distribution.probabilities();
  const Eigen::MatrixXd W = cooling_rate_matrix(params, n_max) * params.duration;
  const Eigen::VectorXd p =
      W.exp() * Eigen::Map<const Eigen::VectorXd>(p0.data(), static_cast<Eigen::Index>(p0.size()));
  std::vector<double> out(p.size());
  double sum = 0.0;
  for (int n = 0; n < p.size(); ++n) sum += (out[n] = std::max(0.0, p(n)));
  for (double& x : out) x /= sum;
  return PhononDistribution(std::move(out));
}

struct GateSpeedResult {
  std::vector<double> times;            // s
  std::vector<double> infidelity;       // 1 - |<D,1|psi>|^2 at the best detuning
  std::vector<double> envelope;         // running maximum from the right
  std::vector<double> best_detuning;    // rad/s, laser detuning used per point
  double t_min = std::numeric_limits<double>::infinity();  // inf when unreachable
  bool reachable() const { return std::isfinite(t_min); }
};

namespace detail {

inline double blue_pi_infidelity(double t, double eta, double trap_frequency, double detuning,
                                 int n_max) {
  const double rabi = constants::pi / (t * coupling_strength(0, 1, eta));
  const auto terms = build_drive({rabi, detuning, 0.0}, eta, trap_frequency, 1);
  const ComplexMatrix U = interaction_propagator(terms, n_max, 0.0, t);
  const Complex amp = U(QuantumState::index(QuantumState::D, 1, n_max),
                        QuantumState::index(QuantumState::S, 0, n_max));
  return 1.0 - std::norm(amp);
}

}  // namespace detail

/// For every pulse length t, sets Omega so the resonant blue-sideband pi time is t, drives
/// |S,0> with the carrier and both first sidebands retained, and reports 1 - |<D,1|psi>|^2.
/// The laser detuning is re-centred on the light-shifted sideband resonance for each t.
inline GateSpeedResult gate_speed_scan(double trap_frequency, double eta, double fidelity_target,
                                       std::span<const double> t_grid, int n_max = 6) {
  if (!(fidelity_target > 0.0 && fidelity_target < 1.0))
    throw DomainError("fidelity target must lie in (0, 1)");
  if (t_grid.empty()) throw DomainError("time grid is empty");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > 0.0)) throw DomainError("gate times must be positive");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw DomainError("gate times must ascend");
  }
  if (!(eta > 0.0)) throw DomainError("Lamb-Dicke parameter must be positive");

  GateSpeedResult r;
  r.times.assign(t_grid.begin(), t_grid.end());
  for (double t : t_grid) {
    const double rabi = constants::pi / (t * coupling_strength(0, 1, eta));
    const double sideband_rabi = constants::pi / t;
    const double shift = 2.0 * rabi * rabi / trap_frequency;
    auto f = [&](double d) {
      return detail::blue_pi_infidelity(t, eta, trap_frequency, d, n_max);
    };
    // Coarse search over the light-shift window, then golden section.
    const double lo = trap_frequency - shift - 3.0 * sideband_rabi;
    const double hi = trap_frequency + shift + 3.0 * sideband_rabi;
    const double coarse = sideband_rabi / 4.0;
    double best = trap_frequency;
    double best_val = f(best);
    for (double d = lo; d <= hi; d += coarse) {
      const double v = f(d);
      if (v < best_val) best_val = v, best = d;
    }
    double a = best - coarse;
    double b = best + coarse;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int it = 0; it < 60 && (b - a) > 1e-9 * sideband_rabi; ++it) {
      if (fc < fd) {
        b = d, d = c, fd = fc;
        c = b - g * (b - a), fc = f(c);
      } else {
        a = c, c = d, fc = fd;
        d = a + g * (b - a), fd = f(d);
      }
    }
    const double mid = 0.5 * (a + b);
    const double fm = f(mid);
    if (fm < best_val) best_val = fm, best = mid;
    r.infidelity.push_back(std::max(0.0, best_val));
    r.best_detuning.push_back(best);
  }

  const std::size_t n = r.times.size();
  r.envelope.resize(n);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) r.envelope[i] = running = std::max(running, r.infidelity[i]);

  const double target = 1.0 - fidelity_target;
  for (std::size_t i = 0; i < n; ++i) {
    if (r.envelope[i] > target) continue;
    if (i == 0) {
      r.t_min = r.times[0];
    } else {
      // Interpolate the crossing in log(envelope).
      const double y0 = std::log(std::max(r.envelope[i - 1], 1e-300));
      const double y1 = std::log(std::max(r.envelope[i], 1e-300));
      const double yt = std::log(target);
      const double frac = (y0 == y1) ? 1.0 : (y0 - yt) / (y0 - y1);
      r.t_min = r.times[i - 1] + std::clamp(frac, 0.0, 1.0) * (r.times[i] - r.times[i - 1]);
    }
    break;
  }
  return r;
}

}  // namespace ionlab
