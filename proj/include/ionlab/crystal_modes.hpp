// Equilibrium configuration and normal modes of a linear Coulomb crystal.
//
// Positions are in units of the Coulomb length l = (e^2 / (4 pi eps0 M w_axial^2))^(1/3).
// The dimensionless potential is V(u) = sum_m u_m^2 / 2 + sum_{m<n} 1 / |u_m - u_n|.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ionlab/constants.hpp"
#include "ionlab/error.hpp"
#include "ionlab/quantum_core.hpp"

namespace ionlab {

struct CrystalEquilibrium {
  int n_ions = 0;
  std::vector<double> u;      // dimensionless, ascending
  double length_scale = 0.0;  // m; zero when no physical scale was requested
  double residual = 0.0;      // max |force| at the solution
};

struct Mode {
  double frequency = 0.0;  // rad/s
  Eigen::VectorXd eigenvector;
  std::string label;  // com, breathing, axial-k, radial-com, rocking, radial-k
  Axis axis = Axis::z;

  std::string name() const { return std::string(1, axis_name(axis)) + "." + label; }
};

struct ModeSpectrum {
  std::vector<Mode> modes;
  bool stable = true;
  std::vector<std::string> warnings;

  const Mode* find(Axis axis, const std::string& label) const {
    for (const auto& m : modes)
      if (m.axis == axis && m.label == label) return &m;
    return nullptr;
  }

  void append(const ModeSpectrum& other) {
    modes.insert(modes.end(), other.modes.begin(), other.modes.end());
    stable = stable && other.stable;
    warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
  }
};

struct SidebandLine {
  double detuning_magnitude = 0.0;  // rad/s
  std::vector<std::pair<std::string, int>> composition;  // (mode name, coefficient)
  int order = 0;

  std::string describe() const {
    std::string s;
    for (const auto& [name, c] : composition) {
      if (!s.empty() || c < 0) s += c < 0 ? " - " : " + ";
      if (std::abs(c) != 1) s += std::to_string(std::abs(c)) + "*";
      s += name;
    }
    return s;
  }
};

namespace detail {

inline double crystal_potential(const std::vector<double>& u) {
  double v = 0.0;
  for (std::size_t m = 0; m < u.size(); ++m) {
    v += 0.5 * u[m] * u[m];
    for (std::size_t n = m + 1; n < u.size(); ++n) v += 1.0 / std::abs(u[m] - u[n]);
  }
  return v;
}

inline Eigen::VectorXd crystal_force_residual(const std::vector<double>& u) {
  const int N = static_cast<int>(u.size());
  Eigen::VectorXd g(N);
  for (int m = 0; m < N; ++m) {
    double gm = u[m];
    for (int n = 0; n < N; ++n) {
      if (n == m) continue;
      const double d = u[m] - u[n];
      gm -= (d > 0 ? 1.0 : -1.0) / (d * d);
    }
    g(m) = gm;
  }
  return g;
}

// Axial Hessian of V; also the axial mode matrix in units of w_axial^2.
inline Eigen::MatrixXd axial_hessian(const std::vector<double>& u) {
  const int N = static_cast<int>(u.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (int m = 0; m < N; ++m) {
    A(m, m) = 1.0;
    for (int n = 0; n < N; ++n) {
      if (n == m) continue;
      const double c = 1.0 / std::pow(std::abs(u[m] - u[n]), 3);
      A(m, m) += 2.0 * c;
      A(m, n) = -2.0 * c;
    }
  }
  return A;
}

inline void fix_sign(Eigen::VectorXd& v) {
  // Largest-index significant component positive: COM stays uniform-positive and the
  // breathing mode aligns with u.
  for (int i = static_cast<int>(v.size()) - 1; i >= 0; --i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

}  // namespace detail

/// Coulomb length scale for the given species and axial frequency, m.
inline double coulomb_length(const IonSpecies& species, double axial_frequency) {
  if (!(axial_frequency > 0.0)) throw DomainError("axial frequency must be positive");
  const double e2 = constants::elementary_charge * constants::elementary_charge;
  return std::cbrt(e2 / (4.0 * constants::pi * constants::vacuum_permittivity * species.mass *
                         axial_frequency * axial_frequency));
}

/// Damped Newton iteration on the force balance, from an equally spaced seed.
inline CrystalEquilibrium equilibrium_positions(int n_ions) {
  if (n_ions < 1 || n_ions > 32) throw DomainError("n_ions must lie in [1, 32]");
  CrystalEquilibrium eq;
  eq.n_ions = n_ions;
  eq.u.assign(n_ions, 0.0);
  if (n_ions == 1) return eq;

  const double spacing = 2.0 * std::pow(n_ions, 0.56) / n_ions;
  for (int i = 0; i < n_ions; ++i) eq.u[i] = (i - 0.5 * (n_ions - 1)) * spacing;

  constexpr int max_iterations = 200;
  double residual = detail::crystal_force_residual(eq.u).lpNorm<Eigen::Infinity>();
  for (int it = 0; it < max_iterations && residual > 1e-14; ++it) {
    const Eigen::VectorXd g = detail::crystal_force_residual(eq.u);
    const Eigen::VectorXd step = detail::axial_hessian(eq.u).ldlt().solve(-g);
    const double v0 = detail::crystal_potential(eq.u);
    double t = 1.0;
    std::vector<double> trial(n_ions);
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      for (int i = 0; i < n_ions; ++i) trial[i] = eq.u[i] + t * step(i);
      const bool ordered = std::is_sorted(trial.begin(), trial.end()) &&
                           std::adjacent_find(trial.begin(), trial.end()) == trial.end();
      if (ordered && detail::crystal_potential(trial) <= v0 + 1e-14 * std::abs(v0)) break;
    }
    eq.u = trial;
    residual = detail::crystal_force_residual(eq.u).lpNorm<Eigen::Infinity>();
  }

  // Remove rounding asymmetry, then polish.
  for (int i = 0; i < n_ions / 2; ++i) {
    const double a = 0.5 * (eq.u[n_ions - 1 - i] - eq.u[i]);
    eq.u[i] = -a;
    eq.u[n_ions - 1 - i] = a;
  }
  if (n_ions % 2 == 1) eq.u[n_ions / 2] = 0.0;
  eq.residual = detail::crystal_force_residual(eq.u).lpNorm<Eigen::Infinity>();
  if (eq.residual > 1e-12)
    throw SolverError("crystal equilibrium did not converge (residual " +
                          std::to_string(eq.residual) + ")",
                      eq.residual);
  return eq;
}

inline CrystalEquilibrium equilibrium_positions(int n_ions, const IonSpecies& species,
                                                double axial_frequency) {
  auto eq = equilibrium_positions(n_ions);
  eq.length_scale = coulomb_length(species, axial_frequency);
  return eq;
}

/// Modes along the crystal axis. Eigenvalues of the axial Hessian times w_axial^2.
inline ModeSpectrum axial_modes(int n_ions, double axial_frequency, Axis axis = Axis::z) {
  if (!(axial_frequency > 0.0)) throw DomainError("axial frequency must be positive");
  const auto eq = equilibrium_positions(n_ions);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::axial_hessian(eq.u));
  ModeSpectrum spectrum;
  for (int k = 0; k < n_ions; ++k) {
    Mode m;
    m.frequency = std::sqrt(es.eigenvalues()(k)) * axial_frequency;
    m.eigenvector = es.eigenvectors().col(k);
    detail::fix_sign(m.eigenvector);
    m.label = k == 0 ? "com" : k == 1 ? "breathing" : "axial-" + std::to_string(k + 1);
    m.axis = axis;
    spectrum.modes.push_back(std::move(m));
  }
  return spectrum;
}

/// Transverse modes for confinement radial_frequency perpendicular to the crystal axis.
/// Unstable (non-positive eigenvalue) modes are flagged and given zero frequency.
inline ModeSpectrum radial_modes(int n_ions, double radial_frequency, double axial_frequency,
                                 Axis axis = Axis::x) {
  if (!(radial_frequency > 0.0) || !(axial_frequency > 0.0))
    throw DomainError("trap frequencies must be positive");
  const auto eq = equilibrium_positions(n_ions);
  const double beta2 = std::pow(radial_frequency / axial_frequency, 2);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n_ions, n_ions);
  for (int m = 0; m < n_ions; ++m) {
    K(m, m) = beta2;
    for (int n = 0; n < n_ions; ++n) {
      if (n == m) continue;
      const double c = 1.0 / std::pow(std::abs(eq.u[m] - eq.u[n]), 3);
      K(m, m) -= c;
      K(m, n) = c;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  ModeSpectrum spectrum;
  for (int k = 0; k < n_ions; ++k) {
    const int rank_from_top = n_ions - k;  // 1 = COM
    Mode m;
    const double lambda = es.eigenvalues()(k);
    if (lambda <= 0.0) {
      spectrum.stable = false;
      spectrum.warnings.push_back(std::string("unstable transverse mode along ") +
                                  axis_name(axis) + " (eigenvalue " + std::to_string(lambda) +
                                  ")");
      m.frequency = 0.0;
    } else {
      m.frequency = std::sqrt(lambda) * axial_frequency;
    }
    m.eigenvector = es.eigenvectors().col(k);
    detail::fix_sign(m.eigenvector);
    m.label = rank_from_top == 1   ? "radial-com"
              : rank_from_top == 2 ? "rocking"
                                   : "radial-" + std::to_string(rank_from_top);
    m.axis = axis;
    spectrum.modes.push_back(std::move(m));
  }
  return spectrum;
}

/// The crystal lies along the weakest confinement axis.
inline Axis crystal_axis(const TrapConfig& trap) {
  int best = 0;
  for (int a = 1; a < 3; ++a)
    if (trap.secular_frequencies[a] < trap.secular_frequencies[best]) best = a;
  return static_cast<Axis>(best);
}

/// All 3N modes of an n-ion string in the given trap, axial block first.
inline ModeSpectrum crystal_spectrum(int n_ions, const TrapConfig& trap) {
  const Axis along = crystal_axis(trap);
  const double w_axial = trap.frequency(along);
  ModeSpectrum spectrum = axial_modes(n_ions, w_axial, along);
  for (int a = 0; a < 3; ++a) {
    const Axis ax = static_cast<Axis>(a);
    if (ax == along) continue;
    spectrum.append(radial_modes(n_ions, trap.frequency(ax), w_axial, ax));
  }
  return spectrum;
}

/// Per-ion Lamb-Dicke factors k c_axis b_i sqrt(hbar / (2 m w)) for one mode (signed).
inline std::vector<double> mode_lamb_dicke(const Mode& mode, const IonSpecies& species,
                                           const TrapConfig& trap) {
  if (!(mode.frequency > 0.0)) throw DomainError("mode frequency must be positive");
  const double scale = species.wavenumber() * trap.cosine(mode.axis) *
                       std::sqrt(constants::hbar / (2.0 * species.mass * mode.frequency));
  std::vector<double> eta(mode.eigenvector.size());
  for (int i = 0; i < mode.eigenvector.size(); ++i) eta[i] = scale * mode.eigenvector(i);
  return eta;
}

/// Physical axial positions u * l, m.
inline std::vector<double> physical_spacing(int n_ions, double axial_frequency,
                                            const IonSpecies& species) {
  const auto eq = equilibrium_positions(n_ions, species, axial_frequency);
  std::vector<double> x(eq.u.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = eq.u[i] * eq.length_scale;
  return x;
}

/// Every |sum_k c_k w_k| with 1 <= sum |c_k| <= max_order. Lines closer than 1e-6
/// relative are merged, keeping the lowest-order composition; zero-frequency
/// combinations (degenerate differences) are dropped.
inline std::vector<SidebandLine> identify_sidebands(const ModeSpectrum& spectrum,
                                                    int max_order = 2) {
  std::vector<const Mode*> modes;
  double w_max = 0.0;
  for (const auto& m : spectrum.modes) {
    if (m.frequency <= 0.0) continue;
    modes.push_back(&m);
    w_max = std::max(w_max, m.frequency);
  }
  if (modes.empty()) throw DomainError("mode spectrum is empty");
  constexpr double rel_tol = 1e-6;

  std::vector<SidebandLine> candidates;
  std::vector<int> c(modes.size(), 0);
  std::function<void(std::size_t, int)> recurse = [&](std::size_t k, int budget) {
    if (k == modes.size()) {
      int order = 0;
      int first = 0;
      double f = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) {
        order += std::abs(c[i]);
        if (first == 0 && c[i] != 0) first = c[i];
        f += c[i] * modes[i]->frequency;
      }
      if (order == 0 || first < 0) return;  // each +/- pair listed once
      if (std::abs(f) <= rel_tol * w_max) return;
      SidebandLine line;
      line.detuning_magnitude = std::abs(f);
      line.order = order;
      const int sign = f < 0 ? -1 : 1;
      for (std::size_t i = 0; i < c.size(); ++i)
        if (c[i] != 0) line.composition.emplace_back(modes[i]->name(), sign * c[i]);
      candidates.push_back(std::move(line));
      return;
    }
    for (int v = -budget; v <= budget; ++v) {
      c[k] = v;
      recurse(k + 1, budget - std::abs(v));
    }
    c[k] = 0;
  };
  recurse(0, max_order);

  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.order < b.order;
  });
  std::vector<SidebandLine> lines;
  for (auto& cand : candidates) {
    const bool duplicate = std::any_of(lines.begin(), lines.end(), [&](const SidebandLine& l) {
      return std::abs(l.detuning_magnitude - cand.detuning_magnitude) <=
             rel_tol * std::max(l.detuning_magnitude, cand.detuning_magnitude);
    });
    if (!duplicate) lines.push_back(std::move(cand));
  }
  std::stable_sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) {
    return a.detuning_magnitude < b.detuning_magnitude;
  });
  return lines;
}

}  // namespace ionlab
