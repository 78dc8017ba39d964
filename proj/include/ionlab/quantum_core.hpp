// Truncated Hilbert-space primitives for one ion coupled to one motional mode.
//
// The state space is (electronic two-level) x (Fock space truncated at n_max).
// Basis index of |e, n> is e * (n_max + 1) + n with e = 0 for |S> and e = 1 for |D>.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "ionlab/constants.hpp"
#include "ionlab/error.hpp"

namespace ionlab {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

enum class Axis { x = 0, y = 1, z = 2 };

inline char axis_name(Axis a) { return "xyz"[static_cast<int>(a)]; }

struct IonSpecies {
  std::string name;
  double mass = 0.0;                // kg
  double qubit_wavelength = 0.0;    // m
  double dipole_linewidth = 0.0;    // rad/s
  double d_state_lifetime = 0.0;    // s

  static IonSpecies from_amu(std::string name, double mass_amu, double wavelength,
                             double linewidth, double lifetime) {
    IonSpecies s{std::move(name), mass_amu * constants::atomic_mass_unit, wavelength, linewidth,
                 lifetime};
    s.validate();
    return s;
  }

  /// 40Ca+ with the S1/2 - D5/2 qubit at 729 nm and the 397 nm cooling line.
  static IonSpecies calcium40() {
    return from_amu("ca40", 39.962590863, 729.147 * units::nm, 20.0 * units::MHz, 1.0);
  }

  double wavenumber() const { return constants::two_pi / qubit_wavelength; }

  void validate() const {
    if (!(mass > 0.0)) throw DomainError("ion mass must be positive");
    if (!(qubit_wavelength > 0.0)) throw DomainError("qubit wavelength must be positive");
    if (!(dipole_linewidth > 0.0)) throw DomainError("dipole linewidth must be positive");
    if (!(d_state_lifetime > 0.0)) throw DomainError("D-state lifetime must be positive");
  }

  bool operator==(const IonSpecies&) const = default;
};

struct TrapConfig {
  std::array<double, 3> secular_frequencies{};  // rad/s, indexed by Axis
  std::array<double, 3> laser_direction_cosines{};

  double frequency(Axis a) const { return secular_frequencies[static_cast<int>(a)]; }
  double cosine(Axis a) const { return laser_direction_cosines[static_cast<int>(a)]; }

  void validate() const {
    for (double w : secular_frequencies)
      if (!(w > 0.0)) throw DomainError("secular frequencies must be positive");
    double norm = 0.0;
    for (double c : laser_direction_cosines) norm += c * c;
    if (std::abs(norm - 1.0) > 1e-12)
      throw DomainError("laser direction cosines must form a unit vector");
  }

  bool operator==(const TrapConfig&) const = default;
};

struct FockSpace {
  int n_max = 1;

  explicit FockSpace(int n) : n_max(n) {
    if (n_max < 1) throw DomainError("Fock truncation n_max must be at least 1");
  }
  int dim() const { return n_max + 1; }
  int joint_dim() const { return 2 * (n_max + 1); }
};

/// Truncation heuristic for a mode with mean occupation nbar.
inline int default_n_max(double nbar) {
  return std::max(20, static_cast<int>(std::ceil(4.0 * nbar + 20.0)));
}

class PhononDistribution {
 public:
  PhononDistribution() = default;
  explicit PhononDistribution(std::vector<double> p) : p_(std::move(p)) { validate(); }

  static PhononDistribution fock(int n, int n_max) {
    if (n < 0 || n > n_max) throw DomainError("Fock index outside truncation");
    std::vector<double> p(n_max + 1, 0.0);
    p[n] = 1.0;
    return PhononDistribution(std::move(p));
  }

  const std::vector<double>& probabilities() const { return p_; }
  double operator[](std::size_t n) const { return n < p_.size() ? p_[n] : 0.0; }
  int n_max() const { return static_cast<int>(p_.size()) - 1; }
  double ground() const { return p_.empty() ? 0.0 : p_[0]; }

  double mean() const {
    double m = 0.0;
    for (std::size_t n = 0; n < p_.size(); ++n) m += static_cast<double>(n) * p_[n];
    return m;
  }

  void validate() const {
    if (p_.size() < 2) throw DomainError("phonon distribution needs at least two levels");
    double sum = 0.0;
    for (double x : p_) {
      if (!(x >= 0.0)) throw DomainError("phonon probabilities must be non-negative");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-8) throw DomainError("phonon probabilities must sum to one");
  }

 private:
  std::vector<double> p_;
};

/// Density matrix on (electronic) x (Fock), see the basis ordering at the top of this file.
class QuantumState {
 public:
  enum Level { S = 0, D = 1 };
  struct Unchecked {};
  static constexpr Unchecked unchecked{};

  QuantumState(ComplexMatrix rho, int n_max) : QuantumState(std::move(rho), n_max, unchecked) {
    validate();
  }

  // Skips the invariant checks; for evolvers that apply their own tolerances.
  QuantumState(ComplexMatrix rho, int n_max, Unchecked) : rho_(std::move(rho)), n_max_(n_max) {
    FockSpace space(n_max);
    if (rho_.rows() != space.joint_dim() || rho_.cols() != space.joint_dim())
      throw DomainError("density matrix dimension does not match truncation");
  }

  static QuantumState pure(const ComplexVector& psi, int n_max) {
    ComplexVector v = psi / psi.norm();
    return QuantumState(v * v.adjoint(), n_max);
  }

  static QuantumState basis(Level e, int n, int n_max) {
    FockSpace space(n_max);
    if (n < 0 || n > n_max) throw DomainError("Fock index outside truncation");
    ComplexVector psi = ComplexVector::Zero(space.joint_dim());
    psi(index(e, n, n_max)) = 1.0;
    return pure(psi, n_max);
  }

  static QuantumState ground(int n_max) { return basis(S, 0, n_max); }

  /// |S><S| (x) diag(p)
  static QuantumState electronic_ground(const PhononDistribution& dist) {
    const int n_max = dist.n_max();
    ComplexMatrix rho = ComplexMatrix::Zero(2 * (n_max + 1), 2 * (n_max + 1));
    for (int n = 0; n <= n_max; ++n) rho(n, n) = dist[n];
    return QuantumState(std::move(rho), n_max);
  }

  static int index(Level e, int n, int n_max) { return static_cast<int>(e) * (n_max + 1) + n; }

  const ComplexMatrix& rho() const { return rho_; }
  int n_max() const { return n_max_; }
  int dim() const { return static_cast<int>(rho_.rows()); }

  double population(Level e) const {
    double p = 0.0;
    for (int n = 0; n <= n_max_; ++n) p += rho_(index(e, n, n_max_), index(e, n, n_max_)).real();
    return p;
  }

  double excited_population() const { return population(D); }

  /// Motional populations with the electronic degree of freedom traced out.
  std::vector<double> phonon_populations() const {
    std::vector<double> p(n_max_ + 1);
    for (int n = 0; n <= n_max_; ++n)
      p[n] = std::max(0.0, rho_(index(S, n, n_max_), index(S, n, n_max_)).real() +
                               rho_(index(D, n, n_max_), index(D, n, n_max_)).real());
    return p;
  }

  double mean_phonon_number() const {
    auto p = phonon_populations();
    double m = 0.0;
    for (int n = 0; n <= n_max_; ++n) m += n * p[n];
    return m;
  }

  double hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }
  double trace_error() const { return std::abs(rho_.trace() - Complex(1.0, 0.0)); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (rho_ + rho_.adjoint()),
                                                    Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  void validate(double herm_tol = 1e-10, double trace_tol = 1e-8, double pos_tol = 1e-8) const {
    if (hermiticity_error() > herm_tol) throw DomainError("density matrix is not Hermitian");
    if (trace_error() > trace_tol) throw DomainError("density matrix trace differs from one");
    if (min_eigenvalue() < -pos_tol) throw DomainError("density matrix is not positive");
  }

 private:
  ComplexMatrix rho_;
  int n_max_;
};

/// eta = k * projection * sqrt(hbar / (2 m omega)).
inline double lamb_dicke(const IonSpecies& species, double mode_frequency, double projection) {
  if (!(mode_frequency > 0.0)) throw DomainError("mode frequency must be positive");
  if (std::abs(projection) > 1.0 + 1e-12) throw DomainError("|projection| must not exceed 1");
  return std::abs(species.wavenumber() * projection) *
         std::sqrt(constants::hbar / (2.0 * species.mass * mode_frequency));
}

/// Recoil frequency hbar k^2 / (2 m) of the qubit transition, rad/s.
inline double recoil_frequency(const IonSpecies& species) {
  const double k = species.wavenumber();
  return constants::hbar * k * k / (2.0 * species.mass);
}

/// Generalized Laguerre polynomial L_n^alpha(x) by the three-term recurrence.
inline double laguerre(int n, int alpha, double x) {
  if (n < 0) throw DomainError("Laguerre degree must be non-negative");
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = 1.0 + alpha - x;
  for (int k = 1; k < n; ++k) {
    const double next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// <m| exp(i eta (a + a^dagger)) |n>, including the i^|m-n| phase and the Laguerre sign.
inline Complex displacement_element(int m, int n, double eta) {
  if (m < 0 || n < 0) throw DomainError("Fock level does not exist");
  const int lo = std::min(m, n);
  const int hi = std::max(m, n);
  const int ds = hi - lo;
  double ratio = 1.0;  // sqrt(lo! / hi!)
  for (int k = lo + 1; k <= hi; ++k) ratio /= std::sqrt(static_cast<double>(k));
  const double magnitude =
      std::exp(-0.5 * eta * eta) * std::pow(eta, ds) * ratio * laguerre(lo, ds, eta * eta);
  static constexpr std::array<Complex, 4> i_pow{Complex(1, 0), Complex(0, 1), Complex(-1, 0),
                                                Complex(0, -1)};
  return magnitude * i_pow[ds % 4];
}

/// |M_{n,n+s}(eta)|, the relative coupling of |n> -> |n+s>.
inline double coupling_strength(int n, int s, double eta) {
  if (n < 0) throw DomainError("Fock index must be non-negative");
  if (n + s < 0) throw DomainError("target Fock level n+s does not exist");
  if (eta < 0.0) throw DomainError("Lamb-Dicke parameter must be non-negative");
  return std::abs(displacement_element(n + s, n, eta));
}

/// Untruncated thermal weight nbar^n / (1+nbar)^(n+1).
inline double thermal_weight(int n, double nbar) {
  if (nbar < 0.0) throw DomainError("mean phonon number must be non-negative");
  if (nbar == 0.0) return n == 0 ? 1.0 : 0.0;
  return std::exp(n * std::log(nbar) - (n + 1) * std::log1p(nbar));
}

/// Geometric (thermal) distribution on 0..n_max. The ratio p_{n+1}/p_n is chosen so the
/// truncated distribution keeps the requested mean; for n_max >> nbar this is the plain
/// renormalized thermal law.
inline PhononDistribution thermal_distribution(double nbar, int n_max) {
  if (nbar < 0.0) throw DomainError("mean phonon number must be non-negative");
  FockSpace space(n_max);
  if (nbar >= 0.5 * n_max)
    throw DomainError("truncation too small for a thermal state with this mean");
  std::vector<double> p(space.dim(), 0.0);
  if (nbar == 0.0) {
    p[0] = 1.0;
    return PhononDistribution(std::move(p));
  }
  auto fill = [&](double q) {
    double sum = 0.0, w = 1.0;
    for (int n = 0; n <= n_max; ++n, w *= q) {
      p[n] = w;
      sum += w;
    }
    double mean = 0.0;
    for (int n = 0; n <= n_max; ++n) {
      p[n] /= sum;
      mean += n * p[n];
    }
    return mean;
  };
  double lo = 0.0;
  double hi = 1.0;
  double q = nbar / (1.0 + nbar);
  if (fill(q) < nbar) {
    lo = q;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      (fill(mid) < nbar ? lo : hi) = mid;
    }
    q = 0.5 * (lo + hi);
  }
  fill(q);
  return PhononDistribution(std::move(p));
}

struct DopplerLimit {
  double nbar = 0.0;
  bool clamped = false;  // set when Gamma < omega and the formula went negative
};

/// hbar Gamma / 2 = hbar omega (nbar + 1/2)
inline DopplerLimit doppler_limit_nbar(const IonSpecies& species, double mode_frequency) {
  if (!(mode_frequency > 0.0)) throw DomainError("mode frequency must be positive");
  const double nbar = species.dipole_linewidth / (2.0 * mode_frequency) - 0.5;
  if (nbar < 0.0) return {0.0, true};
  return {nbar, false};
}

}  // namespace ionlab
