#include <gtest/gtest.h>

#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "ionlab/quantum_core.hpp"

using namespace ionlab;

namespace {

// <m| exp(i eta (a + a^dag)) |n> from a dense matrix exponential in a large Fock space.
Eigen::MatrixXcd displacement_oracle(double eta, int dim) {
  Eigen::MatrixXcd X = Eigen::MatrixXcd::Zero(dim, dim);
  for (int n = 0; n + 1 < dim; ++n) X(n, n + 1) = X(n + 1, n) = std::sqrt(n + 1.0);
  const Eigen::MatrixXcd A = Complex(0.0, eta) * X;
  return A.exp();
}

}  // namespace

TEST(Species, CalciumConstants) {
  const auto ca = IonSpecies::calcium40();
  EXPECT_NEAR(ca.mass / constants::atomic_mass_unit, 39.9626, 1e-4);
  EXPECT_NEAR(ca.qubit_wavelength, 729.147e-9, 1e-15);
  EXPECT_NO_THROW(ca.validate());
}

TEST(Species, RejectsNonPositiveFields) {
  auto ca = IonSpecies::calcium40();
  ca.mass = 0.0;
  EXPECT_THROW(ca.validate(), DomainError);
}

TEST(LambDicke, MatchesHandFormula) {
  const auto ca = IonSpecies::calcium40();
  const double nu = 4.51 * units::MHz;
  const double x0 = std::sqrt(constants::hbar / (2.0 * ca.mass * nu));
  EXPECT_NEAR(lamb_dicke(ca, nu, 1.0), ca.wavenumber() * x0, 1e-15);
  EXPECT_NEAR(lamb_dicke(ca, nu, 1.0), 0.0456, 5e-4);
  EXPECT_DOUBLE_EQ(lamb_dicke(ca, nu, -0.5), 0.5 * lamb_dicke(ca, nu, 1.0));
  EXPECT_THROW(lamb_dicke(ca, nu, 1.5), DomainError);
  EXPECT_THROW(lamb_dicke(ca, 0.0, 1.0), DomainError);
}

TEST(LambDicke, ScalesAsInverseRootFrequency) {
  const auto ca = IonSpecies::calcium40();
  EXPECT_NEAR(lamb_dicke(ca, 1.0 * units::MHz, 1.0) / lamb_dicke(ca, 4.0 * units::MHz, 1.0), 2.0, 1e-12);
}

TEST(Recoil, CalciumAt729) {
  EXPECT_NEAR(recoil_frequency(IonSpecies::calcium40()) / units::kHz, 9.39, 0.01);
}

TEST(Laguerre, LowOrdersClosedForm) {
  for (double x : {0.0, 0.3, 1.7}) {
    for (int a : {0, 1, 3}) {
      EXPECT_DOUBLE_EQ(laguerre(0, a, x), 1.0);
      EXPECT_NEAR(laguerre(1, a, x), 1.0 + a - x, 1e-14);
      EXPECT_NEAR(laguerre(2, a, x), 0.5 * (x * x - 2.0 * (a + 2) * x + (a + 1) * (a + 2)), 1e-13);
    }
  }
}

TEST(Displacement, MatchesMatrixExponential) {
  for (double eta : {0.0, 0.02, 0.1, 0.3}) {
    const auto D = displacement_oracle(eta, 90);
    for (int m = 0; m <= 20; ++m)
      for (int n = 0; n <= 20; ++n) EXPECT_LT(std::abs(D(m, n) - displacement_element(m, n, eta)), 1e-8) << m << "," << n;
  }
}

TEST(Coupling, CarrierAndFirstSideband) {
  const double eta = 0.07;
  EXPECT_NEAR(coupling_strength(0, 0, eta), std::exp(-eta * eta / 2.0), 1e-15);
  EXPECT_NEAR(coupling_strength(0, 1, eta), eta * std::exp(-eta * eta / 2.0), 1e-15);
  EXPECT_DOUBLE_EQ(coupling_strength(1, -1, eta), coupling_strength(0, 1, eta));
  EXPECT_DOUBLE_EQ(coupling_strength(3, 0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(coupling_strength(3, 1, 0.0), 0.0);
  EXPECT_THROW(coupling_strength(0, -1, eta), DomainError);
  EXPECT_THROW(coupling_strength(0, 1, -0.1), DomainError);
}

TEST(Coupling, LambDickeRootScaling) {
  const double eta = 1e-4;
  for (int n = 0; n < 10; ++n)
    EXPECT_NEAR(coupling_strength(n, 1, eta) / coupling_strength(0, 1, eta), std::sqrt(n + 1.0), 1e-6);
}

TEST(Thermal, MeanAndNormalization) {
  for (double nbar : {0.0, 0.001, 0.5, 3.0, 9.5}) {
    const auto d = thermal_distribution(nbar, default_n_max(nbar));
    double sum = 0.0;
    for (double p : d.probabilities()) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(d.mean(), nbar, 1e-9);
  }
}

TEST(Thermal, GeometricRatioWhenUntruncated) {
  const double nbar = 0.8;
  const auto d = thermal_distribution(nbar, 60);
  for (int n = 0; n < 10; ++n) EXPECT_NEAR(d[n], thermal_weight(n, nbar), 1e-12);
}

TEST(Thermal, TruncationGuard) {
  EXPECT_THROW(thermal_distribution(10.0, 20), DomainError);
  EXPECT_THROW(thermal_distribution(-1.0, 20), DomainError);
  EXPECT_NO_THROW(thermal_distribution(9.9, 20));
  EXPECT_EQ(default_n_max(0.0), 20);
  EXPECT_EQ(default_n_max(9.5), 58);
}

TEST(Doppler, AnchorAtOneMegahertz) {
  const auto ca = IonSpecies::calcium40();
  EXPECT_DOUBLE_EQ(doppler_limit_nbar(ca, 1.0 * units::MHz).nbar, 9.5);
  EXPECT_NEAR(doppler_limit_nbar(ca, 4.51 * units::MHz).nbar, 1.717, 1e-3);
  const auto c = doppler_limit_nbar(ca, 50.0 * units::MHz);
  EXPECT_TRUE(c.clamped);
  EXPECT_EQ(c.nbar, 0.0);
}

TEST(Distribution, Validation) {
  EXPECT_THROW(PhononDistribution({0.5, 0.6}), DomainError);
  EXPECT_THROW(PhononDistribution({1.2, -0.2}), DomainError);
  const auto f = PhononDistribution::fock(2, 5);
  EXPECT_DOUBLE_EQ(f.mean(), 2.0);
  EXPECT_EQ(f.n_max(), 5);
}

TEST(State, BasisIndexing) {
  const int n_max = 4;
  EXPECT_EQ(QuantumState::index(QuantumState::S, 3, n_max), 3);
  EXPECT_EQ(QuantumState::index(QuantumState::D, 0, n_max), 5);
  const auto s = QuantumState::basis(QuantumState::D, 2, n_max);
  EXPECT_DOUBLE_EQ(s.excited_population(), 1.0);
  EXPECT_DOUBLE_EQ(s.mean_phonon_number(), 2.0);
}

TEST(State, RejectsInvalidDensityMatrices) {
  ComplexMatrix rho = ComplexMatrix::Zero(4, 4);
  rho(0, 0) = 0.5;
  EXPECT_THROW(QuantumState(rho, 1), DomainError);
  rho(1, 1) = 0.5;
  rho(0, 1) = Complex(0.1, 0.0);
  EXPECT_THROW(QuantumState(rho, 1), DomainError);
  rho(1, 0) = Complex(0.1, 0.0);
  EXPECT_NO_THROW(QuantumState(rho, 1));
  ComplexMatrix neg = ComplexMatrix::Zero(4, 4);
  neg(0, 0) = 1.2;
  neg(1, 1) = -0.2;
  EXPECT_THROW(QuantumState(neg, 1), DomainError);
}

TEST(State, RandomMixturesAreValid) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    ComplexMatrix A(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) A(i, j) = Complex(u(rng), u(rng));
    ComplexMatrix rho = A * A.adjoint();
    rho /= rho.trace();
    const QuantumState s(rho, 2);
    EXPECT_LT(s.hermiticity_error(), 1e-12);
    EXPECT_LT(s.trace_error(), 1e-12);
    EXPECT_GT(s.min_eigenvalue(), -1e-12);
    auto p = s.phonon_populations();
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  }
}

TEST(Trap, ValidatesCosines) {
  TrapConfig t;
  t.secular_frequencies = {1.0, 1.0, 1.0};
  t.laser_direction_cosines = {1.0, 1.0, 0.0};
  EXPECT_THROW(t.validate(), DomainError);
  t.laser_direction_cosines = {std::sqrt(0.5), std::sqrt(0.5), 0.0};
  EXPECT_NO_THROW(t.validate());
}
