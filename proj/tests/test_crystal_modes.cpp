#include <gtest/gtest.h>

#include <algorithm>

#include "ionlab/crystal_modes.hpp"

using namespace ionlab;

namespace {

// Barzilai-Borwein gradient descent on V(u) = sum u^2/2 + sum 1/|u_i - u_j|.
std::vector<double> brute_force_equilibrium(int n) {
  Eigen::VectorXd u(n), g(n), u_prev, g_prev;
  for (int i = 0; i < n; ++i) u(i) = 1.5 * (i - 0.5 * (n - 1));
  auto grad = [n](const Eigen::VectorXd& x) {
    Eigen::VectorXd r = x;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) r(i) -= (x(i) > x(j) ? 1.0 : -1.0) / ((x(i) - x(j)) * (x(i) - x(j)));
    return r;
  };
  double step = 0.05;
  g = grad(u);
  for (int it = 0; it < 100000 && g.norm() > 1e-14; ++it) {
    u_prev = u;
    g_prev = g;
    u -= step * g;
    g = grad(u);
    const Eigen::VectorXd s = u - u_prev, y = g - g_prev;
    const double sy = s.dot(y);
    if (sy > 0.0) step = std::min(0.5, s.squaredNorm() / sy);
  }
  std::vector<double> out(u.data(), u.data() + n);
  std::sort(out.begin(), out.end());
  return out;
}

TrapConfig trap(double wx, double wy, double wz) {
  TrapConfig t;
  t.secular_frequencies = {wx * units::MHz, wy * units::MHz, wz * units::MHz};
  t.laser_direction_cosines = {0.0, 0.0, 1.0};
  return t;
}

bool has_line(const std::vector<SidebandLine>& lines, double f, double tol = 1e-6) {
  return std::any_of(lines.begin(), lines.end(),
                     [&](const SidebandLine& l) { return std::abs(l.detuning_magnitude - f) < tol * f; });
}

}  // namespace

TEST(Equilibrium, MatchesBruteForceMinimization) {
  for (int n = 1; n <= 6; ++n) {
    const auto eq = equilibrium_positions(n);
    const auto ref = brute_force_equilibrium(n);
    ASSERT_EQ(eq.u.size(), ref.size());
    for (int i = 0; i < n; ++i) EXPECT_NEAR(eq.u[i], ref[i], 1e-8) << "N=" << n << " i=" << i;
    EXPECT_LT(eq.residual, 1e-10);
  }
}

TEST(Equilibrium, KnownClosedForms) {
  EXPECT_NEAR(equilibrium_positions(2).u[1], std::cbrt(0.25), 1e-12);
  EXPECT_NEAR(equilibrium_positions(3).u[2], std::cbrt(1.25), 1e-12);
  EXPECT_NEAR(equilibrium_positions(3).u[1], 0.0, 1e-12);
}

TEST(Equilibrium, SymmetricAndAscending) {
  for (int n = 2; n <= 20; ++n) {
    const auto u = equilibrium_positions(n).u;
    for (int i = 0; i < n; ++i) EXPECT_NEAR(u[i], -u[n - 1 - i], 1e-10);
    for (int i = 1; i < n; ++i) EXPECT_GT(u[i], u[i - 1]);
  }
  EXPECT_THROW(equilibrium_positions(0), DomainError);
}

TEST(AxialModes, ComAndBreathingTheorems) {
  const double w = 0.7 * units::MHz;
  for (int n = 1; n <= 10; ++n) {
    const auto s = axial_modes(n, w);
    ASSERT_EQ(static_cast<int>(s.modes.size()), n);
    EXPECT_NEAR(s.modes[0].frequency / w, 1.0, 1e-9);
    EXPECT_EQ(s.modes[0].label, "com");
    if (n > 1) {
      EXPECT_NEAR(s.modes[1].frequency / w, std::sqrt(3.0), 1e-9);
      EXPECT_EQ(s.modes[1].label, "breathing");
    }
  }
}

TEST(AxialModes, ThreeIonThirdMode) {
  EXPECT_NEAR(axial_modes(3, 1.0).modes[2].frequency, std::sqrt(29.0 / 5.0), 1e-9);
}

TEST(AxialModes, EigenvectorsOrthonormal) {
  const auto s = axial_modes(5, 1.0);
  for (std::size_t a = 0; a < s.modes.size(); ++a)
    for (std::size_t b = 0; b < s.modes.size(); ++b)
      EXPECT_NEAR(s.modes[a].eigenvector.dot(s.modes[b].eigenvector), a == b ? 1.0 : 0.0, 1e-10);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(s.modes[0].eigenvector(i), 1.0 / std::sqrt(5.0), 1e-10);
}

TEST(RadialModes, RockingIdentity) {
  for (double wr : {1.4, 2.16, 5.0}) {
    const auto s = radial_modes(2, wr, 0.7);
    const Mode* rock = s.find(Axis::x, "rocking");
    const Mode* com = s.find(Axis::x, "radial-com");
    ASSERT_NE(rock, nullptr);
    ASSERT_NE(com, nullptr);
    EXPECT_NEAR(rock->frequency, std::sqrt(wr * wr - 0.49), 1e-9);
    EXPECT_NEAR(com->frequency, wr, 1e-9);
  }
}

TEST(RadialModes, ZigzagInstabilityFlagged) {
  const auto s = radial_modes(10, 1.0, 1.0);
  EXPECT_FALSE(s.stable);
  EXPECT_FALSE(s.warnings.empty());
  EXPECT_TRUE(radial_modes(10, 10.0, 1.0).stable);
}

TEST(Spectrum, CrystalAlongWeakestAxis) {
  const auto t = trap(2.16, 2.07, 4.51);
  EXPECT_EQ(crystal_axis(t), Axis::y);
  const auto s = crystal_spectrum(2, t);
  EXPECT_EQ(s.modes.size(), 6u);
  ASSERT_NE(s.find(Axis::y, "breathing"), nullptr);
  EXPECT_NEAR(s.find(Axis::y, "breathing")->frequency, std::sqrt(3.0) * 2.07 * units::MHz, 1e-3);
  EXPECT_NEAR(s.find(Axis::z, "rocking")->frequency, std::sqrt(4.51 * 4.51 - 2.07 * 2.07) * units::MHz, 1e-3);
}

TEST(Sidebands, SingleIonFirstOrder) {
  const auto lines = identify_sidebands(crystal_spectrum(1, trap(2.16, 2.07, 4.51)), 1);
  ASSERT_EQ(lines.size(), 3u);
  for (double f : {2.16, 2.07, 4.51}) EXPECT_TRUE(has_line(lines, f * units::MHz));
}

TEST(Sidebands, TwoIonSecondOrderLines) {
  const auto lines = identify_sidebands(crystal_spectrum(2, trap(2.16, 2.07, 4.51)), 2);
  EXPECT_TRUE(has_line(lines, std::sqrt(3.0) * 2.07 * units::MHz));
  EXPECT_TRUE(has_line(lines, std::sqrt(4.51 * 4.51 - 2.07 * 2.07) * units::MHz));
  EXPECT_TRUE(has_line(lines, 2.0 * 4.51 * units::MHz));
  for (const auto& l : lines) {
    EXPECT_GE(l.order, 1);
    EXPECT_LE(l.order, 2);
    EXPECT_GT(l.detuning_magnitude, 0.0);
  }
}

TEST(Physical, ThreeIonSpacingAt700kHz) {
  const auto x = physical_spacing(3, 0.7 * units::MHz, IonSpecies::calcium40());
  EXPECT_NEAR((x[1] - x[0]) * 1e6, 6.08, 0.02);
}

TEST(Physical, TwoIonLengthScale) {
  const auto ca = IonSpecies::calcium40();
  const double w = 1.0 * units::MHz;
  const double l = std::cbrt(constants::elementary_charge * constants::elementary_charge /
                             (4.0 * constants::pi * constants::vacuum_permittivity * ca.mass * w * w));
  const auto x = physical_spacing(2, w, ca);
  EXPECT_NEAR(x[1] - x[0], std::cbrt(2.0) * l, 1e-15);
}

TEST(LambDickeModes, ComSharesEtaOverRootN) {
  const auto ca = IonSpecies::calcium40();
  auto t = trap(2.0, 2.0, 0.7);
  const auto s = crystal_spectrum(4, t);
  const Mode* com = s.find(Axis::z, "com");
  const auto eta = mode_lamb_dicke(*com, ca, t);
  for (double e : eta) EXPECT_NEAR(e, lamb_dicke(ca, 0.7 * units::MHz, 1.0) / 2.0, 1e-12);
}
