#include <gtest/gtest.h>

#include <cmath>

#include "qpising/chain.hpp"
#include "qpising/kernels.hpp"
#include "qpising/rg.hpp"

using namespace qpising;

namespace {
Hopping hop(double beta, double J0 = 1.0, double J1 = 1.0) { return {std::tanh(beta * J0), std::tanh(beta * J1)}; }
}  // namespace

TEST(Mass, PsiMassSitsOnTheOffDiagonalAtZeroMomentum) {
  for (double beta : {0.3, 0.4407, 0.5}) {
    const Hopping t = hop(beta, 1.0, 0.8);
    const Mat2 g = g_psi_inverse({0.0, 0.0}, t);
    EXPECT_NEAR(std::abs(g(0, 0)), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(g(1, 1)), 0.0, 1e-14);
    EXPECT_NEAR((g(0, 1) / cplx(0.0, -1.0)).real(), mass_psi_effective(t), 1e-13);
    EXPECT_NEAR(std::abs(g(0, 1) + g(1, 0)), 0.0, 1e-13);
  }
}

TEST(Mass, SignChangesAcrossCriticality) {
  EXPECT_LT(mass_psi_effective(hop(0.3)), 0.0);
  EXPECT_GT(mass_psi_effective(hop(0.6)), 0.0);
}

TEST(Mass, RootMatchesOnsager) {
  EXPECT_NEAR(mass_root_beta_c({1.0, 1.0}), 0.5 * std::log(1.0 + std::sqrt(2.0)), 1e-10);
  EXPECT_NEAR(mass_root_beta_c({1.0, 1.0}), 0.4406867935, 1e-10);
  for (auto J : {std::array<double, 2>{1.0, 0.6}, std::array<double, 2>{0.7, 1.3}})
    EXPECT_NEAR(mass_root_beta_c(J), onsager_beta_c(J), 1e-10);
}

TEST(Mass, ChiStaysMassive) {
  const Hopping t = hop(0.44);
  for (double k0 = -kPi; k0 <= kPi; k0 += 0.3)
    for (double k1 = -kPi; k1 <= kPi; k1 += 0.3) EXPECT_GT(mass_chi({k0, k1}, t), 2.0);
}

TEST(Kernels, RemainderVanishesAtZero) {
  const Hopping t = hop(0.44);
  EXPECT_EQ(kernel_norm(remainder_R({0.0, 0.0}, t)), 0.0);
  EXPECT_GT(kernel_norm(remainder_R({0.1, 0.0}, t)), 1e-3);
}

TEST(Kernels, GPsiSingularAtCriticality) {
  const Hopping t = hop(mass_root_beta_c({1.0, 1.0}));
  EXPECT_THROW(g_psi({0.0, 0.0}, t), std::domain_error);
  EXPECT_NO_THROW(g_psi({0.2, 0.1}, t));
}

TEST(Kernels, InitialVelocitiesEqualAtIsotropy) {
  const auto v = initial_velocities(hop(0.44));
  EXPECT_NEAR(v[0].real(), v[1].real(), 1e-13);
  EXPECT_NEAR(v[0].imag(), 0.0, 1e-14);
  EXPECT_NEAR(v[1].imag(), 0.0, 1e-14);
  const auto w = initial_velocities(hop(0.44, 1.0, 0.6));
  EXPECT_GT(std::abs(w[0].real() - w[1].real()), 1e-3);
}

TEST(Jet, DerivativesMatchFiniteDifferences) {
  const Hopping t = hop(0.42, 1.0, 0.9);
  const Vec2 k{0.37, -0.61};
  const double h = 1e-5;
  const Jet J = g_psi_inverse_jet(k, t);
  EXPECT_LT(kernel_norm(J.v - g_psi_inverse(k, t)), 1e-13);
  for (int a = 0; a < 2; ++a) {
    Vec2 kp = k, km = k;
    kp[a] += h;
    km[a] -= h;
    const Mat2 fd = (g_psi_inverse(kp, t) - g_psi_inverse(km, t)) / (2 * h);
    EXPECT_LT(kernel_norm(J.d[a] - fd), 1e-8) << a;
    for (int b = 0; b < 2; ++b) {
      Vec2 kpp = kp, kpm = kp, kmp = km, kmm = km;
      kpp[b] += h;
      kpm[b] -= h;
      kmp[b] += h;
      kmm[b] -= h;
      const Mat2 fdd = (g_psi_inverse(kpp, t) - g_psi_inverse(kpm, t) - g_psi_inverse(kmp, t) + g_psi_inverse(kmm, t)) /
                       (4 * h * h);
      EXPECT_LT(kernel_norm(J.dd[a][b] - fdd), 1e-4) << a << b;
    }
  }
}

TEST(Jet, InverseTimesSelfIsIdentity) {
  const Jet C = C_chi({0.2, 1.1}, hop(0.44));
  const Jet P = C * inverse(C);
  EXPECT_LT(kernel_norm(P.v - Mat2::Identity()), 1e-13);
  for (int a = 0; a < 2; ++a) {
    EXPECT_LT(kernel_norm(P.d[a]), 1e-13);
    for (int b = 0; b < 2; ++b) EXPECT_LT(kernel_norm(P.dd[a][b]), 1e-12);
  }
}

TEST(Vertices, VanishWithoutHarmonic) {
  const Vertices v = vertex_matrices({0.3, 0.2}, {0, 0}, {0.618, 0.618});
  for (int j = 0; j < 2; ++j) {
    EXPECT_EQ(kernel_norm(v.P[j]), 0.0);
    EXPECT_EQ(kernel_norm(v.Q[j]), 0.0);
  }
}

TEST(Angles, ReduceAndShift) {
  EXPECT_NEAR(reduce_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(reduce_angle(-kPi), kPi, 1e-12);
  EXPECT_NEAR(reduce_angle(0.5 + 4 * kPi), 0.5, 1e-12);
  const Vec2 s = shift({0.1, 0.2}, {1, 0}, {0.5, 0.5});
  EXPECT_NEAR(std::fabs(s[0]), kPi - 0.1, 1e-12);
  EXPECT_NEAR(s[1], 0.2, 1e-15);
}

TEST(MomentumGrid, AntiperiodicHasNoZeroMode) {
  const MomentumGrid g = momentum_grid(5, 6, BoundaryCondition{{-1, -1}});
  EXPECT_EQ(g.size(), 30);
  EXPECT_EQ(g.index({0.0, 0.0}), -1);
  for (int i = 0; i < g.size(); ++i) EXPECT_EQ(g.index(g.k[i]), i);
  const MomentumGrid p = momentum_grid(5, 6, BoundaryCondition{{1, 1}});
  EXPECT_GE(p.index({0.0, 0.0}), 0);
  EXPECT_EQ(p.index({2 * kPi, -2 * kPi}), p.index({0.0, 0.0}));
}
