#include <gtest/gtest.h>

#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <random>

#include "qpising/analysis.hpp"
#include "qpising/rg.hpp"

using namespace qpising;

namespace {
std::vector<double> ladder() {
  std::vector<double> r;
  for (int x : fibonacci_ladder(89)) r.push_back(x);
  return r;
}
}  // namespace

TEST(Ladder, FibonacciNumbers) {
  EXPECT_EQ(fibonacci_ladder(34), (std::vector<int>{1, 2, 3, 5, 8, 13, 21, 34}));
  const BoxSpec box = box_from_generation(golden_mean(), golden_mean(), 6);
  const auto p = ladder_pairs(box, Bond{0, 0, 1}, Direction::kAxis0);
  ASSERT_FALSE(p.empty());
  for (const auto& [a, b] : p) {
    EXPECT_EQ(b.x1, a.x1);
    EXPECT_EQ(b.j, a.j);
    EXPECT_LE(b.x0 - a.x0, box.L0 / 2);
  }
  EXPECT_EQ(ladder_pairs(box, Bond{0, 0, 1}, Direction::kAxis1, true).size(), 2 * p.size());
}

TEST(Aicc, SmallSamplePenalty) {
  EXPECT_TRUE(std::isinf(aicc(1.0, 3, 2)));
  EXPECT_LT(aicc(1.0, 10, 2), aicc(1.0, 10, 3));
  EXPECT_LT(aicc(0.5, 10, 2), aicc(1.0, 10, 2));
}

TEST(PowerLaw, RecoversSlope) {
  std::mt19937 rng(7);
  std::normal_distribution<double> noise(0.0, 0.002);
  const auto r = ladder();
  std::vector<double> S;
  for (double x : r) S.push_back(0.1 * std::pow(x, -2.0) * std::exp(noise(rng)));
  const FitResult f = fit_power_law(r, S);
  EXPECT_EQ(f.model, "power");
  EXPECT_NEAR(f.exponent, -2.0, 0.01);
  EXPECT_NEAR(f.amplitude, 0.1, 0.005);
  EXPECT_EQ(f.scores.size(), 2u);
}

TEST(PowerLaw, PrefersLogCorrectionWhenPresent) {
  const auto r = ladder();
  std::vector<double> S;
  for (double x : r) S.push_back(0.1 * std::pow(x, -2.0) * std::pow(1.0 + std::log(x), 1.5));
  const FitResult f = fit_power_law(r, S);
  EXPECT_EQ(f.model, "power-log");
  EXPECT_NEAR(f.log_exponent, 1.5, 1e-6);
  EXPECT_NEAR(f.exponent, -2.0, 1e-6);
}

TEST(PowerLaw, RejectsThinData) {
  EXPECT_THROW(fit_power_law({1, 2, 3, 5}, {1, 0.25, 0.1, 0.04}), std::invalid_argument);
  EXPECT_THROW(fit_power_law({2, 3, 4, 5, 6, 7}, {1, 1, 1, 1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(fit_power_law({1, 2, 3, 5, 13}, {1, 0.25, 0.0, 0.04, 0.01}), std::invalid_argument);
}

TEST(StretchedExp, RecoversKappa) {
  const double delta = 0.02, kappa = 1.3;
  const auto r = ladder();
  std::vector<double> S;
  for (double x : r) S.push_back(0.2 * std::exp(-kappa * std::sqrt(delta * x)));
  const FitResult f = fit_stretched_exponential(r, S, delta);
  EXPECT_NEAR(f.kappa, kappa, 0.02 * kappa);
}

TEST(StretchedExp, RecoversCorrelationLength) {
  const double m = 0.04, L = 89.0;
  auto fr = [&](double x) {
    const double k1 = boost::math::cyl_bessel_k(1, m * x), k0 = boost::math::cyl_bessel_k(0, m * x);
    return k1 * k1 - k0 * k0;
  };
  std::vector<double> r, S;
  for (int x = 3; x <= 44; ++x) {
    r.push_back(x);
    S.push_back(0.05 * (fr(x) + fr(L - x)) + 2e-6);
  }
  const FitResult f = fit_stretched_exponential(r, S, 0.02, L);
  EXPECT_EQ(f.model, "exponential");
  EXPECT_NEAR(f.xi, 1.0 / (2.0 * m), 1e-3 / (2.0 * m));
  EXPECT_NEAR(f.offset, 2e-6, 1e-8);
}

TEST(StretchedExp, RequiresOffCritical) {
  EXPECT_THROW(fit_stretched_exponential({1, 2, 3, 4}, {1, 0.5, 0.2, 0.1}, 0.0), std::invalid_argument);
}

TEST(Velocities, AmplitudeRatio) {
  const auto r = ladder();
  std::vector<double> S0, S1;
  for (double x : r) {
    S0.push_back(0.09 / (x * x));
    S1.push_back(0.04 / (x * x));
  }
  const FitResult f = extract_velocities(r, S0, S1);
  EXPECT_NEAR(f.velocities[0], std::sqrt(0.04 / 0.09), 1e-10);
  EXPECT_THROW(extract_velocities({1, 2, 3}, {1, 1, 1}, {1, 1, 1}), std::invalid_argument);
}

TEST(Velocities, IsotropicModelGivesEqualAmplitudes) {
  const BoxSpec box = box_from_generation(golden_mean(), golden_mean(), 8);
  const CouplingField f = build_couplings(box, single_cosine(0.0), {1.0, 1.0}, mass_root_beta_c({1.0, 1.0}));
  // total site energy: sum of both bond orientations at the two ends
  std::vector<std::pair<Bond, Bond>> pairs;
  std::vector<double> r;
  for (int x : fibonacci_ladder(box.L0 / 4))
    if (x >= 3) {
      r.push_back(x);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          pairs.push_back({Bond{0, 0, a}, Bond{x, 0, b}});
          pairs.push_back({Bond{0, 0, a}, Bond{0, x, b}});
        }
    }
  const CorrelationBatch c = energy_correlations(f, pairs);
  std::vector<double> S0(r.size(), 0.0), S1(r.size(), 0.0);
  for (std::size_t i = 0; i < r.size(); ++i)
    for (int q = 0; q < 4; ++q) {
      S0[i] += c.S[8 * i + 2 * q];
      S1[i] += c.S[8 * i + 2 * q + 1];
    }
  EXPECT_NEAR(extract_velocities(r, S0, S1).velocities[0], 1.0, 1e-6);
}

TEST(Modulation, PureDcAndDrivePeak) {
  const double omega = golden_mean();
  std::vector<double> flat(55, 0.1), driven(55);
  for (int i = 0; i < 55; ++i) driven[i] = 0.1 + 0.01 * std::cos(kTwoPi * omega * i);
  const ModulationSpectrum a = extract_amplitude_modulation(flat, omega);
  EXPECT_LT(a.non_dc_fraction, 1e-13);
  const ModulationSpectrum b = extract_amplitude_modulation(driven, omega);
  EXPECT_TRUE(b.peak_at_drive);
  EXPECT_EQ(b.peak_bin, b.drive_bin);
  EXPECT_EQ(b.drive_bin, 21);  // 55 (omega - 1/2) rounded, folded
  EXPECT_THROW(extract_amplitude_modulation(std::vector<double>(21, 1.0), omega), std::invalid_argument);
}

TEST(Growth, LogVersusLogLog) {
  const std::vector<double> L{13, 21, 34, 55, 89, 144};
  std::vector<double> lg, llg;
  for (double x : L) {
    lg.push_back(0.5 + 0.5 * std::log(x));
    llg.push_back(0.5 + 0.5 * std::log(std::log(x)));
  }
  EXPECT_EQ(classify_peak_growth(L, lg).verdict, "log");
  EXPECT_NEAR(classify_peak_growth(L, lg).log_slope, 0.5, 1e-10);
  EXPECT_EQ(classify_peak_growth(L, llg).verdict, "loglog");
  EXPECT_EQ(classify_peak_growth(L, lg).scores.size(), 3u);
  EXPECT_THROW(classify_peak_growth({13, 21}, {1, 2}), std::invalid_argument);
}

TEST(SpecificHeatPeak, BracketedOnSmallBox) {
  const BoxSpec box = box_from_generation(golden_mean(), golden_mean(), 6);
  auto fac = [&](double b) { return build_couplings(box, single_cosine(0.0), {1.0, 1.0}, b); };
  const double bc = mass_root_beta_c({1.0, 1.0});
  const SpecificHeatPeak p = specific_heat_peak(fac, bc, 0.1 / box.L0);
  for (const auto& pt : p.scan) EXPECT_LE(pt.cv, p.height + 1e-9);
  EXPECT_NEAR(p.beta, bc, 0.05);
  EXPECT_LT(p.beta, bc);
  EXPECT_THROW(specific_heat_peak(fac, bc, 0.0), std::invalid_argument);
}

TEST(Scan, DuplicatePairGivesIdenticalRecord) {
  const BoxSpec box = box_from_generation(golden_mean(), golden_mean(), 5);
  const CouplingField f = build_couplings(box, single_cosine(0.1), {1.0, 1.0}, 0.43);
  const std::vector<std::pair<Bond, Bond>> pairs{{Bond{0, 0, 1}, Bond{2, 3, 0}}, {Bond{0, 0, 1}, Bond{2, 3, 0}}};
  const auto rec = scan_correlations(f, pairs);
  ASSERT_EQ(rec.size(), 2u);
  EXPECT_EQ(rec[0].S, rec[1].S);
  EXPECT_EQ(rec[0].dx0, 2);
  EXPECT_EQ(rec[0].dx1, 3);
  EXPECT_NEAR(rec[0].r(), std::sqrt(13.0), 1e-15);
  EXPECT_EQ(rec[0].L0, box.L0);
}
