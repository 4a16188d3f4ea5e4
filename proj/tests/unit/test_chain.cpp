#include <gtest/gtest.h>

#include <cmath>

#include "qpising/chain.hpp"

using namespace qpising;

namespace {

struct Fixture {
  BoxSpec box;
  CouplingField field;
  HarmonicSet hs;
  MomentumGrid grid;
};

Fixture make(double lambda, int generation = 5, bool layered = false) {
  Fixture f;
  f.box = box_from_generation(golden_mean(), golden_mean(), generation);
  f.field = build_couplings(f.box, layered ? layered_preset(lambda) : single_cosine(lambda), {1.0, 1.0}, 0.44);
  f.hs = harmonic_set(f.field);
  f.grid = momentum_grid(f.box.L0, f.box.L1, all_sectors()[3]);
  return f;
}

std::vector<Index2> axis_ns(int m) {
  std::vector<Index2> ns;
  for (int i = -m; i <= m; ++i) ns.push_back({0, i});
  return ns;
}

double series_error(const Fixture& f, const SchurOracle& S, int q) {
  double err = 0.0;
  for (int ik = 0; ik < f.grid.size(); ++ik)
    for (auto n : axis_ns(4)) {
      const Mat2 v = box_potential_orders(f.hs, n, q, f.grid.k[ik], f.box.L0, f.box.L1).back();
      err = std::max(err, (v - S.vertex(ik, n)).cwiseAbs().maxCoeff());
    }
  return err;
}

}  // namespace

TEST(Graphs, EnumerationCounts) {
  const std::vector<Index2> support{{0, 1}, {0, -1}};
  EXPECT_EQ(enumerate_graphs({0, 0}, 2, support).size(), 8u);  // 2 orderings x 2^2 directions
  EXPECT_EQ(enumerate_graphs({0, 1}, 2, support).size(), 0u);
  EXPECT_EQ(enumerate_graphs({0, 1}, 3, support).size(), 3u * 8u);
  for (const auto& g : enumerate_graphs({0, -2}, 4, support)) EXPECT_EQ(g.total(), (Index2{0, -2}));
  EXPECT_THROW(enumerate_graphs({0, 0}, 0, support), std::invalid_argument);
}

TEST(Graphs, LineMomentaShiftByHarmonic) {
  ChainGraph g;
  g.v = {{1, {0, 1}}, {0, {1, 0}}};
  const Vec2 Om{0.3, 0.2};
  const auto k = line_momenta(g, {0.1, 0.1}, Om);
  ASSERT_EQ(k.size(), 3u);
  EXPECT_NEAR(k[1][1], reduce_angle(0.1 - kTwoPi * 0.2), 1e-14);
  EXPECT_NEAR(k[2][0], reduce_angle(0.1 - kTwoPi * 0.3), 1e-14);
}

TEST(Schur, OrderingsAgree) {
  const Fixture f = make(0.1);
  const SchurOracle a = schur_oracle(f.hs, f.grid, SchurOrdering::kChiBlockLU);
  const SchurOracle b = schur_oracle(f.hs, f.grid, SchurOrdering::kFullInverse);
  EXPECT_LT((a.Keff - b.Keff).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Schur, SeriesConvergesToExactKernel) {
  const Fixture f = make(0.05);
  const SchurOracle S = schur_oracle(f.hs, f.grid);
  std::vector<double> e;
  for (int q = 1; q <= 6; ++q) e.push_back(series_error(f, S, q));
  for (int q = 1; q < 5; ++q) EXPECT_LT(e[q], e[q - 1]) << q;
  EXPECT_LT(e[5], 1e-14);
}

TEST(Schur, UnfoldedSeriesMissesAliasedTransfers) {
  // on the 8 x 8 box the transfer (0, 4) coincides with (0, -4)
  const Fixture f = make(0.05);
  const SchurOracle S = schur_oracle(f.hs, f.grid);
  double folded = 0.0, unfolded = 0.0;
  for (int ik = 0; ik < f.grid.size(); ++ik) {
    const Vec2 k = f.grid.k[ik];
    folded = std::max(folded, (box_potential_orders(f.hs, {0, 4}, 6, k, 8, 8).back() - S.vertex(ik, {0, 4})).cwiseAbs().maxCoeff());
    unfolded = std::max(unfolded, (effective_potential_at(f.hs, {0, 4}, 6, k) - S.vertex(ik, {0, 4})).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(folded, 1e-14);
  EXPECT_GT(unfolded, 1e-10);
}

TEST(Schur, LambdaZeroLeavesOnlyTheDiagonal) {
  const Fixture f = make(0.0);
  const SchurOracle S = schur_oracle(f.hs, f.grid);
  for (int ik = 0; ik < f.grid.size(); ++ik) {
    EXPECT_LT(S.vertex(ik, {0, 0}).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(S.vertex(ik, {0, 1}).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(EffectivePotential, AllMatchesPointwise) {
  const Fixture f = make(0.1);
  const Vec2 k = f.grid.k[7];
  const auto all = effective_potential_all(f.hs, 4, k, 0.0);
  for (auto n : axis_ns(3)) {
    const Mat2 at = effective_potential_at(f.hs, n, 4, k);
    auto it = all.find(n);
    const Mat2 v = it == all.end() ? Mat2::Zero() : it->second;
    EXPECT_LT((at - v).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(EffectivePotential, OrdersArePartialSumsOfGraphs) {
  const Fixture f = make(0.1);
  const Vec2 k{0.3, -0.2};
  const Index2 n{0, 1};
  const auto orders = effective_potential_orders(f.hs, n, 3, k);
  Mat2 sum = Mat2::Zero();
  for (int q = 1; q <= 3; ++q) {
    for (const auto& g : enumerate_graphs(n, q, harmonic_support(f.hs))) sum += graph_value(g, k, f.hs);
    EXPECT_LT((orders[q - 1] - sum).cwiseAbs().maxCoeff(), 1e-13) << q;
  }
}

TEST(EffectivePotential, SymmetryAndDecay) {
  for (bool layered : {false, true}) {
    const Fixture f = make(0.1, 6, layered);
    const EffectiveKernel K = effective_potential(f.hs, axis_ns(6), 5, f.grid);
    const SymmetryReport s = symmetry_check(K);
    EXPECT_TRUE(s.pass) << s.max_deviation << " " << s.max_reflection << " " << s.max_conjugation;
    const DecayReport d = decay_check(K);
    EXPECT_LT(d.slope, -1.0);
    EXPECT_TRUE(K.convergent);
    EXPECT_LT(K.ratio, 0.5);
  }
}

TEST(EffectivePotential, DecayNeedsSamples) {
  const Fixture f = make(0.0);
  const EffectiveKernel K = effective_potential(f.hs, axis_ns(2), 3, f.grid);
  EXPECT_THROW(decay_check(K), std::invalid_argument);
}
