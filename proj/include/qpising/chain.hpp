#pragma once

#include <map>
#include <string>
#include <vector>

#include "qpising/core.hpp"
#include "qpising/kernels.hpp"

namespace qpising {

// Dressed harmonics A_n^(j) together with the frequency and mean hoppings they belong to.
struct HarmonicSet {
  std::array<HarmonicMap, 2> A;
  Vec2 Omega{0.0, 0.0};
  Hopping t;
  double lambda = 0.0;
};

HarmonicSet harmonic_set(const CouplingField& field, double drop = 1e-14);

struct VertexLabel {
  int j = 0;
  Index2 n{0, 0};
};

struct ChainGraph {
  std::vector<VertexLabel> v;
  int q() const { return static_cast<int>(v.size()); }
  Index2 total() const;
};

// Support given as (j, n) labels.
std::vector<ChainGraph> enumerate_graphs(Index2 n, int q, const std::vector<VertexLabel>& support);
// Support given as harmonic indices; both directions j are allowed at every vertex.
std::vector<ChainGraph> enumerate_graphs(Index2 n, int q, const std::vector<Index2>& support);
std::vector<VertexLabel> harmonic_support(const HarmonicSet& hs);

// Line momenta k_1 = k, k_{i+1} = k_i - 2 pi Omega n_{v_i}.
std::vector<Vec2> line_momenta(const ChainGraph& g, Vec2 k, Vec2 Omega);

// W_Gamma(k); labels missing from hs contribute zero.
Mat2 graph_value(const ChainGraph& g, Vec2 k, const HarmonicSet& hs);

// Partial sums V_n^{<=q}(k) for q = 1..q_max (entry q-1), by dynamic programming over chains.
std::vector<Mat2> effective_potential_orders(const HarmonicSet& hs, Index2 n, int q_max, Vec2 k);
Mat2 effective_potential_at(const HarmonicSet& hs, Index2 n, int q_max, Vec2 k);
// On an L0 x L1 box the transfers n and n + (m0 L0, m1 L1) shift momenta identically; this sums the
// partial sums over all images reachable with q_max vertices. Compare with the Schur oracle.
std::vector<Mat2> box_potential_orders(const HarmonicSet& hs, Index2 n, int q_max, Vec2 k, int L0, int L1);
// All V_n(k), q <= q_max, in one pass; partial chains below `prune` are dropped.
std::map<Index2, Mat2> effective_potential_all(const HarmonicSet& hs, int q_max, Vec2 k, double prune = 1e-22);

struct EffectiveKernel {
  MomentumGrid grid;
  int q_max = 0;
  double lambda = 0.0;
  std::map<Index2, std::vector<Mat2>> values;  // per grid point
  double ratio = 0.0;                          // geometric growth estimate per order
  double tail = 0.0;                           // estimated truncation error
  bool convergent = true;
};

EffectiveKernel effective_potential(const HarmonicSet& hs, const std::vector<Index2>& ns, int q_max,
                                    const MomentumGrid& grid);

enum class SchurOrdering { kChiBlockLU, kFullInverse };

struct SchurOracle {
  MomentumGrid grid;
  HarmonicSet hs;
  Eigen::MatrixXcd Keff;  // 2|D| x 2|D| effective psi kernel
  // Exact V_n(k) = -[K_eff(k, k - 2 pi Omega n) - delta_{n0} g_psi^{-1}(k)]
  Mat2 vertex(int ik, Index2 n) const;
};

SchurOracle schur_oracle(const HarmonicSet& hs, const MomentumGrid& grid,
                         SchurOrdering ordering = SchurOrdering::kChiBlockLU);

// Momentum-space form of the full (psi, chi) quadratic kernel, blocks (psi psi, psi chi, chi chi).
struct MomentumKernel {
  Eigen::MatrixXcd Kpp, Kpc, Kcc;
};
MomentumKernel momentum_kernel(const HarmonicSet& hs, const MomentumGrid& grid);

struct DecayReport {
  double slope = 0.0;
  double C = 0.0;  // exp(intercept)
  int points = 0;
  std::vector<std::pair<int, double>> samples;  // (|n|, sup_k |V_n|)
};
// Fits log sup_k |V_n| against |n| = |n0| + |n1|; values below floor are skipped.
DecayReport decay_check(const EffectiveKernel& kernel, double floor = 1e-14);

struct SymmetryReport {
  double max_deviation = 0.0;   // structure of V_0: [[a, ib], [-ib, -conj a]], a odd, b even and real
  // max |a(k0, k1) - conj a(k0, -k1)|; zero forces d_0 a(0) real and d_1 a(0) imaginary,
  // i.e. real velocities
  double max_reflection = 0.0;
  // max |V_n(k) - s_x conj(V_{-n}(-k)) s_x| over stored n
  double max_conjugation = 0.0;
  bool pass = true;
};
SymmetryReport symmetry_check(const EffectiveKernel& kernel, double tol = 1e-12);

}  // namespace qpising
