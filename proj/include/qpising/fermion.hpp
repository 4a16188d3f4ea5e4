#pragma once

#include <array>
#include <functional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "qpising/core.hpp"
#include "qpising/pfaffian.hpp"

namespace qpising {

// alpha[j] = +1 periodic, -1 antiperiodic in direction j.
struct BoundaryCondition {
  std::array<int, 2> alpha{-1, -1};
  int tau() const { return (alpha[0] > 0 && alpha[1] > 0) ? -1 : 1; }
  std::string label() const;
};

std::array<BoundaryCondition, 4> all_sectors();

// Variable layout: 4 per site, (Hbar, H, Vbar, V) = (0, 1, 2, 3), site s = x0 * L1 + x1.
enum GrassmannComponent { kHbar = 0, kH = 1, kVbar = 2, kV = 3 };

struct GrassmannAction {
  BoundaryCondition bc;
  int L0 = 0, L1 = 0;
  SparseR M;  // S = 1/2 Phi . M Phi; a theta_i theta_j term stored as M_ij += a, M_ji -= a
  double cosh_prefactor = 0.0;
  int dim() const { return 4 * L0 * L1; }
  int var(int x0, int x1, int c) const;
};

GrassmannAction assemble_action(const CouplingField& field, const BoundaryCondition& bc);

// Row groups {0, L0-1}, {1, L0-2}, ... so that the action is block-tridiagonal.
std::vector<std::vector<int>> folded_groups(int L0, int L1);

BlockSkewSolver factor_action(const GrassmannAction& action, bool keep_factors);

struct PartitionResult {
  double logZ = 0.0;
  std::array<LogPf, 4> sector;
  std::array<BoundaryCondition, 4> bcs;
  // sum |tau Pf| / |sum tau Pf|; large values mean cancellation between sectors
  double condition = 1.0;
};

PartitionResult partition_function(const CouplingField& field);

// Entries (M^{-1})_{ab}; throws with the sector label if M is singular.
std::vector<double> propagator_entries(const GrassmannAction& action,
                                       const std::vector<std::pair<int, int>>& pairs);

struct Bond {
  int x0 = 0, x1 = 0, j = 0;
  bool operator==(const Bond& o) const { return x0 == o.x0 && x1 == o.x1 && j == o.j; }
  bool operator<(const Bond& o) const {
    return std::tie(x0, x1, j) < std::tie(o.x0, o.x1, o.j);
  }
};

struct CorrelationBatch {
  std::vector<double> S;
  double logZ = 0.0;
  bool singular_sector = false;
};

// Truncated energy correlations <E_b1; E_b2> for many pairs. Bonds are wrapped into the box;
// coincident bonds are rejected. workers caps the number of sectors factored concurrently.
CorrelationBatch energy_correlations(const CouplingField& field,
                                     const std::vector<std::pair<Bond, Bond>>& pairs, int workers = 1);
double energy_correlation(const CouplingField& field, Bond b1, Bond b2);

struct SpinOracleResult {
  double logZ = 0.0;
  std::vector<double> S;  // one per requested pair
};

// Exhaustive sum with periodic boundary conditions; K[j][s] = beta J_x^(j) on the bond from s.
SpinOracleResult spin_oracle_raw(int L0, int L1, const std::array<std::vector<double>, 2>& K,
                                 const std::vector<std::pair<Bond, Bond>>& pairs);
SpinOracleResult spin_oracle(const CouplingField& field, const std::vector<std::pair<Bond, Bond>>& pairs);

struct SpecificHeatPoint {
  double beta = 0.0;
  double cv = 0.0;
  double logZ = 0.0;
};

struct SpecificHeatResult {
  std::vector<SpecificHeatPoint> points;  // interior grid points only
  std::vector<std::string> warnings;
};

// c_v = beta^2 d^2 (logZ / N) / d beta^2 by three-point differences on a (possibly uneven) grid.
SpecificHeatResult specific_heat(const std::function<CouplingField(double)>& factory,
                                 const std::vector<double>& beta_grid, int workers = 1);

}  // namespace qpising
