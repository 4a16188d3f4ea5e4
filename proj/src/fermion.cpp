#include "qpising/fermion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>

#include "qpising/parallel.hpp"

namespace qpising {

std::string BoundaryCondition::label() const {
  return std::string(alpha[0] > 0 ? "+" : "-") + (alpha[1] > 0 ? "+" : "-");
}

std::array<BoundaryCondition, 4> all_sectors() {
  return {BoundaryCondition{{1, 1}}, BoundaryCondition{{1, -1}}, BoundaryCondition{{-1, 1}},
          BoundaryCondition{{-1, -1}}};
}

int GrassmannAction::var(int x0, int x1, int c) const {
  int a = ((x0 % L0) + L0) % L0, b = ((x1 % L1) + L1) % L1;
  return 4 * (a * L1 + b) + c;
}

GrassmannAction assemble_action(const CouplingField& f, const BoundaryCondition& bc) {
  GrassmannAction A;
  A.bc = bc;
  A.L0 = f.box.L0;
  A.L1 = f.box.L1;
  const int n = A.dim();
  std::vector<Eigen::Triplet<double>> tr;
  tr.reserve(static_cast<std::size_t>(n) * 4);
  auto add = [&](int i, int j, double a) {
    tr.emplace_back(i, j, a);
    tr.emplace_back(j, i, -a);
  };
  double pre = 0.0;
  for (int x0 = 0; x0 < A.L0; ++x0)
    for (int x1 = 0; x1 < A.L1; ++x1) {
      const int s = x0 * A.L1 + x1;
      const double s1 = (x1 + 1 < A.L1) ? 1.0 : double(bc.alpha[1]);
      const double s0 = (x0 + 1 < A.L0) ? 1.0 : double(bc.alpha[0]);
      add(A.var(x0, x1, kHbar), A.var(x0, x1 + 1, kH), s1 * f.tx[1][s]);
      add(A.var(x0, x1, kVbar), A.var(x0 + 1, x1, kV), s0 * f.tx[0][s]);
      const int hb = 4 * s, h = hb + 1, vb = hb + 2, v = hb + 3;
      add(hb, h, 1.0);
      add(vb, v, 1.0);
      add(vb, hb, 1.0);
      add(v, hb, 1.0);
      add(h, vb, 1.0);
      add(v, h, 1.0);
      pre += std::log(std::cosh(f.beta * f.Jx[0][s])) + std::log(std::cosh(f.beta * f.Jx[1][s]));
    }
  A.M.resize(n, n);
  A.M.setFromTriplets(tr.begin(), tr.end());
  A.M.makeCompressed();
  A.cosh_prefactor = pre;
  return A;
}

std::vector<std::vector<int>> folded_groups(int L0, int L1) {
  std::vector<std::vector<int>> g;
  for (int lo = 0, hi = L0 - 1; lo <= hi; ++lo, --hi) {
    std::vector<int> grp;
    for (int r : (lo == hi ? std::vector<int>{lo} : std::vector<int>{lo, hi}))
      for (int x1 = 0; x1 < L1; ++x1)
        for (int c = 0; c < 4; ++c) grp.push_back(4 * (r * L1 + x1) + c);
    std::sort(grp.begin(), grp.end());
    g.push_back(std::move(grp));
  }
  return g;
}

BlockSkewSolver factor_action(const GrassmannAction& a, bool keep) {
  return BlockSkewSolver(a.M, folded_groups(a.L0, a.L1), keep);
}

namespace {

struct Combined {
  double logF = 0.0;  // log |sum tau Pf|
  double sign = 1.0;
  double condition = 1.0;
  std::array<double, 4> w{};  // tau Pf_alpha / F
};

Combined combine(const std::array<LogPf, 4>& pf, const std::array<BoundaryCondition, 4>& bcs) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& p : pf)
    if (!p.singular()) m = std::max(m, p.log_abs);
  if (!std::isfinite(m)) throw std::runtime_error("partition_function: all sectors singular");
  std::array<double, 4> term{};
  double sum = 0.0, abs_sum = 0.0;
  for (int a = 0; a < 4; ++a) {
    term[a] = pf[a].singular() ? 0.0 : bcs[a].tau() * pf[a].phase.real() * std::exp(pf[a].log_abs - m);
    sum += term[a];
    abs_sum += std::fabs(term[a]);
  }
  if (sum == 0.0) throw std::runtime_error("partition_function: complete cancellation between sectors");
  Combined c;
  c.logF = m + std::log(std::fabs(sum));
  c.sign = sum > 0 ? 1.0 : -1.0;
  c.condition = abs_sum / std::fabs(sum);
  for (int a = 0; a < 4; ++a) c.w[a] = term[a] / sum;
  return c;
}

double log_z_from(double logF, double cosh_pre, int N) { return logF - std::log(2.0) + cosh_pre + N * std::log(2.0); }

}  // namespace

PartitionResult partition_function(const CouplingField& f) {
  PartitionResult r;
  r.bcs = all_sectors();
  double pre = 0.0;
  for (int a = 0; a < 4; ++a) {
    GrassmannAction act = assemble_action(f, r.bcs[a]);
    pre = act.cosh_prefactor;
    r.sector[a] = factor_action(act, false).log_pf();
  }
  Combined c = combine(r.sector, r.bcs);
  r.logZ = log_z_from(c.logF, pre, f.box.sites());
  r.condition = c.condition;
  return r;
}

std::vector<double> propagator_entries(const GrassmannAction& a, const std::vector<std::pair<int, int>>& pairs) {
  BlockSkewSolver s = factor_action(a, true);
  if (s.log_pf().singular()) throw std::runtime_error("propagator_entries: singular action in sector " + a.bc.label());
  std::map<int, int> col;
  for (auto [i, j] : pairs) col.emplace(j, 0);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(a.dim(), static_cast<Eigen::Index>(col.size()));
  int k = 0;
  for (auto& [j, c] : col) {
    c = k;
    B(j, k++) = 1.0;
  }
  Eigen::MatrixXd X = s.solve(B);
  std::vector<double> out;
  out.reserve(pairs.size());
  for (auto [i, j] : pairs) out.push_back(X(i, col.at(j)));
  return out;
}

namespace {

Bond wrap(const Bond& b, int L0, int L1) {
  if (b.j != 0 && b.j != 1) throw std::invalid_argument("bond direction must be 0 or 1");
  return {((b.x0 % L0) + L0) % L0, ((b.x1 % L1) + L1) % L1, b.j};
}

struct BondEntry {
  int i, jv;     // M entry (i, jv) carrying the hopping term
  double coef;   // s (1 - t^2)
};

BondEntry bond_entry(const GrassmannAction& a, const CouplingField& f, const Bond& b) {
  const int s = b.x0 * a.L1 + b.x1;
  BondEntry e;
  if (b.j == 1) {
    e.i = a.var(b.x0, b.x1, kHbar);
    e.jv = a.var(b.x0, b.x1 + 1, kH);
    double sg = (b.x1 + 1 < a.L1) ? 1.0 : a.bc.alpha[1];
    e.coef = sg * (1.0 - f.tx[1][s] * f.tx[1][s]);
  } else {
    e.i = a.var(b.x0, b.x1, kVbar);
    e.jv = a.var(b.x0 + 1, b.x1, kV);
    double sg = (b.x0 + 1 < a.L0) ? 1.0 : a.bc.alpha[0];
    e.coef = sg * (1.0 - f.tx[0][s] * f.tx[0][s]);
  }
  return e;
}

struct SectorData {
  LogPf pf;
  std::vector<double> e1, e2, h;  // per pair
};

}  // namespace

namespace {

CouplingField with_beta(const CouplingField& f, double beta) {
  CouplingField g = f;
  g.beta = beta;
  for (int j = 0; j < 2; ++j)
    for (std::size_t s = 0; s < g.tx[j].size(); ++s) g.tx[j][s] = std::tanh(beta * g.Jx[j][s]);
  return g;
}

SectorData sector_data(const CouplingField& f, BoundaryCondition bc, const std::vector<std::pair<Bond, Bond>>& pairs) {
  SectorData d;
  GrassmannAction act = assemble_action(f, bc);
  BlockSkewSolver s = factor_action(act, true);
  d.pf = s.log_pf();
  d.e1.assign(pairs.size(), 0.0);
  d.e2.assign(pairs.size(), 0.0);
  d.h.assign(pairs.size(), 0.0);
  if (d.pf.singular()) return d;
  // columns: i_b for every bond, jv_b for first bonds
  std::map<int, int> col;
  for (auto& [b1, b2] : pairs) {
    BondEntry e1 = bond_entry(act, f, b1), e2 = bond_entry(act, f, b2);
    col.emplace(e1.i, 0);
    col.emplace(e1.jv, 0);
    col.emplace(e2.i, 0);
  }
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(act.dim(), static_cast<Eigen::Index>(col.size()));
  int k = 0;
  for (auto& [c, idx] : col) {
    idx = k;
    B(c, k++) = 1.0;
  }
  const Eigen::MatrixXd G = s.solve(B);
  auto g = [&](int r, int c) { return G(r, col.at(c)); };  // G[r, c]
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    BondEntry a1 = bond_entry(act, f, pairs[p].first), a2 = bond_entry(act, f, pairs[p].second);
    d.e1[p] = a1.coef * g(a1.jv, a1.i);
    d.e2[p] = a2.coef * g(a2.jv, a2.i);
    // G[j1,i2] = -G[i2,j1], G[j1,j2] = -G[j2,j1]
    const double gj1i2 = -g(a2.i, a1.jv), gj2i1 = g(a2.jv, a1.i);
    const double gj1j2 = -g(a2.jv, a1.jv), gi2i1 = g(a2.i, a1.i);
    d.h[p] = -a1.coef * a2.coef * (gj1i2 * gj2i1 - gj1j2 * gi2i1);
  }
  return d;
}

// A sector whose Pfaffian is this small relative to the largest one is treated as singular.
constexpr double kSingularRatio = 1e-6;
// Relative beta offset used to take the limit for a singular sector.
constexpr double kSingularShift = 1e-6;

}  // namespace

CorrelationBatch energy_correlations(const CouplingField& f, const std::vector<std::pair<Bond, Bond>>& pairs_in,
                                     int workers) {
  const int L0 = f.box.L0, L1 = f.box.L1;
  std::vector<std::pair<Bond, Bond>> pairs;
  for (auto [a, b] : pairs_in) {
    Bond wa = wrap(a, L0, L1), wb = wrap(b, L0, L1);
    if (wa == wb) throw std::invalid_argument("energy_correlation: coincident bonds");
    pairs.emplace_back(wa, wb);
  }
  const auto bcs = all_sectors();
  std::vector<SectorData> sd = parallel_map<SectorData>(
      4, workers, [&](std::size_t a) { return sector_data(f, bcs[a], pairs); });
  std::array<LogPf, 4> pf;
  for (int a = 0; a < 4; ++a) pf[a] = sd[a].pf;
  Combined c = combine(pf, bcs);
  CorrelationBatch out;
  out.logZ = log_z_from(c.logF, assemble_action(f, bcs[0]).cosh_prefactor, f.box.sites());

  // per sector: sum over pairs of w e1, w e2, w (e1 e2 + h)
  const std::size_t P = pairs.size();
  std::array<std::vector<double>, 4> we1, we2, w12;
  double maxlog = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < 4; ++a)
    if (!pf[a].singular()) maxlog = std::max(maxlog, pf[a].log_abs);
  for (int a = 0; a < 4; ++a) {
    we1[a].assign(P, 0.0);
    we2[a].assign(P, 0.0);
    w12[a].assign(P, 0.0);
    const bool near_singular = pf[a].singular() || pf[a].log_abs - maxlog < std::log(kSingularRatio);
    if (!near_singular) {
      for (std::size_t p = 0; p < P; ++p) {
        we1[a][p] = c.w[a] * sd[a].e1[p];
        we2[a][p] = c.w[a] * sd[a].e2[p];
        w12[a][p] = c.w[a] * (sd[a].e1[p] * sd[a].e2[p] + sd[a].h[p]);
      }
      continue;
    }
    // tau Pf <...> is smooth in beta while Pf -> 0 and <...> diverges: average beta +- delta
    out.singular_sector = true;
    const double d = kSingularShift * std::max(1.0, f.beta);
    for (double b : {f.beta - d, f.beta + d}) {
      SectorData s = sector_data(with_beta(f, b), bcs[a], pairs);
      if (s.pf.singular()) throw std::runtime_error("energy_correlations: sector " + bcs[a].label() +
                                                    " singular on both sides of beta");
      const double w = bcs[a].tau() * s.pf.phase.real() * std::exp(s.pf.log_abs - c.logF) / c.sign;
      for (std::size_t p = 0; p < P; ++p) {
        we1[a][p] += 0.5 * w * s.e1[p];
        we2[a][p] += 0.5 * w * s.e2[p];
        w12[a][p] += 0.5 * w * (s.e1[p] * s.e2[p] + s.h[p]);
      }
    }
  }
  out.S.resize(P);
  for (std::size_t p = 0; p < P; ++p) {
    double s12 = 0.0, s1 = 0.0, s2 = 0.0;
    for (int a = 0; a < 4; ++a) {
      s12 += w12[a][p];
      s1 += we1[a][p];
      s2 += we2[a][p];
    }
    out.S[p] = s12 - s1 * s2;
  }
  return out;
}

double energy_correlation(const CouplingField& f, Bond b1, Bond b2) {
  return energy_correlations(f, {{b1, b2}}).S.at(0);
}

SpinOracleResult spin_oracle_raw(int L0, int L1, const std::array<std::vector<double>, 2>& K,
                                 const std::vector<std::pair<Bond, Bond>>& pairs) {
  const int N = L0 * L1;
  if (N > 16) throw std::invalid_argument("spin_oracle: lattice too large (max 16 sites)");
  if (N < 1 || static_cast<int>(K[0].size()) != N || static_cast<int>(K[1].size()) != N)
    throw std::invalid_argument("spin_oracle: coupling arrays do not match the lattice");
  auto nb = [&](int s, int j) {
    int x0 = s / L1, x1 = s % L1;
    return j == 1 ? x0 * L1 + (x1 + 1) % L1 : ((x0 + 1) % L0) * L1 + x1;
  };
  std::vector<std::pair<int, int>> bp;  // (site, dir) indices for each bond in pairs
  for (auto [a, b] : pairs) {
    Bond wa = wrap(a, L0, L1), wb = wrap(b, L0, L1);
    bp.emplace_back(wa.x0 * L1 + wa.x1, wa.j);
    bp.emplace_back(wb.x0 * L1 + wb.x1, wb.j);
  }
  double Emax = 0.0;
  for (int j = 0; j < 2; ++j)
    for (double k : K[j]) Emax += std::fabs(k);
  const std::size_t P = pairs.size();
  long double Z = 0.0L;
  std::vector<long double> m1(P, 0.0L), m2(P, 0.0L), m12(P, 0.0L);
  std::vector<int> sig(N);
  for (std::uint32_t c = 0; c < (1u << N); ++c) {
    for (int s = 0; s < N; ++s) sig[s] = (c >> s) & 1u ? -1 : 1;
    double E = 0.0;
    for (int s = 0; s < N; ++s) E += K[1][s] * sig[s] * sig[nb(s, 1)] + K[0][s] * sig[s] * sig[nb(s, 0)];
    long double w = std::exp(static_cast<long double>(E - Emax));
    Z += w;
    for (std::size_t p = 0; p < P; ++p) {
      auto [s1, j1] = bp[2 * p];
      auto [s2, j2] = bp[2 * p + 1];
      int a = sig[s1] * sig[nb(s1, j1)], b = sig[s2] * sig[nb(s2, j2)];
      m1[p] += w * a;
      m2[p] += w * b;
      m12[p] += w * a * b;
    }
  }
  SpinOracleResult r;
  r.logZ = static_cast<double>(std::log(Z)) + Emax;
  for (std::size_t p = 0; p < P; ++p) r.S.push_back(static_cast<double>(m12[p] / Z - (m1[p] / Z) * (m2[p] / Z)));
  return r;
}

SpinOracleResult spin_oracle(const CouplingField& f, const std::vector<std::pair<Bond, Bond>>& pairs) {
  std::array<std::vector<double>, 2> K;
  for (int j = 0; j < 2; ++j) {
    K[j] = f.Jx[j];
    for (double& k : K[j]) k *= f.beta;
  }
  return spin_oracle_raw(f.box.L0, f.box.L1, K, pairs);
}

SpecificHeatResult specific_heat(const std::function<CouplingField(double)>& factory,
                                 const std::vector<double>& grid, int workers) {
  if (grid.size() < 5) throw std::invalid_argument("specific_heat: need at least 5 grid points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("specific_heat: grid must be strictly increasing");
  int N = 0;
  std::vector<double> lz = parallel_map<double>(grid.size(), workers, [&](std::size_t i) {
    CouplingField f = factory(grid[i]);
    return partition_function(f).logZ;
  });
  N = factory(grid[0]).box.sites();
  SpecificHeatResult r;
  for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
    const double hm = grid[i] - grid[i - 1], hp = grid[i + 1] - grid[i];
    const double d2 = 2.0 * (hm * lz[i + 1] - (hm + hp) * lz[i] + hp * lz[i - 1]) / (hm * hp * (hm + hp));
    r.points.push_back({grid[i], grid[i] * grid[i] * d2 / N, lz[i]});
  }
  auto it = std::max_element(r.points.begin(), r.points.end(),
                             [](const auto& a, const auto& b) { return a.cv < b.cv; });
  if (it == r.points.begin() || it + 1 == r.points.end())
    r.warnings.push_back("specific_heat: maximum sits at the edge of the grid");
  double hmax = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) hmax = std::max(hmax, grid[i] - grid[i - 1]);
  // relative curvature of c_v across three points as a coarse-grid indicator
  if (r.points.size() >= 3 && it != r.points.begin() && it + 1 != r.points.end()) {
    double c0 = (it - 1)->cv, c1 = it->cv, c2 = (it + 1)->cv;
    if (std::fabs(c0 + c2 - 2 * c1) > 0.25 * std::fabs(c1))
      r.warnings.push_back("specific_heat: grid too coarse near the peak, step " + std::to_string(hmax));
  }
  return r;
}

}  // namespace qpising
