#include "qpising/chain.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "qpising/parallel.hpp"

namespace qpising {

namespace {

Index2 add(Index2 a, Index2 b) { return {a[0] + b[0], a[1] + b[1]}; }

cplx amp(const HarmonicSet& hs, const VertexLabel& l) {
  auto it = hs.A[l.j].find(l.n);
  return it == hs.A[l.j].end() ? cplx(0.0) : it->second;
}

}  // namespace

HarmonicSet harmonic_set(const CouplingField& f, double drop) {
  HarmonicSet hs;
  hs.Omega = {f.box.Omega(0), f.box.Omega(1)};
  hs.t = {f.tmean[0], f.tmean[1]};
  hs.lambda = f.lambda;
  for (int j = 0; j < 2; ++j)
    for (auto [n, a] : f.Ahat[j])
      if (std::abs(a) > drop) hs.A[j][n] = a;
  return hs;
}

Index2 ChainGraph::total() const {
  Index2 s{0, 0};
  for (const auto& l : v) s = add(s, l.n);
  return s;
}

std::vector<VertexLabel> harmonic_support(const HarmonicSet& hs) {
  std::vector<VertexLabel> s;
  for (int j = 0; j < 2; ++j)
    for (auto [n, a] : hs.A[j]) s.push_back({j, n});
  return s;
}

std::vector<ChainGraph> enumerate_graphs(Index2 n, int q, const std::vector<VertexLabel>& support) {
  if (q < 1) throw std::invalid_argument("enumerate_graphs: q must be >= 1");
  std::vector<ChainGraph> out;
  if (support.empty()) return out;
  int maxh = 0;
  for (const auto& l : support) maxh = std::max({maxh, std::abs(l.n[0]), std::abs(l.n[1])});
  ChainGraph cur;
  std::function<void(Index2)> rec = [&](Index2 acc) {
    const int left = q - cur.q();
    if (left == 0) {
      if (acc == n) out.push_back(cur);
      return;
    }
    if (std::abs(n[0] - acc[0]) > left * maxh || std::abs(n[1] - acc[1]) > left * maxh) return;
    for (const auto& l : support) {
      cur.v.push_back(l);
      rec(add(acc, l.n));
      cur.v.pop_back();
    }
  };
  rec({0, 0});
  return out;
}

std::vector<ChainGraph> enumerate_graphs(Index2 n, int q, const std::vector<Index2>& support) {
  std::vector<VertexLabel> s;
  for (int j = 0; j < 2; ++j)
    for (auto m : support) s.push_back({j, m});
  return enumerate_graphs(n, q, s);
}

std::vector<Vec2> line_momenta(const ChainGraph& g, Vec2 k, Vec2 Omega) {
  std::vector<Vec2> out{k};
  for (const auto& l : g.v) out.push_back(shift(out.back(), l.n, Omega));
  return out;
}

Mat2 graph_value(const ChainGraph& g, Vec2 k, const HarmonicSet& hs) {
  const int q = g.q();
  if (q == 0) return Mat2::Zero();
  const auto ks = line_momenta(g, k, hs.Omega);
  if (q == 1) {
    const auto D = dressed_vertices(k, g.v[0].n, hs.t, hs.Omega);
    return -amp(hs, g.v[0]) * D.Ppsi[g.v[0].j];
  }
  Mat2 W = amp(hs, g.v[0]) * dressed_vertices(k, g.v[0].n, hs.t, hs.Omega).Qpsi[g.v[0].j];
  for (int i = 1; i < q; ++i) {
    const Vec2 ki = ks[i];
    const auto& l = g.v[i];
    Mat2 F = (i + 1 < q) ? vertex_matrices(ki, l.n, hs.Omega).P[l.j]
                         : dressed_vertices(ki, l.n, hs.t, hs.Omega).QpsiR[l.j];
    W = W * g_xi(ki, hs.t) * (amp(hs, l) * F);
  }
  return (q % 2 == 0 ? 1.0 : -1.0) * W;
}

std::vector<Mat2> effective_potential_orders(const HarmonicSet& hs, Index2 n, int q_max, Vec2 k) {
  if (q_max < 1) throw std::invalid_argument("effective_potential: q_max must be >= 1");
  const auto sup = harmonic_support(hs);
  std::vector<Mat2> orders(q_max, Mat2::Zero());
  if (sup.empty()) return orders;
  int maxh = 0;
  for (const auto& l : sup) maxh = std::max({maxh, std::abs(l.n[0]), std::abs(l.n[1])});
  auto reachable = [&](Index2 acc, int steps) {
    return std::abs(n[0] - acc[0]) <= steps * maxh && std::abs(n[1] - acc[1]) <= steps * maxh;
  };

  Mat2 tot = Mat2::Zero();
  for (const auto& l : sup)
    if (l.n == n) tot -= amp(hs, l) * dressed_vertices(k, l.n, hs.t, hs.Omega).Ppsi[l.j];
  orders[0] = tot;

  const Mat2 Gk = g_xi(k, hs.t);
  const Mat2 Qk = Q_free(k, hs.t).v;
  std::map<Index2, Mat2> layer;
  for (const auto& l : sup) {
    if (!reachable(l.n, q_max - 1)) continue;
    const Mat2 P = vertex_matrices(k, l.n, hs.Omega).P[l.j];
    const Mat2 Qj = vertex_matrices(k, l.n, hs.Omega).Q[l.j];
    Mat2 QL = Qj - Qk * Gk * P;
    auto it = layer.find(l.n);
    if (it == layer.end())
      layer.emplace(l.n, amp(hs, l) * QL);
    else
      it->second += amp(hs, l) * QL;
  }
  for (int q = 2; q <= q_max; ++q) {
    const double sign = (q % 2 == 0) ? 1.0 : -1.0;
    std::map<Index2, Mat2> next;
    for (const auto& [acc, Mt] : layer) {
      const Vec2 kl = shift(k, acc, hs.Omega);
      const Mat2 MG = Mt * g_xi(kl, hs.t);
      for (const auto& l : sup) {
        const Index2 a2 = add(acc, l.n);
        if (a2 == n) tot += sign * MG * (amp(hs, l) * dressed_vertices(kl, l.n, hs.t, hs.Omega).QpsiR[l.j]);
        if (q < q_max && reachable(a2, q_max - q)) {
          Mat2 term = MG * (amp(hs, l) * vertex_matrices(kl, l.n, hs.Omega).P[l.j]);
          auto it = next.find(a2);
          if (it == next.end())
            next.emplace(a2, term);
          else
            it->second += term;
        }
      }
    }
    orders[q - 1] = tot;
    layer.swap(next);
  }
  return orders;
}

Mat2 effective_potential_at(const HarmonicSet& hs, Index2 n, int q_max, Vec2 k) {
  return effective_potential_orders(hs, n, q_max, k).back();
}

std::vector<Mat2> box_potential_orders(const HarmonicSet& hs, Index2 n, int q_max, Vec2 k, int L0, int L1) {
  if (L0 < 1 || L1 < 1) throw std::invalid_argument("box_potential_orders: box sides must be positive");
  int maxh = 0;
  for (const auto& l : harmonic_support(hs)) maxh = std::max({maxh, std::abs(l.n[0]), std::abs(l.n[1])});
  const int reach = q_max * maxh;
  std::vector<Mat2> out(q_max, Mat2::Zero());
  for (int m0 = -(reach + std::abs(n[0])) / L0 - 1; m0 <= (reach + std::abs(n[0])) / L0 + 1; ++m0)
    for (int m1 = -(reach + std::abs(n[1])) / L1 - 1; m1 <= (reach + std::abs(n[1])) / L1 + 1; ++m1) {
      const Index2 img{n[0] + m0 * L0, n[1] + m1 * L1};
      if (std::abs(img[0]) > reach || std::abs(img[1]) > reach) continue;
      const auto o = effective_potential_orders(hs, img, q_max, k);
      for (int q = 0; q < q_max; ++q) out[q] += o[q];
    }
  return out;
}

std::map<Index2, Mat2> effective_potential_all(const HarmonicSet& hs, int q_max, Vec2 k, double prune) {
  if (q_max < 1) throw std::invalid_argument("effective_potential: q_max must be >= 1");
  const auto sup = harmonic_support(hs);
  std::map<Index2, Mat2> out;
  auto accumulate = [](std::map<Index2, Mat2>& m, Index2 n, const Mat2& v) {
    auto it = m.find(n);
    if (it == m.end())
      m.emplace(n, v);
    else
      it->second += v;
  };
  for (const auto& l : sup) accumulate(out, l.n, -amp(hs, l) * dressed_vertices(k, l.n, hs.t, hs.Omega).Ppsi[l.j]);
  if (q_max == 1) return out;

  const Mat2 Gk = g_xi(k, hs.t);
  const Mat2 Qk = Q_free(k, hs.t).v;
  std::map<Index2, Mat2> layer;
  for (const auto& l : sup) {
    const Vertices V = vertex_matrices(k, l.n, hs.Omega);
    accumulate(layer, l.n, amp(hs, l) * (V.Q[l.j] - Qk * Gk * V.P[l.j]));
  }
  for (int q = 2; q <= q_max; ++q) {
    const double sign = (q % 2 == 0) ? 1.0 : -1.0;
    std::map<Index2, Mat2> next;
    for (const auto& [acc, Mt] : layer) {
      if (kernel_norm(Mt) < prune) continue;
      const Vec2 kl = shift(k, acc, hs.Omega);
      const Mat2 MG = Mt * g_xi(kl, hs.t);
      for (const auto& l : sup) {
        const Index2 a2 = add(acc, l.n);
        const DressedVertices D = dressed_vertices(kl, l.n, hs.t, hs.Omega);
        accumulate(out, a2, sign * MG * (amp(hs, l) * D.QpsiR[l.j]));
        if (q < q_max) accumulate(next, a2, MG * (amp(hs, l) * vertex_matrices(kl, l.n, hs.Omega).P[l.j]));
      }
    }
    layer.swap(next);
  }
  return out;
}

EffectiveKernel effective_potential(const HarmonicSet& hs, const std::vector<Index2>& ns, int q_max,
                                    const MomentumGrid& grid) {
  EffectiveKernel K;
  K.grid = grid;
  K.q_max = q_max;
  K.lambda = hs.lambda;
  for (auto n : ns) K.values[n].assign(grid.size(), Mat2::Zero());
  std::vector<Index2> nv(ns.begin(), ns.end());
  parallel_for(static_cast<std::size_t>(grid.size()), 0, [&](std::size_t ik) {
    for (auto n : nv) K.values[n][ik] = effective_potential_at(hs, n, q_max, grid.k[ik]);
  });
  double Asum = 0.0, q1 = 0.0;
  for (int j = 0; j < 2; ++j)
    for (auto [n, a] : hs.A[j]) Asum += std::abs(a);
  double gsup = 0.0;
  for (const auto& k : grid.k) {
    Eigen::JacobiSVD<Mat2> svd(g_xi(k, hs.t));
    gsup = std::max(gsup, svd.singularValues()(0));
  }
  for (const auto& [n, v] : K.values)
    for (const auto& m : v) q1 = std::max(q1, m.cwiseAbs().maxCoeff());
  K.ratio = Asum * gsup;
  K.convergent = K.ratio < 1.0;
  K.tail = K.convergent ? q1 * std::pow(K.ratio, q_max) / (1.0 - K.ratio) : std::numeric_limits<double>::infinity();
  return K;
}

MomentumKernel momentum_kernel(const HarmonicSet& hs, const MomentumGrid& grid) {
  const int nk = grid.size();
  MomentumKernel K;
  K.Kpp = Eigen::MatrixXcd::Zero(2 * nk, 2 * nk);
  K.Kpc = K.Kpp;
  K.Kcc = K.Kpp;
  for (int i = 0; i < nk; ++i) {
    const Vec2 k = grid.k[i];
    K.Kpp.block<2, 2>(2 * i, 2 * i) += C_psi(k, hs.t).v;
    K.Kcc.block<2, 2>(2 * i, 2 * i) += C_chi(k, hs.t).v;
    K.Kpc.block<2, 2>(2 * i, 2 * i) += Q_free(k, hs.t).v;
    for (int j = 0; j < 2; ++j)
      for (auto [n, a] : hs.A[j]) {
        const int i2 = grid.index(shift(k, n, hs.Omega));
        if (i2 < 0) throw std::invalid_argument("momentum_kernel: frequency does not map the grid to itself");
        const Vertices V = vertex_matrices(k, n, hs.Omega);
        K.Kpp.block<2, 2>(2 * i, 2 * i2) += a * V.P[j];
        K.Kcc.block<2, 2>(2 * i, 2 * i2) += a * V.P[j];
        K.Kpc.block<2, 2>(2 * i, 2 * i2) += a * V.Q[j];
      }
  }
  return K;
}

SchurOracle schur_oracle(const HarmonicSet& hs, const MomentumGrid& grid, SchurOrdering ordering) {
  SchurOracle S;
  S.grid = grid;
  S.hs = hs;
  MomentumKernel K = momentum_kernel(hs, grid);
  if (ordering == SchurOrdering::kChiBlockLU) {
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(K.Kcc);
    S.Keff = K.Kpp - K.Kpc * lu.solve(K.Kpc);
  } else {
    const Eigen::Index m = K.Kpp.rows();
    Eigen::MatrixXcd full(2 * m, 2 * m);
    full << K.Kpp, K.Kpc, K.Kpc, K.Kcc;
    Eigen::MatrixXcd inv = full.partialPivLu().inverse();
    S.Keff = inv.topLeftCorner(m, m).partialPivLu().inverse();
  }
  return S;
}

Mat2 SchurOracle::vertex(int ik, Index2 n) const {
  const Vec2 k = grid.k[ik];
  const int i2 = grid.index(shift(k, n, hs.Omega));
  if (i2 < 0) throw std::invalid_argument("SchurOracle::vertex: shifted momentum off grid");
  Mat2 v = -Keff.block<2, 2>(2 * ik, 2 * i2);
  if (n[0] == 0 && n[1] == 0) v += g_psi_inverse(k, hs.t);
  return v;
}

DecayReport decay_check(const EffectiveKernel& K, double floor) {
  DecayReport r;
  for (const auto& [n, v] : K.values) {
    if (n[0] == 0 && n[1] == 0) continue;
    double s = 0.0;
    for (const auto& m : v) s = std::max(s, m.cwiseAbs().maxCoeff());
    if (s > floor) r.samples.emplace_back(std::abs(n[0]) + std::abs(n[1]), s);
  }
  // several n share one |n|: keep the largest
  std::map<int, double> best;
  for (auto [a, s] : r.samples) best[a] = std::max(best[a], s);
  if (best.size() < 3) throw std::invalid_argument("decay_check: need at least 3 distinct |n| above the floor");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [a, s] : best) {
    double y = std::log(s);
    sx += a;
    sy += y;
    sxx += double(a) * a;
    sxy += a * y;
  }
  const double m = double(best.size());
  r.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  r.C = std::exp((sy - r.slope * sx) / m);
  r.points = static_cast<int>(best.size());
  return r;
}

SymmetryReport symmetry_check(const EffectiveKernel& K, double tol) {
  SymmetryReport r;
  const cplx I(0.0, 1.0);
  auto it0 = K.values.find({0, 0});
  for (int ik = 0; ik < K.grid.size(); ++ik) {
    const Vec2 k = K.grid.k[ik];
    const int im = K.grid.index({-k[0], -k[1]});
    if (im < 0) throw std::invalid_argument("symmetry_check: grid is not symmetric under k -> -k");
    if (it0 != K.values.end()) {
      const Mat2& A = it0->second[ik];
      const Mat2& B = it0->second[im];
      const cplx a = A(0, 0), am = B(0, 0);
      const cplx b = -I * A(0, 1), bm = -I * B(0, 1);
      double dev = 0.0;
      dev = std::max(dev, std::abs(A(1, 1) + std::conj(a)));
      dev = std::max(dev, std::abs(A(1, 0) + A(0, 1)));
      dev = std::max(dev, std::abs(a + am));
      dev = std::max(dev, std::abs(b - bm));
      dev = std::max(dev, std::fabs(b.imag()));
      r.max_deviation = std::max(r.max_deviation, dev);
      const int ir = K.grid.index({k[0], -k[1]});
      if (ir < 0) throw std::invalid_argument("symmetry_check: grid is not symmetric under k1 -> -k1");
      r.max_reflection = std::max(r.max_reflection, std::abs(a - std::conj(it0->second[ir](0, 0))));
    }
    for (const auto& [n, v] : K.values) {
      auto jt = K.values.find({-n[0], -n[1]});
      if (jt == K.values.end()) continue;
      Mat2 c = jt->second[im].conjugate();
      std::swap(c(0, 0), c(1, 1));
      std::swap(c(0, 1), c(1, 0));
      r.max_conjugation = std::max(r.max_conjugation, (v[ik] - c).cwiseAbs().maxCoeff());
    }
  }
  r.pass = r.max_deviation < tol;
  return r;
}

}  // namespace qpising
