#include "qpising/rg.hpp"

#include <algorithm>
#include <boost/math/interpolators/quintic_hermite.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace qpising {

namespace {
const cplx I(0.0, 1.0);

Mat2 sigma2() {
  Mat2 s;
  s << 0.0, -I, I, 0.0;
  return s;
}

cplx sigma2_complex(const Mat2& V) { return 0.5 * I * (V(0, 1) - V(1, 0)); }

Index2 sum2(Index2 a, Index2 b) { return {a[0] + b[0], a[1] + b[1]}; }

Vec2 orbit(Index2 m, Vec2 omega) { return shift({0.0, 0.0}, m, omega); }

}  // namespace

double torus_length(Vec2 k) { return std::hypot(torus_norm(k[0]), torus_norm(k[1])); }

// ---------------------------------------------------------------- cutoff

struct CutoffFamily::Table {
  boost::math::interpolators::cardinal_quintic_hermite<std::vector<double>> interp;
  Table(std::vector<double>&& y, std::vector<double>&& dy, std::vector<double>&& d2y, double x0, double dx)
      : interp(std::move(y), std::move(dy), std::move(d2y), x0, dx) {}
};

CutoffFamily::CutoffFamily(double gamma, bool rectangular)
    : gamma_(gamma), rectangular_(rectangular), a_(kPi / (2.0 * gamma)), b_(kPi / 2.0) {
  if (!(gamma > 1.0)) throw std::invalid_argument("CutoffFamily: gamma must exceed 1");
  const double a = a_, b = b_;
  auto psi = [a, b](double s) {
    if (s <= a || s >= b) return 0.0;
    return std::exp(-1.0 / ((s - a) * (b - s)));
  };
  auto dpsi = [a, b, &psi](double s) {
    if (s <= a || s >= b) return 0.0;
    const double u = (s - a) * (b - s);
    return psi(s) * (a + b - 2.0 * s) / (u * u);
  };
  const int n = 4097;
  const double dx = (b - a) / (n - 1);
  std::vector<double> cum(n, 0.0);
  for (int i = 1; i < n; ++i)
    cum[i] = cum[i - 1] +
             boost::math::quadrature::gauss<double, 20>::integrate(psi, a + (i - 1) * dx, a + i * dx);
  const double Z = cum.back();
  std::vector<double> y(n), dy(n), d2y(n);
  for (int i = 0; i < n; ++i) {
    const double x = a + i * dx;
    y[i] = 1.0 - cum[i] / Z;
    dy[i] = -psi(x) / Z;
    d2y[i] = -dpsi(x) / Z;
  }
  y.back() = 0.0;
  table_ = std::make_shared<const Table>(std::move(y), std::move(dy), std::move(d2y), a, dx);
}

double CutoffFamily::chi(double r) const {
  if (rectangular_) return r < 0.5 * (a_ + b_) ? 1.0 : 0.0;
  if (r <= a_) return 1.0;
  if (r >= b_) return 0.0;
  return std::clamp(table_->interp(r), 0.0, 1.0);
}

double CutoffFamily::chi_derivative(double r) const {
  if (rectangular_ || r <= a_ || r >= b_) return 0.0;
  return table_->interp.prime(r);
}

double CutoffFamily::chi_h(Vec2 k, int h) const {
  if (h >= 1) return 1.0;
  return chi(std::pow(gamma_, -h) * torus_length(k));
}

double CutoffFamily::f(Vec2 k, int h) const { return chi_h(k, h) - chi_h(k, h - 1); }

double CutoffFamily::ftilde(Vec2 k, int h) const { return chi_h(k, h) * (1.0 - chi_h(k, h - 1)); }

std::pair<double, double> CutoffFamily::support(int h) const {
  const double lo = 0.5 * kPi * std::pow(gamma_, h - 2);
  const double hi = h >= 1 ? std::numeric_limits<double>::infinity() : 0.5 * kPi * std::pow(gamma_, h);
  return {lo, hi};
}

// ---------------------------------------------------------------- propagators

double RGState::nu_at(int hh) const {
  auto it = nu.find(hh);
  return it == nu.end() ? 0.0 : it->second;
}

std::array<cplx, 2> RGState::velocity(int hh) const {
  // below the last computed scale the velocities are frozen
  auto it = a.lower_bound(hh);
  return it == a.end() ? a_top : it->second;
}

Mat2 A_inverse(Vec2 k, const RGState& s, const std::array<cplx, 2>& a) {
  Mat2 M = g_psi_inverse(k, s.t) + (s.mu - s.m_psi) * sigma2();
  const cplx d0 = a[0] - s.a_top[0], d1 = a[1] - s.a_top[1];
  const double s0 = std::sin(k[0]), s1 = std::sin(k[1]);
  M(0, 0) += -I * d1 * s1 - d0 * s0;
  M(1, 1) += -I * std::conj(d1) * s1 + std::conj(d0) * s0;
  return M;
}

namespace {
Mat2 invert_guarded(const Mat2& M, int h) {
  const cplx det = M.determinant();
  if (std::abs(det) < 1e-300 || std::abs(det) < 1e-28 * M.cwiseAbs2().sum())
    throw std::domain_error("single_scale_propagator: singular A_h at scale " + std::to_string(h));
  return M.inverse();
}
}  // namespace

Mat2 single_scale_propagator(Vec2 k, int h, const RGState& s, const CutoffFamily& fam) {
  if (h > 1) throw std::invalid_argument("single_scale_propagator: h must be <= 1");
  const double f = fam.f(k, h);
  const double ft = h < 1 ? fam.ftilde(k, h) : 0.0;
  if (f == 0.0 && ft == 0.0) return Mat2::Zero();
  const auto ah = s.velocity(h);
  const Mat2 A = invert_guarded(A_inverse(k, s, ah), h);
  Mat2 g = f * A;
  if (ft != 0.0) {
    const auto ah1 = s.velocity(h + 1);
    if (ah1 != ah) {
      const double c = fam.chi_h(k, h);
      const std::array<cplx, 2> abar{ah1[0] + c * (ah[0] - ah1[0]), ah1[1] + c * (ah[1] - ah1[1])};
      g += ft * (invert_guarded(A_inverse(k, s, abar), h) - A);
    }
  }
  return g;
}

// ---------------------------------------------------------------- localisation

double sigma2_coefficient(const Mat2& V) { return sigma2_complex(V).real(); }

LocalParts localize(const KernelFn& V, double step, double tol) {
  LocalParts L;
  L.V0 = V({0.0, 0.0});
  for (int j = 0; j < 2; ++j) {
    Vec2 p{0.0, 0.0}, m{0.0, 0.0};
    p[j] = step;
    m[j] = -step;
    L.dV[j] = (V(p) - V(m)) / (2.0 * step);
  }
  const cplx c = sigma2_complex(L.V0);
  L.sigma2 = c.real();
  L.structure_residue =
      std::abs(L.V0(0, 0)) + std::abs(L.V0(1, 1)) + std::abs(L.V0(0, 1) + L.V0(1, 0)) + std::abs(c.imag());
  if (L.structure_residue > tol)
    throw std::domain_error("localize: V(0) is not proportional to sigma_2 (residue " +
                            std::to_string(L.structure_residue) + ")");
  L.da = {L.dV[0](0, 0), -I * L.dV[1](0, 0)};
  return L;
}

Mat2 renormalized(const KernelFn& V, const LocalParts& L, Vec2 k) {
  return V(k) - L.V0 - k[0] * L.dV[0] - k[1] * L.dV[1];
}

// ---------------------------------------------------------------- Diophantine gain

GainReport diophantine_gain_check(const ClusterNode& tree, double C0, double tau, double gamma) {
  GainReport rep;
  std::function<void(const ClusterNode&)> visit = [&](const ClusterNode& T) {
    for (const auto& c : T.children) visit(c);
    if (T.points < 2) return;
    if (T.resonant || (T.n_T[0] == 0 && T.n_T[1] == 0)) {
      ++rep.exempt;
      return;
    }
    const double edge = 0.5 * kPi * std::pow(gamma, T.h_ext);
    if (torus_length(T.k_in) > edge * (1.0 + 1e-12) || torus_length(T.k_out) > edge * (1.0 + 1e-12)) {
      ++rep.exempt;
      return;
    }
    ++rep.checked;
    const double nT = std::max(std::abs(T.n_T[0]), std::abs(T.n_T[1]));
    const double need = C0 * std::pow(gamma, -T.h_ext / tau);
    if (nT < need && rep.pass) {
      rep.pass = false;
      std::ostringstream os;
      os << "cluster n_T=(" << T.n_T[0] << "," << T.n_T[1] << ") h_ext=" << T.h_ext << " |n_T|=" << nT
         << " < " << need;
      rep.offending = os.str();
    }
  };
  visit(tree);
  return rep;
}

// ---------------------------------------------------------------- RG model

RGModel::RGModel(const ModulationSpec& mod, std::array<double, 2> J, double beta, const RGConfig& cfg)
    : cfg_(cfg), fam_(cfg.gamma, cfg.rectangular_cutoff), mod_(mod), J_(J), beta_(beta) {
  if (cfg_.omega[0] == 0.0 && cfg_.omega[1] == 0.0) cfg_.omega = {golden_mean(), golden_mean()};
  hs_.Omega = cfg_.omega;
  hs_.lambda = mod.lambda;
  double mean[2];
  for (int j = 0; j < 2; ++j) {
    HarmonicMap V = torus_harmonics(mod, j, J[j], beta, cfg_.torus_grid, cfg_.harmonic_drop, &mean[j]);
    hs_.A[j] = dress_harmonics(V, j, hs_.Omega, mod.theta[j]);
  }
  hs_.t = {mean[0], mean[1]};
  for (const auto& [n, v] : vertices_at({0.0, 0.0}))
    if ((n[0] != 0 || n[1] != 0) && kernel_norm(v) > cfg_.vertex_drop) support_.push_back(n);
  top_ = localize([this](Vec2 k) { return vertex({0, 0}, k); }, 1e-5, 1e-8);
}

const std::map<Index2, Mat2>& RGModel::vertices_at(Vec2 k) const {
  k = {reduce_angle(k[0]), reduce_angle(k[1])};
  auto it = cache_.find(k);
  if (it != cache_.end()) return it->second;
  if (cache_.size() > 200000) cache_.clear();
  std::map<Index2, Mat2> v;
  if (!hs_.A[0].empty() || !hs_.A[1].empty()) v = effective_potential_all(hs_, cfg_.q_first, k);
  return cache_.emplace(k, std::move(v)).first->second;
}

Mat2 RGModel::vertex(Index2 n, Vec2 k) const {
  const auto& m = vertices_at(k);
  auto it = m.find(n);
  return it == m.end() ? Mat2::Zero() : it->second;
}

Mat2 RGModel::vertex_R0(Vec2 k) const {
  k = {reduce_angle(k[0]), reduce_angle(k[1])};
  return vertex({0, 0}, k) - top_.V0 - k[0] * top_.dV[0] - k[1] * top_.dV[1];
}

RGState RGModel::initial_state(double mu, const std::map<int, double>& nu) const {
  RGState s;
  s.h = 2;
  s.gamma = cfg_.gamma;
  s.t = hs_.t;
  s.m_psi = m_psi();
  s.mu = mu;
  s.a_top = initial_velocities(hs_.t);
  s.a[2] = s.a_top;
  s.nu = nu;
  return s;
}

BetaValues RGModel::top_betas() const {
  BetaValues b;
  b.h = 2;
  const cplx c = sigma2_complex(top_.V0);
  b.beta_nu = c.real() / cfg_.gamma;
  b.beta_nu_imag = c.imag() / cfg_.gamma;
  b.beta_a = top_.da;
  return b;
}

namespace {

enum class PointKind { kV, kR0, kNu };

struct Point {
  PointKind kind;
  Index2 n;
};

struct Chain {
  std::vector<Point> pts;
  std::vector<Vec2> line_k;              // momenta at external k = 0
  std::vector<std::vector<int>> scales;  // allowed scales per line (descending)
};

// Renormalised value of one chain with fixed line scales.
class ChainEvaluator {
 public:
  ChainEvaluator(const RGModel& m, const RGState& s, const Chain& c, const std::vector<int>& sc)
      : model_(m), state_(s), chain_(c), sc_(sc), gamma_(m.config().gamma), omega_(m.omega()) {}

  Mat2 root(Vec2 k) const { return segment(0, static_cast<int>(chain_.pts.size()) - 1, k); }

  ClusterNode tree(int h_ext) const {
    return build(0, static_cast<int>(chain_.pts.size()) - 1, {0.0, 0.0}, h_ext);
  }

 private:
  Index2 nsum(int a, int b) const {
    Index2 s{0, 0};
    for (int i = a; i <= b; ++i) s = sum2(s, chain_.pts[i].n);
    return s;
  }
  int min_scale(int a, int b) const {
    int m = std::numeric_limits<int>::max();
    for (int i = a; i < b; ++i) m = std::min(m, sc_[i]);
    return m;
  }

  Mat2 point(int i, Vec2 k) const {
    const Point& p = chain_.pts[i];
    switch (p.kind) {
      case PointKind::kV:
        return model_.vertex(p.n, k);
      case PointKind::kR0:
        return model_.vertex_R0(k);
      case PointKind::kNu: {
        int hT = std::numeric_limits<int>::min();
        if (i > 0) hT = std::max(hT, sc_[i - 1]);
        if (i + 1 < static_cast<int>(chain_.pts.size())) hT = std::max(hT, sc_[i]);
        return std::pow(gamma_, hT) * state_.nu_at(hT) * sigma2();
      }
    }
    return Mat2::Zero();
  }

  Mat2 segment(int a, int b, Vec2 kin) const {
    if (a == b) return point(a, kin);
    const int smin = min_scale(a, b);
    Mat2 res = Mat2::Identity();
    Vec2 k = kin;
    int start = a;
    for (int i = a; i <= b; ++i) {
      if (i == b || sc_[i] == smin) {
        res = res * sub(start, i, k);
        k = shift(k, nsum(start, i), omega_);
        if (i < b) {
          res = res * single_scale_propagator(k, smin, state_, model_.cutoff());
          start = i + 1;
        }
      }
    }
    return res;
  }

  Mat2 sub(int a, int b, Vec2 k) const {
    if (a == b) return point(a, k);
    const Index2 n = nsum(a, b);
    if (n[0] != 0 || n[1] != 0) return segment(a, b, k);
    k = {reduce_angle(k[0]), reduce_angle(k[1])};
    const double d = 1e-4 * 0.5 * kPi * std::pow(gamma_, min_scale(a, b) - 2);
    Mat2 r = segment(a, b, k) - segment(a, b, {0.0, 0.0});
    for (int j = 0; j < 2; ++j) {
      Vec2 p{0.0, 0.0}, m{0.0, 0.0};
      p[j] = d;
      m[j] = -d;
      r -= k[j] * (segment(a, b, p) - segment(a, b, m)) / (2.0 * d);
    }
    return r;
  }

  ClusterNode build(int a, int b, Vec2 kin, int h_ext) const {
    ClusterNode T;
    T.h_ext = h_ext;
    T.n_T = nsum(a, b);
    T.resonant = T.n_T == Index2{0, 0};
    T.points = b - a + 1;
    T.k_in = {reduce_angle(kin[0]), reduce_angle(kin[1])};
    T.k_out = shift(kin, T.n_T, omega_);
    for (int i = a; i <= b; ++i)
      if (chain_.pts[i].kind == PointKind::kNu) ++T.nu_points;
    if (a == b) {
      T.h_T = h_ext + 1;
      return T;
    }
    T.h_T = min_scale(a, b);
    Vec2 k = kin;
    int start = a;
    for (int i = a; i <= b; ++i)
      if (i == b || sc_[i] == T.h_T) {
        if (i > start) {
          T.children.push_back(build(start, i, k, T.h_T));
          if (T.children.back().resonant) ++T.resonant_children;
        }
        k = shift(k, nsum(start, i), omega_);
        start = i + 1;
      }
    return T;
  }

  const RGModel& model_;
  const RGState& state_;
  const Chain& chain_;
  const std::vector<int>& sc_;
  double gamma_;
  Vec2 omega_;
};

std::vector<int> allowed_scales(Vec2 k, const CutoffFamily& fam, int h_lo) {
  std::vector<int> out;
  const double r = torus_length(k);
  if (r == 0.0) return out;
  for (int s = 1; s >= h_lo; --s) {
    auto [lo, hi] = fam.support(s);
    if (r > lo && r < hi && fam.f(k, s) != 0.0) out.push_back(s);
    if (hi < r) break;
  }
  return out;
}

std::vector<Chain> enumerate_chains(const RGModel& model, int h_lo) {
  const int q_max = model.config().q_max;
  std::vector<Point> labels;
  for (auto n : model.vertex_support()) labels.push_back({PointKind::kV, n});
  if (model.lambda() != 0.0) {
    labels.push_back({PointKind::kR0, {0, 0}});
    labels.push_back({PointKind::kNu, {0, 0}});
  }
  Index2 maxn{0, 0};
  for (auto n : model.vertex_support())
    for (int j = 0; j < 2; ++j) maxn[j] = std::max(maxn[j], std::abs(n[j]));

  std::vector<Chain> out;
  Chain cur;
  std::function<void(Index2)> dfs = [&](Index2 m) {
    const int pos = static_cast<int>(cur.pts.size());
    if (pos == q_max) return;
    for (const auto& l : labels) {
      if ((pos == 0) && l.kind != PointKind::kV) continue;
      const Index2 m2 = sum2(m, l.n);
      const int left = q_max - pos - 1;
      if (std::abs(m2[0]) > left * maxn[0] || std::abs(m2[1]) > left * maxn[1]) continue;
      if (m2 == Index2{0, 0}) {
        if (l.kind != PointKind::kV || pos == 0) continue;
        cur.pts.push_back(l);
        out.push_back(cur);
        cur.pts.pop_back();
        continue;
      }
      const Vec2 k = orbit(m2, model.omega());
      auto sc = allowed_scales(k, model.cutoff(), h_lo);
      if (sc.empty()) continue;
      cur.pts.push_back(l);
      cur.line_k.push_back(k);
      cur.scales.push_back(std::move(sc));
      dfs(m2);
      cur.pts.pop_back();
      cur.line_k.pop_back();
      cur.scales.pop_back();
    }
  };
  dfs({0, 0});
  return out;
}

}  // namespace

struct RGModel::ChainCache {
  std::vector<Chain> chains;
};

BetaValues RGModel::beta_functions(const RGState& s, int h) const {
  BetaValues b;
  b.h = h;
  if (h > 1) throw std::invalid_argument("beta_functions: h must be <= 1");
  if (lambda() == 0.0) return b;
  if (!chains_ || h < chains_lo_) {
    chains_ = std::make_shared<ChainCache>();
    chains_lo_ = std::min(h, cfg_.h_min);
    chains_->chains = enumerate_chains(*this, chains_lo_);
  }
  const std::vector<Chain>& chains = chains_->chains;
  const double gamma = cfg_.gamma;
  const double d = 1e-4 * 0.5 * kPi * std::pow(gamma, h - 2);
  double C0 = 0.0;
  for (int j = 0; j < 2; ++j) C0 = std::max(C0, diophantine_constant(hs_.Omega[j], 1.0, 10000).c);
  C0 /= kTwoPi;
  Mat2 W0 = Mat2::Zero();
  std::array<Mat2, 2> dW{Mat2::Zero(), Mat2::Zero()};
  for (const Chain& c : chains) {
    const int nl = static_cast<int>(c.scales.size());
    bool can = false;
    for (const auto& sc : c.scales)
      if (std::find(sc.begin(), sc.end(), h) != sc.end()) can = true;
    if (!can) continue;
    std::vector<int> idx(nl, 0), sc(nl);
    while (true) {
      int mn = 1;
      for (int i = 0; i < nl; ++i) {
        sc[i] = c.scales[i][idx[i]];
        mn = std::min(mn, sc[i]);
      }
      if (mn == h) {
        ChainEvaluator ev(*this, s, c, sc);
        W0 += ev.root({0.0, 0.0});
        for (int j = 0; j < 2; ++j) {
          Vec2 p{0.0, 0.0}, m{0.0, 0.0};
          p[j] = d;
          m[j] = -d;
          dW[j] += (ev.root(p) - ev.root(m)) / (2.0 * d);
        }
        ++b.graphs;
        GainReport g = diophantine_gain_check(ev.tree(h - 1), C0, 1.0, gamma);
        b.gain.checked += g.checked;
        b.gain.exempt += g.exempt;
        if (!g.pass && b.gain.pass) {
          b.gain.pass = false;
          b.gain.offending = g.offending;
        }
      }
      int i = 0;
      while (i < nl && ++idx[i] == static_cast<int>(c.scales[i].size())) idx[i++] = 0;
      if (i == nl) break;
    }
  }
  const cplx c = sigma2_complex(W0);
  b.beta_nu = std::pow(gamma, -h + 1) * c.real();
  b.beta_nu_imag = std::pow(gamma, -h + 1) * c.imag();
  b.beta_a = {dW[0](0, 0), -I * dW[1](0, 0)};

  // source couplings: one local source point and one vertex, line on scale h
  for (int j = 0; j < 2; ++j) {
    for (const auto& [n1, z] : s.Z[j]) {
      if (std::abs(z) < 1e-300) continue;
      std::vector<Index2> others = support_;
      others.push_back({0, 0});
      for (auto n2 : others) {
        auto V = [&](Vec2 k) { return (n2 == Index2{0, 0}) ? vertex_R0(k) : vertex(n2, k); };
        const Vec2 k1 = orbit(n1, hs_.Omega), k2 = orbit(n2, hs_.Omega);
        Mat2 W = z * sigma2() * single_scale_propagator(k1, h, s, fam_) * V(k1) +
                 V({0.0, 0.0}) * single_scale_propagator(k2, h, s, fam_) * (z * sigma2());
        const cplx bz = sigma2_complex(W);
        if (bz != 0.0) b.beta_z[j][sum2(n1, n2)] += bz;
      }
    }
  }
  return b;
}

std::array<HarmonicMap, 2> RGModel::initial_sources() const {
  std::array<HarmonicMap, 2> Z;
  const double eps = 1e-5;
  for (int j = 0; j < 2; ++j) {
    std::array<std::map<Index2, Mat2>, 2> K;
    for (int side = 0; side < 2; ++side) {
      const double e = side == 0 ? eps : -eps;
      HarmonicSet hs = hs_;
      double mean = 0.0;
      HarmonicMap V = torus_harmonics(mod_, j, J_[j], beta_, cfg_.torus_grid, cfg_.harmonic_drop, &mean, e);
      hs.A[j] = dress_harmonics(V, j, hs.Omega, mod_.theta[j]);
      if (j == 0)
        hs.t.t0 = mean;
      else
        hs.t.t1 = mean;
      std::map<Index2, Mat2> v;
      if (!hs.A[0].empty() || !hs.A[1].empty()) v = effective_potential_all(hs, cfg_.q_first, {0.0, 0.0});
      for (auto& [n, m] : v) m = -m;
      v[{0, 0}] += g_psi_inverse({0.0, 0.0}, hs.t);
      K[side] = std::move(v);
    }
    for (const auto& [n, kp] : K[0]) {
      auto it = K[1].find(n);
      const Mat2 km = it == K[1].end() ? Mat2::Zero() : it->second;
      const cplx z = sigma2_complex(-(kp - km) / (2.0 * eps));
      if (std::abs(z) > 1e-12) Z[j][n] = z;
    }
  }
  return Z;
}

// ---------------------------------------------------------------- flow

bool velocity_corridor(const RGState& s, int h) {
  const auto a = s.velocity(h);
  for (int j = 0; j < 2; ++j) {
    const double r = std::abs(a[j]) / std::abs(s.a_top[j]);
    if (r < 7.0 / 8.0 || r > 9.0 / 8.0) return false;
  }
  return true;
}

namespace {
BetaValues betas_at(const RGModel& model, const RGState& s) {
  return s.h == 2 ? model.top_betas() : model.beta_functions(s, s.h);
}

void record(RGState& s, const BetaValues& b) {
  ScaleRecord r;
  r.h = s.h;
  r.nu = s.nu_at(s.h);
  r.a = s.velocity(s.h);
  r.beta_nu = b.beta_nu;
  r.beta_nu_imag = b.beta_nu_imag;
  r.beta_a = b.beta_a;
  r.graphs = b.graphs;
  s.history.push_back(r);
}
}  // namespace

RGState flow_step(const RGModel& model, RGState s) {
  const BetaValues b = betas_at(model, s);
  record(s, b);
  const int h = s.h;
  s.nu[h - 1] = model.config().gamma * s.nu_at(h) + b.beta_nu;
  const auto a = s.velocity(h);
  s.a[h - 1] = {a[0] + b.beta_a[0], a[1] + b.beta_a[1]};
  if (h == 2 && s.Z[0].empty() && s.Z[1].empty()) s.Z = model.initial_sources();
  for (int j = 0; j < 2; ++j)
    for (const auto& [n, z] : b.beta_z[j]) s.Z[j][n] += z;
  s.h = h - 1;
  if (!velocity_corridor(s, s.h))
    throw std::runtime_error("flow_step: velocity corridor 7/8..9/8 left at h = " + std::to_string(s.h) +
                             " (lambda too large)");
  return s;
}

namespace {
double nu_norm(const std::map<int, double>& nu, double gamma) {
  double n = 0.0;
  for (auto [h, v] : nu) n += std::abs(v) * std::pow(gamma, -h / 4.0) * std::sqrt(gamma);
  return n;
}
}  // namespace

CountertermResult solve_counterterm(const RGModel& model, double mu, int max_iter, double tol) {
  const RGConfig& cfg = model.config();
  const double gamma = cfg.gamma;
  const int h_min = cfg.h_min;
  std::map<int, double> nu;
  for (int h = h_min; h <= 2; ++h) nu[h] = 0.0;
  CountertermResult res;
  double prev_diff = -1.0;
  for (int it = 0; it < max_iter; ++it) {
    RGState s = model.initial_state(mu, nu);
    std::map<int, double> beta;
    res.corridor_ok = true;
    while (s.h >= h_min) {
      const BetaValues b = betas_at(model, s);
      record(s, b);
      beta[s.h] = b.beta_nu;
      const auto a = s.velocity(s.h);
      s.a[s.h - 1] = {a[0] + b.beta_a[0], a[1] + b.beta_a[1]};
      --s.h;
      if (!velocity_corridor(s, s.h)) res.corridor_ok = false;
    }
    std::map<int, double> next;
    for (int h = h_min; h <= 2; ++h) {
      double v = 0.0;
      for (int k = h_min; k <= h; ++k) v -= std::pow(gamma, k - h - 1) * beta[k];
      next[h] = v;
    }
    std::map<int, double> diff;
    for (auto [h, v] : next) diff[h] = v - nu[h];
    const double dn = nu_norm(diff, gamma);
    if (prev_diff > 0.0) res.contraction_ratio = std::max(res.contraction_ratio, dn / prev_diff);
    if (prev_diff > 0.0 && res.contraction_ratio >= 1.0)
      throw std::runtime_error("solve_counterterm: iteration is not a contraction; use a smaller lambda");
    prev_diff = dn;
    nu = next;
    res.iterations = it + 1;
    // final state carries the trajectory that generated the last betas
    s.nu = nu;
    res.state = s;
    if (dn <= tol * (1.0 + nu_norm(nu, gamma)) || dn == 0.0) break;
  }
  res.trajectory = res.state.history;
  for (auto& r : res.trajectory) r.nu = nu[r.h];
  res.norm = nu_norm(nu, gamma);
  return res;
}

double onsager_beta_c(std::array<double, 2> J) {
  auto F = [&](double b) { return std::sinh(2.0 * b * J[0]) * std::sinh(2.0 * b * J[1]) - 1.0; };
  boost::math::tools::eps_tolerance<double> tol(52);
  std::uintmax_t it = 200;
  auto r = boost::math::tools::toms748_solve(F, 1e-3, 10.0, tol, it);
  return 0.5 * (r.first + r.second);
}

double mass_root_beta_c(std::array<double, 2> J) {
  auto F = [&](double b) { return mass_psi_effective({std::tanh(b * J[0]), std::tanh(b * J[1])}); };
  boost::math::tools::eps_tolerance<double> tol(52);
  std::uintmax_t it = 200;
  auto r = boost::math::tools::toms748_solve(F, 1e-3, 10.0, tol, it);
  return 0.5 * (r.first + r.second);
}

CriticalResult critical_beta(const ModulationSpec& mod, std::array<double, 2> J, const RGConfig& cfg,
                             double half_width) {
  CriticalResult out;
  out.beta_c0 = mass_root_beta_c(J);
  auto F = [&](double b) {
    RGModel model(mod, J, b, cfg);
    CountertermResult ct = solve_counterterm(model, 0.0);
    out.contraction_ratio = std::max(out.contraction_ratio, ct.contraction_ratio);
    const double mu = model.m_psi() + cfg.gamma * cfg.gamma * ct.state.nu_at(2);
    out.trace.push_back({b, mu});
    return mu;
  };
  if (mod.lambda == 0.0) {
    out.beta_c = out.beta_c0;
    return out;
  }
  const double lo = out.beta_c0 - half_width, hi = out.beta_c0 + half_width;
  const double flo = F(lo), fhi = F(hi);
  if (flo * fhi > 0.0) {
    std::ostringstream os;
    os << "critical_beta: no sign change of mu on [" << lo << ", " << hi << "]:";
    for (auto [b, m] : out.trace) os << " (" << b << ", " << m << ")";
    throw std::runtime_error(os.str());
  }
  boost::math::tools::eps_tolerance<double> tol(40);
  std::uintmax_t it = 60;
  auto r = boost::math::tools::toms748_solve(F, lo, hi, flo, fhi, tol, it);
  out.iterations = static_cast<int>(it);
  out.beta_c = 0.5 * (r.first + r.second);
  out.b_lambda = out.beta_c - out.beta_c0;
  return out;
}

// ---------------------------------------------------------------- numerical checks

PropagatorBoundReport propagator_bounds(const RGState& s, const CutoffFamily& fam, int h_min, int h_max,
                                        int radial, int angular) {
  PropagatorBoundReport rep;
  rep.h_min = h_min;
  rep.h_max = h_max;
  const double gamma = fam.gamma();
  for (int h = h_max; h >= h_min; --h) {
    auto [lo, hi] = fam.support(h);
    if (!std::isfinite(hi)) hi = kPi * std::sqrt(2.0);
    const double d = 1e-3 * lo;
    std::array<double, 3> sup{0.0, 0.0, 0.0};
    auto g = [&](Vec2 k) { return single_scale_propagator(k, h, s, fam); };
    for (int ir = 0; ir < radial; ++ir) {
      const double r = lo + (hi - lo) * (ir + 0.5) / radial;
      for (int ia = 0; ia < angular; ++ia) {
        const double th = kTwoPi * (ia + 0.5) / angular;
        const Vec2 k{r * std::cos(th), r * std::sin(th)};
        if (std::abs(k[0]) > kPi || std::abs(k[1]) > kPi) continue;
        const Mat2 g0 = g(k);
        sup[0] = std::max(sup[0], kernel_norm(g0));
        for (int j = 0; j < 2; ++j) {
          Vec2 p = k, m = k;
          p[j] += d;
          m[j] -= d;
          const Mat2 gp = g(p), gm = g(m);
          sup[1] = std::max(sup[1], kernel_norm((gp - gm) / (2.0 * d)));
          sup[2] = std::max(sup[2], kernel_norm((gp - 2.0 * g0 + gm) / (d * d)));
        }
        Vec2 pp{k[0] + d, k[1] + d}, pm{k[0] + d, k[1] - d}, mp{k[0] - d, k[1] + d}, mm{k[0] - d, k[1] - d};
        sup[2] = std::max(sup[2], kernel_norm((g(pp) - g(pm) - g(mp) + g(mm)) / (4.0 * d * d)));
      }
    }
    for (int sidx = 0; sidx < 3; ++sidx) rep.ratio[sidx].push_back(sup[sidx] * std::pow(gamma, h * (1.0 + sidx)));
  }
  rep.spread = 0.0;
  for (int sidx = 0; sidx < 3; ++sidx) {
    const auto [mn, mx] = std::minmax_element(rep.ratio[sidx].begin(), rep.ratio[sidx].end());
    rep.C1 = std::max(rep.C1, *mx);
    rep.spread = std::max(rep.spread, *mx / *mn);
  }
  return rep;
}

StretchedExpReport stretched_exp_propagator_check(int h, const RGState& s, const CutoffFamily& fam, int grid,
                                                  double y_max) {
  if (h > 0) throw std::invalid_argument("stretched_exp_propagator_check: h must be <= 0");
  StretchedExpReport rep;
  rep.h = h;
  const double gamma = fam.gamma();
  const double gh = std::pow(gamma, h);
  // k = gamma^h p, p on [-pi/2, pi/2]^2; G(p) = gamma^h g^(h)(gamma^h p) is O(1)
  const double dp = kPi / grid;
  std::vector<Mat2> col(grid, Mat2::Zero());
  std::vector<double> pv(grid);
  for (int a = 0; a < grid; ++a) pv[a] = -0.5 * kPi + (a + 0.5) * dp;
  std::vector<Mat2> row(grid, Mat2::Zero());
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid; ++b) {
      const Mat2 G = gh * single_scale_propagator({gh * pv[a], gh * pv[b]}, h, s, fam);
      col[b] += G;  // summed over p0: transform along axis 1
      row[a] += G;  // summed over p1: transform along axis 0
    }
  const double w = dp * dp / (kTwoPi * kTwoPi);
  double gmax = 0.0;
  std::vector<std::pair<double, double>> samples;
  for (double y = 0.25; y <= y_max; y += 0.25) {
    Mat2 g1 = Mat2::Zero(), g0 = Mat2::Zero();
    for (int a = 0; a < grid; ++a) {
      const cplx e = std::exp(I * pv[a] * y);
      g1 += e * col[a];
      g0 += e * row[a];
    }
    const double v = w * std::max(kernel_norm(g1), kernel_norm(g0));
    samples.push_back({y, v});
    gmax = std::max(gmax, v);
  }
  // envelope: running maximum over the tail, sampled in windows
  const double window = 16.0;
  for (std::size_t i = 0; i < samples.size();) {
    const double y0 = samples[i].first;
    double best = 0.0, by = y0;
    while (i < samples.size() && samples[i].first < y0 + window) {
      if (samples[i].second > best) {
        best = samples[i].second;
        by = samples[i].first;
      }
      ++i;
    }
    rep.envelope.push_back({by, best});
  }
  // least squares of log env = log C - kappa sqrt(y) above the roundoff floor
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  std::vector<std::pair<double, double>> fit;
  for (auto [y, v] : rep.envelope)
    if (y >= 2.0 && v > 1e-11 * gmax) fit.push_back({std::sqrt(y), std::log(v)});
  for (auto [x, l] : fit) {
    sx += x;
    sy += l;
    sxx += x * x;
    sxy += x * l;
    ++n;
  }
  if (n >= 3) {
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;
    rep.kappa = -slope;
    rep.C = std::exp(icpt);
    double r2 = 0.0;
    for (auto [x, l] : fit) r2 += std::pow(l - icpt - slope * x, 2);
    rep.rms = std::sqrt(r2 / n);
  }
  return rep;
}

}  // namespace qpising
