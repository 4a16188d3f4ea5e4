#include "qpising/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace qpising {

CFResult continued_fraction(double omega, int depth) {
  if (!(omega > 0.0 && omega < 1.0)) throw std::invalid_argument("continued_fraction: omega must lie in (0,1)");
  if (depth < 1) throw std::invalid_argument("continued_fraction: depth must be >= 1");
  CFResult out;
  // long double keeps the Euclidean remainders honest a few levels deeper
  long double x = omega;
  for (int i = 0; i <= depth; ++i) {
    long double a = std::floor(x);
    out.a.push_back(static_cast<std::int64_t>(a));
    long double r = x - a;
    if (r < 1e-12L) {
      out.terminated = true;
      break;
    }
    x = 1.0L / r;
  }
  return out;
}

ApproxResult best_approximants(double omega, int depth) {
  CFResult cf = continued_fraction(omega, depth);
  ApproxResult out;
  std::int64_t pm2 = 0, qm2 = 1, pm1 = 1, qm1 = 0;
  for (std::size_t i = 0; i < cf.a.size(); ++i) {
    std::int64_t p = cf.a[i] * pm1 + pm2;
    std::int64_t q = cf.a[i] * qm1 + qm2;
    pm2 = pm1;
    qm2 = qm1;
    pm1 = p;
    qm1 = q;
    if (q >= 2 && (out.list.empty() || q > out.list.back().q)) out.list.push_back({p, q});
  }
  out.truncated = cf.terminated || static_cast<int>(cf.a.size()) <= depth;
  return out;
}

double torus_norm(double x) {
  double r = std::fmod(std::fabs(x), kTwoPi);
  return std::min(r, kTwoPi - r);
}

DiophantineScan diophantine_constant(double omega, double rho, std::int64_t n_max) {
  if (n_max < 1) throw std::invalid_argument("diophantine_constant: n_max must be >= 1");
  DiophantineScan out;
  out.c = std::numeric_limits<double>::infinity();
  // fractional part of n*omega accumulated exactly in long double
  long double frac = 0.0L;
  const long double w = omega;
  for (std::int64_t n = 1; n <= n_max; ++n) {
    frac += w;
    frac -= std::floor(frac);
    double d = static_cast<double>(std::min(frac, 1.0L - frac)) * kTwoPi;
    double v = d * std::pow(static_cast<double>(n), rho);
    if (v < out.c) {
      out.c = v;
      out.argmin = n;
    }
  }
  out.nearly_rational = out.c < 1e-9;
  return out;
}

Frequency make_frequency(double omega, int depth, double rho, std::int64_t n_max) {
  Frequency f;
  f.omega = omega;
  f.cf = continued_fraction(omega, depth).a;
  f.rho = rho;
  f.c_lower = diophantine_constant(omega, rho, n_max).c;
  return f;
}

double golden_mean() { return (std::sqrt(5.0) - 1.0) / 2.0; }
double silver_mean() { return std::sqrt(2.0) - 1.0; }

BoxSpec box_explicit(int L0, int L1, std::int64_t p0, std::int64_t p1) {
  if (L0 < 3 || L1 < 3) throw std::invalid_argument("box: smallest supported box is 3x3");
  BoxSpec b;
  b.L0 = L0;
  b.L1 = L1;
  b.p0 = p0;
  b.p1 = p1;
  return b;
}

std::vector<Convergent> convergents(double omega, int count) {
  CFResult cf = continued_fraction(omega, std::max(count, 1));
  std::vector<Convergent> out;
  std::int64_t pm2 = 0, qm2 = 1, pm1 = 1, qm1 = 0;
  for (auto a : cf.a) {
    std::int64_t p = a * pm1 + pm2, q = a * qm1 + qm2;
    pm2 = pm1;
    qm2 = qm1;
    pm1 = p;
    qm1 = q;
    out.push_back({p, q});
  }
  return out;
}

BoxSpec box_from_generation(double omega0, double omega1, int generation) {
  if (generation < 0) throw std::invalid_argument("box: generation must be >= 0");
  auto c0 = convergents(omega0, generation + 1);
  auto c1 = convergents(omega1, generation + 1);
  if (generation >= static_cast<int>(c0.size()) || generation >= static_cast<int>(c1.size()))
    throw std::invalid_argument("box: frequency has too few convergents for generation " +
                                std::to_string(generation));
  BoxSpec b = box_explicit(static_cast<int>(c0[generation].q), static_cast<int>(c1[generation].q),
                           c0[generation].p, c1[generation].p);
  b.generation = generation;
  return b;
}

double ModulationSpec::phi(int j, double y0, double y1) const {
  double s = 0.0;
  for (const auto& h : harmonics[j]) s += (h.amp * std::exp(cplx(0.0, h.n0 * y0 + h.n1 * y1))).real();
  return s;
}

void ModulationSpec::make_hermitian() {
  for (int j = 0; j < 2; ++j) {
    std::map<Index2, cplx> m;
    for (const auto& h : harmonics[j]) m[{h.n0, h.n1}] += h.amp;
    for (auto [n, a] : std::map<Index2, cplx>(m)) {
      Index2 mn{-n[0], -n[1]};
      auto it = m.find(mn);
      if (it == m.end()) {
        m[mn] = std::conj(a);
      } else if (std::abs(it->second - std::conj(a)) > 1e-14 * (1.0 + std::abs(a))) {
        throw std::invalid_argument("modulation: harmonics are not conjugate-symmetric");
      }
    }
    harmonics[j].clear();
    for (auto [n, a] : m) harmonics[j].push_back({n[0], n[1], a});
  }
}

bool ModulationSpec::hermitian(double tol) const {
  for (int j = 0; j < 2; ++j) {
    std::map<Index2, cplx> m;
    for (const auto& h : harmonics[j]) m[{h.n0, h.n1}] += h.amp;
    for (auto [n, a] : m) {
      auto it = m.find({-n[0], -n[1]});
      if (it == m.end() || std::abs(it->second - std::conj(a)) > tol) return false;
    }
  }
  return true;
}

ModulationSpec single_cosine(double lambda, int j) {
  ModulationSpec m;
  m.lambda = lambda;
  m.harmonics[j] = {{0, 1, 0.5}, {0, -1, 0.5}};
  m.decay_A = 0.5;
  m.decay_eta = 1.0;
  m.theta = {{{0.3, 1.1}, {0.7, 0.2}}};
  return m;
}

ModulationSpec layered_preset(double lambda) {
  ModulationSpec m = single_cosine(lambda, 1);
  m.theta = {};
  return m;
}

ModulationSpec bidimensional_preset(double lambda) {
  ModulationSpec m = single_cosine(lambda, 1);
  m.harmonics[0] = {{1, 1, 0.25}, {-1, -1, 0.25}, {1, -1, 0.25}, {-1, 1, 0.25}};
  return m;
}

int CouplingField::site(int x0, int x1) const {
  int a = ((x0 % box.L0) + box.L0) % box.L0;
  int b = ((x1 % box.L1) + box.L1) % box.L1;
  return a * box.L1 + b;
}

CouplingField build_couplings(const BoxSpec& box, const ModulationSpec& mod, std::array<double, 2> J,
                              double beta) {
  if (box.L0 < 3 || box.L1 < 3) throw std::invalid_argument("build_couplings: box smaller than 3x3");
  if (!(beta > 0.0)) throw std::invalid_argument("build_couplings: beta must be positive");
  CouplingField f;
  f.box = box;
  f.J = J;
  f.beta = beta;
  f.lambda = mod.lambda;
  f.theta = mod.theta;
  const int N = box.sites();
  const double W0 = kTwoPi * box.Omega(0), W1 = kTwoPi * box.Omega(1);
  for (int j = 0; j < 2; ++j) {
    f.Jx[j].assign(N, J[j]);
    f.tx[j].assign(N, 0.0);
    f.V[j].assign(N, 0.0);
    const bool flat = mod.lambda == 0.0 || mod.harmonics[j].empty();
    double sum = 0.0;
    for (int x0 = 0; x0 < box.L0; ++x0) {
      for (int x1 = 0; x1 < box.L1; ++x1) {
        int s = x0 * box.L1 + x1;
        if (!flat) {
          double ph = mod.phi(j, W0 * x0 + mod.theta[j][0], W1 * x1 + mod.theta[j][1]);
          f.Jx[j][s] = (1.0 + mod.lambda * ph) * J[j];
        }
        if (!(f.Jx[j][s] > 0.0))
          throw std::invalid_argument("build_couplings: lambda too large, some J_x <= 0");
        f.tx[j][s] = std::tanh(beta * f.Jx[j][s]);
        sum += f.tx[j][s];
      }
    }
    if (flat) {
      f.tmean[j] = std::tanh(beta * J[j]);
      std::fill(f.tx[j].begin(), f.tx[j].end(), f.tmean[j]);
    } else {
      f.tmean[j] = sum / N;
      for (int s = 0; s < N; ++s) f.V[j][s] = f.tx[j][s] - f.tmean[j];
      // remove the residual O(eps) mean so that sum V = 0 holds to roundoff
      double r = 0.0;
      for (double v : f.V[j]) r += v;
      r /= N;
      for (double& v : f.V[j]) v -= r;
    }
  }
  fourier_coefficients(f);
  return f;
}

namespace {

int wrap_index(int n, int L) {
  int h = L / 2;
  int m = ((n % L) + L) % L;
  return m > h ? m - L : m;
}

}  // namespace

void fourier_coefficients(CouplingField& f, double drop) {
  const int L0 = f.box.L0, L1 = f.box.L1, N = f.box.sites();
  const double W0 = kTwoPi * f.box.Omega(0), W1 = kTwoPi * f.box.Omega(1);
  for (int j = 0; j < 2; ++j) {
    f.Vhat[j].clear();
    f.Ahat[j].clear();
    bool zero = std::all_of(f.V[j].begin(), f.V[j].end(), [](double v) { return v == 0.0; });
    if (zero) continue;
    // separable DFT: first along x1, then x0
    std::vector<int> n0s, n1s;
    for (int a = 0; a < L0; ++a) n0s.push_back(wrap_index(a, L0));
    for (int b = 0; b < L1; ++b) n1s.push_back(wrap_index(b, L1));
    std::vector<cplx> tmp(static_cast<std::size_t>(L0) * L1);
    for (int x0 = 0; x0 < L0; ++x0)
      for (int bi = 0; bi < L1; ++bi) {
        cplx acc = 0.0;
        for (int x1 = 0; x1 < L1; ++x1)
          acc += f.V[j][x0 * L1 + x1] * std::exp(cplx(0.0, -n1s[bi] * (W1 * x1 + f.theta[j][1])));
        tmp[x0 * L1 + bi] = acc;
      }
    for (int ai = 0; ai < L0; ++ai)
      for (int bi = 0; bi < L1; ++bi) {
        cplx acc = 0.0;
        for (int x0 = 0; x0 < L0; ++x0)
          acc += tmp[x0 * L1 + bi] * std::exp(cplx(0.0, -n0s[ai] * (W0 * x0 + f.theta[j][0])));
        acc /= double(N);
        Index2 n{n0s[ai], n1s[bi]};
        if (n[0] == 0 && n[1] == 0) continue;
        if (std::abs(acc) > drop) f.Vhat[j][n] = acc;
      }
    // enforce exact Hermitian pairs
    for (auto& [n, v] : f.Vhat[j]) {
      Index2 m{-n[0], -n[1]};
      auto it = f.Vhat[j].find(m);
      if (it != f.Vhat[j].end() && n < m) {
        cplx avg = 0.5 * (v + std::conj(it->second));
        v = avg;
        it->second = std::conj(avg);
      }
    }
    f.Ahat[j] = dress_harmonics(f.Vhat[j], j, {f.box.Omega(0), f.box.Omega(1)}, f.theta[j]);
  }
}

std::vector<double> inverse_fourier(const CouplingField& f, int j) {
  const int L0 = f.box.L0, L1 = f.box.L1;
  const double W0 = kTwoPi * f.box.Omega(0), W1 = kTwoPi * f.box.Omega(1);
  std::vector<double> out(static_cast<std::size_t>(L0) * L1, 0.0);
  for (int x0 = 0; x0 < L0; ++x0)
    for (int x1 = 0; x1 < L1; ++x1) {
      cplx acc = 0.0;
      for (auto [n, v] : f.Vhat[j])
        acc += v * std::exp(cplx(0.0, n[0] * (W0 * x0 + f.theta[j][0]) + n[1] * (W1 * x1 + f.theta[j][1])));
      out[x0 * L1 + x1] = acc.real();
    }
  return out;
}

HarmonicMap torus_harmonics(const ModulationSpec& mod, int j, double J, double beta, int N, double drop,
                            double* mean_out, double source) {
  HarmonicMap out;
  std::vector<double> F(static_cast<std::size_t>(N) * N);
  double mean = 0.0;
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      double y0 = kTwoPi * a / N, y1 = kTwoPi * b / N;
      double v = std::tanh(beta * J * (1.0 + mod.lambda * mod.phi(j, y0, y1)) + source);
      F[a * N + b] = v;
      mean += v;
    }
  mean /= double(N) * N;
  if (mean_out) *mean_out = mean;
  if (mod.lambda == 0.0 || mod.harmonics[j].empty()) return out;
  std::vector<cplx> tmp(static_cast<std::size_t>(N) * N);
  for (int a = 0; a < N; ++a)
    for (int nb = 0; nb < N; ++nb) {
      cplx acc = 0.0;
      int n1 = wrap_index(nb, N);
      for (int b = 0; b < N; ++b) acc += (F[a * N + b] - mean) * std::exp(cplx(0.0, -n1 * kTwoPi * b / N));
      tmp[a * N + nb] = acc;
    }
  for (int na = 0; na < N; ++na)
    for (int nb = 0; nb < N; ++nb) {
      int n0 = wrap_index(na, N), n1 = wrap_index(nb, N);
      if (n0 == 0 && n1 == 0) continue;
      cplx acc = 0.0;
      for (int a = 0; a < N; ++a) acc += tmp[a * N + nb] * std::exp(cplx(0.0, -n0 * kTwoPi * a / N));
      acc /= double(N) * N;
      if (std::abs(acc) > drop) out[{n0, n1}] = acc;
    }
  return out;
}

HarmonicMap dress_harmonics(const HarmonicMap& Vhat, int j, Vec2 omega, const std::array<double, 2>& th) {
  HarmonicMap out;
  for (auto [n, v] : Vhat) {
    double ph = -kPi * omega[j] * n[j] + n[0] * th[0] + n[1] * th[1];
    out[n] = v * std::exp(cplx(0.0, ph));
  }
  return out;
}

}  // namespace qpising
