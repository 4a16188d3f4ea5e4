#include "qpising/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace qpising {

namespace {
const cplx I(0.0, 1.0);
const double kWilsonChi = 2.0 * (std::sqrt(2.0) + 1.0);
const double kWilsonPsi = -2.0 * (std::sqrt(2.0) - 1.0);

// entry with value, d0, d1, d00, d11 (mixed derivatives of all building blocks vanish)
struct E {
  cplx v, d0, d1, d00, d11;
};

Jet from_entries(const E& a, const E& b, const E& c, const E& d) {
  Jet J;
  const E* e[2][2] = {{&a, &b}, {&c, &d}};
  for (int r = 0; r < 2; ++r)
    for (int s = 0; s < 2; ++s) {
      J.v(r, s) = e[r][s]->v;
      J.d[0](r, s) = e[r][s]->d0;
      J.d[1](r, s) = e[r][s]->d1;
      J.dd[0][0](r, s) = e[r][s]->d00;
      J.dd[1][1](r, s) = e[r][s]->d11;
    }
  return J;
}

Jet C_zeta(Vec2 k, Hopping t, double wilson) {
  const double s0 = std::sin(k[0]), c0 = std::cos(k[0]), s1 = std::sin(k[1]), c1 = std::cos(k[1]);
  E m{t.t1 * c1 + t.t0 * c0 + wilson, -t.t0 * s0, -t.t1 * s1, -t.t0 * c0, -t.t1 * c1};
  E a{-I * t.t1 * s1 - t.t0 * s0, -t.t0 * c0, -I * t.t1 * c1, t.t0 * s0, I * t.t1 * s1};
  E d{-I * t.t1 * s1 + t.t0 * s0, t.t0 * c0, -I * t.t1 * c1, -t.t0 * s0, I * t.t1 * s1};
  E b{-I * m.v, -I * m.d0, -I * m.d1, -I * m.d00, -I * m.d11};
  E c{I * m.v, I * m.d0, I * m.d1, I * m.d00, I * m.d11};
  return from_entries(a, b, c, d);
}

}  // namespace

double kernel_norm(const Mat2& A) { return A.cwiseAbs().sum(); }

Jet operator*(const Jet& a, const Jet& b) {
  Jet r;
  r.v = a.v * b.v;
  for (int i = 0; i < 2; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      r.dd[i][j] = a.dd[i][j] * b.v + a.d[i] * b.d[j] + a.d[j] * b.d[i] + a.v * b.dd[i][j];
  return r;
}

Jet operator+(const Jet& a, const Jet& b) {
  Jet r;
  r.v = a.v + b.v;
  for (int i = 0; i < 2; ++i) {
    r.d[i] = a.d[i] + b.d[i];
    for (int j = 0; j < 2; ++j) r.dd[i][j] = a.dd[i][j] + b.dd[i][j];
  }
  return r;
}

Jet operator*(cplx s, const Jet& a) {
  Jet r;
  r.v = s * a.v;
  for (int i = 0; i < 2; ++i) {
    r.d[i] = s * a.d[i];
    for (int j = 0; j < 2; ++j) r.dd[i][j] = s * a.dd[i][j];
  }
  return r;
}

Jet operator-(const Jet& a, const Jet& b) { return a + cplx(-1.0) * b; }

Jet inverse(const Jet& a) {
  Jet r;
  r.v = a.v.inverse();
  const Mat2& G = r.v;
  for (int i = 0; i < 2; ++i) r.d[i] = -G * a.d[i] * G;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      r.dd[i][j] = -G * a.dd[i][j] * G + G * a.d[i] * G * a.d[j] * G + G * a.d[j] * G * a.d[i] * G;
  return r;
}

double mass_chi(Vec2 k, Hopping t) { return t.t1 * std::cos(k[1]) + t.t0 * std::cos(k[0]) + kWilsonChi; }
double mass_psi0(Vec2 k, Hopping t) { return t.t1 * std::cos(k[1]) + t.t0 * std::cos(k[0]) + kWilsonPsi; }
double mass_psi_effective(Hopping t) {
  return 4.0 * (t.t0 * t.t1 + t.t0 + t.t1 - 1.0) / mass_chi({0.0, 0.0}, t);
}

Jet C_chi(Vec2 k, Hopping t) { return C_zeta(k, t, kWilsonChi); }
Jet C_psi(Vec2 k, Hopping t) { return C_zeta(k, t, kWilsonPsi); }

Jet Q_free(Vec2 k, Hopping t) {
  const double s0 = std::sin(k[0]), c0 = std::cos(k[0]), s1 = std::sin(k[1]), c1 = std::cos(k[1]);
  E c{t.t1 * c1 - t.t0 * c0, t.t0 * s0, -t.t1 * s1, t.t0 * c0, -t.t1 * c1};
  E a{I * t.t1 * s1 - t.t0 * s0, -t.t0 * c0, I * t.t1 * c1, t.t0 * s0, -I * t.t1 * s1};
  E d{I * t.t1 * s1 + t.t0 * s0, t.t0 * c0, I * t.t1 * c1, -t.t0 * s0, -I * t.t1 * s1};
  E b{I * c.v, I * c.d0, I * c.d1, I * c.d00, I * c.d11};
  E e{-I * c.v, -I * c.d0, -I * c.d1, -I * c.d00, -I * c.d11};
  return from_entries(a, b, e, d);
}

Jet g_xi_jet(Vec2 k, Hopping t) { return inverse(C_chi(k, t)); }

Jet g_psi_inverse_jet(Vec2 k, Hopping t) {
  Jet Q = Q_free(k, t);
  return C_psi(k, t) - Q * g_xi_jet(k, t) * Q;
}

Mat2 g_xi(Vec2 k, Hopping t) { return C_chi(k, t).v.inverse(); }

Mat2 g_psi_inverse(Vec2 k, Hopping t) {
  Mat2 Q = Q_free(k, t).v;
  return C_psi(k, t).v - Q * g_xi(k, t) * Q;
}

Mat2 g_psi(Vec2 k, Hopping t) {
  Mat2 A = g_psi_inverse(k, t);
  // entries are O(1); a mass below ~1e-12 is the critical point to rounding
  if (std::abs(A.determinant()) < 1e-24)
    throw std::domain_error("g_psi: singular inverse propagator (critical point at k = 0)");
  return A.inverse();
}

Mat2 remainder_R(Vec2 k, Hopping t) { return g_psi_inverse(k, t) - g_psi_inverse({0.0, 0.0}, t); }

std::array<cplx, 2> initial_velocities(Hopping t) {
  Jet g = g_psi_inverse_jet({0.0, 0.0}, t);
  return {-g.d[0](0, 0), I * g.d[1](0, 0)};
}

Vertices vertex_matrices(Vec2 k, Index2 n, Vec2 Omega) {
  Vertices V;
  for (int j = 0; j < 2; ++j) {
    V.P[j].setZero();
    V.Q[j].setZero();
    if (n[j] == 0) continue;
    const double a = k[j] - kPi * Omega[j] * n[j];
    const double s = std::sin(a), c = std::cos(a);
    if (j == 1) {
      V.P[1] << -I * s, -I * c, I * c, -I * s;
      V.Q[1] = -V.P[1];
    } else {
      V.P[0] << -s, -I * c, I * c, s;
      V.Q[0] = V.P[0];
    }
  }
  return V;
}

double reduce_angle(double x) {
  double r = std::remainder(x, kTwoPi);
  return r <= -kPi ? r + kTwoPi : r;
}

Vec2 shift(Vec2 k, Index2 n, Vec2 Omega) {
  return {reduce_angle(k[0] - kTwoPi * Omega[0] * n[0]), reduce_angle(k[1] - kTwoPi * Omega[1] * n[1])};
}

DressedVertices dressed_vertices(Vec2 k, Index2 n, Hopping t, Vec2 Omega) {
  const Vec2 k2 = shift(k, n, Omega);
  const Vertices V = vertex_matrices(k, n, Omega);
  const Mat2 G = g_xi(k, t), G2 = g_xi(k2, t);
  const Mat2 Q = Q_free(k, t).v, Q2 = Q_free(k2, t).v;
  DressedVertices D;
  for (int j = 0; j < 2; ++j) {
    D.Qpsi[j] = V.Q[j] - Q * G * V.P[j];
    D.QpsiR[j] = V.Q[j] - V.P[j] * G2 * Q2;
    D.Ppsi[j] = V.P[j] - V.Q[j] * G2 * Q2 - Q * G * V.Q[j] + Q * G * V.P[j] * G2 * Q2;
  }
  return D;
}

MomentumGrid momentum_grid(int L0, int L1, BoundaryCondition bc) {
  MomentumGrid g;
  g.bc = bc;
  g.L0 = L0;
  g.L1 = L1;
  const int L[2] = {L0, L1};
  for (int a = 0; a < L0; ++a)
    for (int b = 0; b < L1; ++b) {
      const int kap[2] = {a, b};
      Vec2 k;
      for (int j = 0; j < 2; ++j)
        k[j] = reduce_angle(kPi / L[j] * (2.0 * kap[j] + 1.0 - (bc.alpha[j] > 0 ? 1.0 : 0.0)));
      g.k.push_back(k);
    }
  return g;
}

int MomentumGrid::index(Vec2 q) const {
  const int L[2] = {L0, L1};
  int kap[2];
  for (int j = 0; j < 2; ++j) {
    double x = (q[j] * L[j] / kPi - 1.0 + (bc.alpha[j] > 0 ? 1.0 : 0.0)) / 2.0;
    long r = std::lround(x);
    if (std::fabs(x - r) > 1e-7) return -1;
    kap[j] = static_cast<int>(((r % L[j]) + L[j]) % L[j]);
  }
  return kap[0] * L1 + kap[1];
}

}  // namespace qpising
