#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "qpising/core.hpp"
#include "qpising/fermion.hpp"

namespace qpising {

using Mat2 = Eigen::Matrix2cd;

// Sum of absolute values of the entries.
double kernel_norm(const Mat2& A);

// Value with first and second k-derivatives; products and inverses follow the Leibniz rule.
struct Jet {
  Mat2 v = Mat2::Zero();
  std::array<Mat2, 2> d{Mat2::Zero(), Mat2::Zero()};
  std::array<std::array<Mat2, 2>, 2> dd{{{Mat2::Zero(), Mat2::Zero()}, {Mat2::Zero(), Mat2::Zero()}}};
};
Jet operator*(const Jet& a, const Jet& b);
Jet operator+(const Jet& a, const Jet& b);
Jet operator-(const Jet& a, const Jet& b);
Jet operator*(cplx s, const Jet& a);
Jet inverse(const Jet& a);

struct Hopping {
  double t0 = 0.0, t1 = 0.0;
};

double mass_chi(Vec2 k, Hopping t);
double mass_psi0(Vec2 k, Hopping t);
double mass_psi_effective(Hopping t);

// C_zeta(k) with mass m = m_chi or m_psi0.
Jet C_chi(Vec2 k, Hopping t);
Jet C_psi(Vec2 k, Hopping t);
Jet Q_free(Vec2 k, Hopping t);
Jet g_xi_jet(Vec2 k, Hopping t);
Jet g_psi_inverse_jet(Vec2 k, Hopping t);

Mat2 g_xi(Vec2 k, Hopping t);
Mat2 g_psi_inverse(Vec2 k, Hopping t);
// Throws std::domain_error at the critical point (singular at k = 0).
Mat2 g_psi(Vec2 k, Hopping t);
// g_psi^{-1}(k) - g_psi^{-1}(0)
Mat2 remainder_R(Vec2 k, Hopping t);

// Initial velocities a_0 = -[d_0 g^{-1}(0)]_11, a_1 = i [d_1 g^{-1}(0)]_11.
std::array<cplx, 2> initial_velocities(Hopping t);

struct Vertices {
  std::array<Mat2, 2> P;
  std::array<Mat2, 2> Q;
};
// a = k_j - pi Omega_j n_j; both vanish when n_j = 0.
Vertices vertex_matrices(Vec2 k, Index2 n, Vec2 Omega);

struct DressedVertices {
  std::array<Mat2, 2> Qpsi;   // left endpoint Q^(j) - Q(k) g_xi(k) P^(j)
  std::array<Mat2, 2> QpsiR;  // right endpoint Q^(j) - P^(j) g_xi(k') Q(k')
  std::array<Mat2, 2> Ppsi;   // single-vertex chain
};
DressedVertices dressed_vertices(Vec2 k, Index2 n, Hopping t, Vec2 Omega);

Vec2 shift(Vec2 k, Index2 n, Vec2 Omega);  // k - 2 pi Omega n, reduced to (-pi, pi]
double reduce_angle(double x);             // to (-pi, pi]

struct MomentumGrid {
  BoundaryCondition bc;
  int L0 = 0, L1 = 0;
  std::vector<Vec2> k;  // index kappa0 * L1 + kappa1
  int size() const { return static_cast<int>(k.size()); }
  // index of the grid point equal to k mod 2 pi; -1 if none
  int index(Vec2 q) const;
};
MomentumGrid momentum_grid(int L0, int L1, BoundaryCondition bc);

}  // namespace qpising
