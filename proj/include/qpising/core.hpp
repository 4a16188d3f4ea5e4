#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace qpising {

using cplx = std::complex<double>;
using Index2 = std::array<int, 2>;
using Vec2 = std::array<double, 2>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct CFResult {
  std::vector<std::int64_t> a;  // a_0, a_1, ...
  bool terminated = false;      // remainder hit zero: omega is rational
};

// Euclidean recursion; a_0 = floor(omega).
CFResult continued_fraction(double omega, int depth);

struct Convergent {
  std::int64_t p = 0;
  std::int64_t q = 1;
};

struct ApproxResult {
  std::vector<Convergent> list;  // q strictly increasing, q >= 2
  bool truncated = false;
};

ApproxResult best_approximants(double omega, int depth);

// min_m |x + 2 pi m|, in [0, pi].
double torus_norm(double x);

// min over 1 <= n <= n_max of |2 pi omega n|_T * n^rho.
struct DiophantineScan {
  double c = 0.0;
  std::int64_t argmin = 0;
  bool nearly_rational = false;
};
DiophantineScan diophantine_constant(double omega, double rho, std::int64_t n_max);

struct Frequency {
  double omega = 0.0;
  std::vector<std::int64_t> cf;
  double rho = 1.0;
  double c_lower = 0.0;
};

Frequency make_frequency(double omega, int depth, double rho, std::int64_t n_max);
double golden_mean();
double silver_mean();

struct BoxSpec {
  int L0 = 0;
  int L1 = 0;
  int generation = -1;
  std::int64_t p0 = 0;
  std::int64_t p1 = 0;
  double Omega(int j) const { return j == 0 ? double(p0) / L0 : double(p1) / L1; }
  int sites() const { return L0 * L1; }
};

// All convergents p_i/q_i, i = 0..count (p_0/q_0 = a_0/1).
std::vector<Convergent> convergents(double omega, int count);

// Box with L_j = q_{j,i}; throws for boxes smaller than 3x3.
BoxSpec box_from_generation(double omega0, double omega1, int generation);
BoxSpec box_explicit(int L0, int L1, std::int64_t p0, std::int64_t p1);

struct Harmonic {
  int n0 = 0;
  int n1 = 0;
  cplx amp;
};

struct ModulationSpec {
  double lambda = 0.0;
  std::array<std::vector<Harmonic>, 2> harmonics;
  double decay_A = 1.0;
  double decay_eta = 1.0;
  std::array<std::array<double, 2>, 2> theta{};  // theta[j] = (theta_{j,0}, theta_{j,1})

  // phi^(j)(y0, y1); harmonics are completed to a Hermitian set.
  double phi(int j, double y0, double y1) const;
  // Fills in missing conjugate partners; throws if an existing pair is not conjugate.
  void make_hermitian();
  bool hermitian(double tol = 1e-14) const;
};

ModulationSpec single_cosine(double lambda, int j = 1);  // phi^(j) = cos(y_1)
ModulationSpec layered_preset(double lambda);            // phi^(0) = 0, theta = 0
// phi^(1) = cos(y_1), phi^(0) = cos(y_0) cos(y_1), generic phases
ModulationSpec bidimensional_preset(double lambda);

using HarmonicMap = std::map<Index2, cplx>;

struct CouplingField {
  BoxSpec box;
  std::array<double, 2> J{1.0, 1.0};
  double beta = 0.0;
  double lambda = 0.0;
  std::array<std::array<double, 2>, 2> theta{};
  // bond arrays indexed by site s = x0 * L1 + x1
  std::array<std::vector<double>, 2> Jx;
  std::array<std::vector<double>, 2> tx;
  std::array<std::vector<double>, 2> V;
  std::array<double, 2> tmean{};
  std::array<HarmonicMap, 2> Vhat;
  std::array<HarmonicMap, 2> Ahat;

  int site(int x0, int x1) const;
};

// Throws std::invalid_argument when some J_x <= 0.
CouplingField build_couplings(const BoxSpec& box, const ModulationSpec& mod, std::array<double, 2> J,
                              double beta);

// Recomputes Vhat/Ahat by direct DFT over the box window |n_j| <= floor(L_j/2); entries below
// `drop` are omitted.
void fourier_coefficients(CouplingField& field, double drop = 1e-15);

// Inverse DFT of Vhat; used for the round-trip check.
std::vector<double> inverse_fourier(const CouplingField& field, int j);

// Torus Fourier coefficients of tanh(beta J (1 + lambda phi(y)) + source) - mean, on an N x N
// grid. Used for infinite-volume kernels (frequency omega instead of the box Omega).
HarmonicMap torus_harmonics(const ModulationSpec& mod, int j, double J, double beta, int N,
                            double drop, double* mean_out = nullptr, double source = 0.0);

// A_n = V_n exp(-i pi omega_j n_j) exp(i n . theta_j).
HarmonicMap dress_harmonics(const HarmonicMap& Vhat, int j, Vec2 omega,
                            const std::array<double, 2>& theta_j);

}  // namespace qpising
