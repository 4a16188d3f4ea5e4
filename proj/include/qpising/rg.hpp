#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "qpising/chain.hpp"
#include "qpising/core.hpp"
#include "qpising/kernels.hpp"

namespace qpising {

// |k|_T for a momentum: Euclidean norm of the per-component torus distances.
double torus_length(Vec2 k);

// Radial cutoff chi(r): 1 for r <= pi/(2 gamma), 0 for r >= pi/2, normalised bump CDF in between.
// The rectangular variant (step at the midpoint) is a non-smooth control.
class CutoffFamily {
 public:
  explicit CutoffFamily(double gamma = 5.0, bool rectangular = false);

  double gamma() const { return gamma_; }
  bool rectangular() const { return rectangular_; }
  double chi(double r) const;
  double chi_derivative(double r) const;
  // chi_h(k) = chi(gamma^{-h} |k|_T); chi_1 = 1.
  double chi_h(Vec2 k, int h) const;
  double f(Vec2 k, int h) const;       // chi_h - chi_{h-1}
  double ftilde(Vec2 k, int h) const;  // chi_h (1 - chi_{h-1})
  // Open annulus outside which f_h vanishes: (pi/2 gamma^{h-2}, pi/2 gamma^h); h = 1 has no outer edge.
  std::pair<double, double> support(int h) const;

 private:
  double gamma_;
  bool rectangular_;
  double a_, b_;
  struct Table;
  std::shared_ptr<const Table> table_;
};

struct RGConfig {
  double gamma = 5.0;
  int q_max = 4;           // vertices per renormalised graph
  int q_first = 4;         // order of the first (xi) integration series
  int h_min = -15;
  int torus_grid = 32;     // N x N grid for the torus harmonics of tanh
  double harmonic_drop = 1e-13;
  double vertex_drop = 1e-14;
  Vec2 omega{0.0, 0.0};    // zero means golden mean in both directions
  bool rectangular_cutoff = false;
};

struct ScaleRecord {
  int h = 0;
  double nu = 0.0;
  std::array<cplx, 2> a{};
  double beta_nu = 0.0;
  std::array<cplx, 2> beta_a{};
  double beta_nu_imag = 0.0;  // residue of the sigma_2 extraction
  int graphs = 0;
};

struct RGState {
  int h = 2;
  double gamma = 5.0;
  Hopping t;
  double m_psi = 0.0;
  double mu = 0.0;
  std::array<cplx, 2> a_top{};             // a_j^(2)
  std::map<int, double> nu;                // nu_h along the trajectory
  std::map<int, std::array<cplx, 2>> a;    // a_j^(h) for h >= current
  std::vector<ScaleRecord> history;
  std::array<HarmonicMap, 2> Z;            // source couplings Z_{h,n}^(j)

  double nu_at(int h) const;
  std::array<cplx, 2> velocity(int h) const;  // frozen below the last computed scale
};

// A_h^{-1}(k) = g_psi^{-1}(k) with mass mu and velocities a_j.
Mat2 A_inverse(Vec2 k, const RGState& s, const std::array<cplx, 2>& a);
// g^(h)(k) = f_h A_h + ftilde_h (Abar_h - A_h); zero outside the support annulus.
Mat2 single_scale_propagator(Vec2 k, int h, const RGState& s, const CutoffFamily& fam);

struct LocalParts {
  Mat2 V0 = Mat2::Zero();
  std::array<Mat2, 2> dV{Mat2::Zero(), Mat2::Zero()};
  double sigma2 = 0.0;           // c in V(0) = c sigma_2
  double structure_residue = 0.0;
  std::array<cplx, 2> da{};      // velocity shifts (-[d_0 V]_11 sign conventions: a0 += [d0V]_11, a1 -= i[d1V]_11)
};
using KernelFn = std::function<Mat2(Vec2)>;
// Throws std::domain_error if V(0) is not of sigma_2 form beyond tol.
LocalParts localize(const KernelFn& V, double step = 1e-5, double tol = 1e-10);
Mat2 renormalized(const KernelFn& V, const LocalParts& L, Vec2 k);
double sigma2_coefficient(const Mat2& V);

struct ClusterNode {
  int h_T = 0;
  int h_ext = 0;
  Index2 n_T{0, 0};
  bool resonant = false;
  int points = 0;         // Q_T: vertices in the cluster
  int nu_points = 0;      // M_T^nu
  int resonant_children = 0;  // R_T
  Vec2 k_in{0.0, 0.0}, k_out{0.0, 0.0};
  std::vector<ClusterNode> children;
};

struct GainReport {
  bool pass = true;
  int checked = 0;
  int exempt = 0;
  std::string offending;
};
// Non-resonant clusters whose external momenta lie inside |k|_T <= pi/2 gamma^{h_ext} must have
// |n_T| >= C0 gamma^{-h_ext / tau}.
GainReport diophantine_gain_check(const ClusterNode& tree, double C0, double tau, double gamma);

struct BetaValues {
  int h = 0;
  double beta_nu = 0.0;
  double beta_nu_imag = 0.0;
  std::array<cplx, 2> beta_a{};
  std::array<HarmonicMap, 2> beta_z;
  int graphs = 0;
  GainReport gain;
};

// First-integration data for one (modulation, J, beta) at the infinite-volume frequency.
class RGModel {
 public:
  RGModel(const ModulationSpec& mod, std::array<double, 2> J, double beta, const RGConfig& cfg);

  const RGConfig& config() const { return cfg_; }
  const CutoffFamily& cutoff() const { return fam_; }
  const HarmonicSet& harmonics() const { return hs_; }
  Vec2 omega() const { return hs_.Omega; }
  Hopping hopping() const { return hs_.t; }
  double m_psi() const { return mass_psi_effective(hs_.t); }
  double lambda() const { return hs_.lambda; }
  const std::vector<Index2>& vertex_support() const { return support_; }
  const LocalParts& top_local() const { return top_; }

  Mat2 vertex(Index2 n, Vec2 k) const;  // V_n^xi(k)
  Mat2 vertex_R0(Vec2 k) const;         // R V_0^xi(k)

  // State at h = 2 with mass mu and the counterterm trajectory nu (may be empty).
  RGState initial_state(double mu, const std::map<int, double>& nu = {}) const;
  // beta_{nu,2}, beta_{a,2} from the local part of V_0^xi.
  BetaValues top_betas() const;
  // Betas at scale h <= 1 from renormalised chain graphs with h_Gamma = h.
  BetaValues beta_functions(const RGState& s, int h) const;
  // Initial Z_{2,n}^(j): sigma_2 part of the source kernel -d/d eps K_eff(0) at t -> tanh(beta J + eps).
  std::array<HarmonicMap, 2> initial_sources() const;

 private:
  const std::map<Index2, Mat2>& vertices_at(Vec2 k) const;

  RGConfig cfg_;
  CutoffFamily fam_;
  ModulationSpec mod_;
  std::array<double, 2> J_;
  double beta_;
  HarmonicSet hs_;
  std::vector<Index2> support_;
  LocalParts top_;
  mutable std::map<Vec2, std::map<Index2, Mat2>> cache_;
  struct ChainCache;
  mutable std::shared_ptr<ChainCache> chains_;
  mutable int chains_lo_ = 0;
};

// Advances one scale: nu_{h-1} = gamma nu_h + beta_nu, a^(h-1) = a^(h) + beta_a, Z += beta_z.
// Throws std::runtime_error if the velocity corridor 7/8..9/8 is left.
RGState flow_step(const RGModel& model, RGState s);
bool velocity_corridor(const RGState& s, int h);

struct CountertermResult {
  RGState state;                       // trajectory from h = 2 down to h_min
  std::vector<ScaleRecord> trajectory;
  int iterations = 0;
  double contraction_ratio = 0.0;
  double norm = 0.0;                   // sum_k |nu_k| gamma^{-k/4} gamma^{1/2}
  bool corridor_ok = true;
};

// Picard iteration for nu_h = -sum_{h_min <= k <= h} gamma^{k-h-1} beta_{nu,k}, mu fixed.
CountertermResult solve_counterterm(const RGModel& model, double mu, int max_iter = 30, double tol = 1e-15);

struct CriticalResult {
  double beta_c = 0.0;
  double beta_c0 = 0.0;
  double b_lambda = 0.0;
  int iterations = 0;
  double contraction_ratio = 0.0;
  std::vector<std::pair<double, double>> trace;  // (beta, mu)
};
// Root of m_psi(beta) + gamma^2 nu_2(beta) on the mu = 0 branch.
CriticalResult critical_beta(const ModulationSpec& mod, std::array<double, 2> J, const RGConfig& cfg,
                             double half_width = 0.05);
// Root of sinh(2 beta J0) sinh(2 beta J1) = 1.
double onsager_beta_c(std::array<double, 2> J);
// Root of m_psi(tanh beta J0, tanh beta J1) = 0.
double mass_root_beta_c(std::array<double, 2> J);

struct PropagatorBoundReport {
  // ratio[s][i] = sup_k |d^s g^(h)| gamma^{h(1+s)} for h = h_max - i
  std::array<std::vector<double>, 3> ratio;
  int h_min = 0, h_max = 0;
  double C1 = 0.0;
  double spread = 0.0;  // max over s of max_h / min_h
};
PropagatorBoundReport propagator_bounds(const RGState& s, const CutoffFamily& fam, int h_min, int h_max,
                                        int radial = 48, int angular = 48);

struct StretchedExpReport {
  int h = 0;
  double kappa = 0.0;
  double C = 0.0;
  double rms = 0.0;
  std::vector<std::pair<double, double>> envelope;  // (gamma^h |x|, |g| gamma^{-h})
};
// Position-space g^(h)(x) = int d^2k/(2 pi)^2 e^{ikx} g^(h)(k) along the lattice axes, by the
// trapezoidal rule on the support box; fit of log envelope against sqrt(gamma^h |x|).
StretchedExpReport stretched_exp_propagator_check(int h, const RGState& s, const CutoffFamily& fam,
                                                  int grid = 256, double y_max = 160.0);

}  // namespace qpising
