#pragma once

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qpising/core.hpp"
#include "qpising/fermion.hpp"

namespace qpising {

struct CorrelationRecord {
  Bond b1, b2;
  int dx0 = 0, dx1 = 0;  // b2 - b1 before wrapping
  double S = 0.0;
  double im_residue = 0.0;  // the solver is real; kept for the record format
  double beta = 0.0, lambda = 0.0;
  int L0 = 0, L1 = 0;
  double r() const;  // Euclidean separation
};

// Fibonacci numbers 1, 2, 3, 5, 8, ... not exceeding r_max.
std::vector<int> fibonacci_ladder(int r_max);

enum class Direction { kAxis0, kAxis1, kDiagonal };

// Pairs (base, base + r e) for r on the Fibonacci ladder up to half the box along e.
// Both bonds have orientation base.j.
std::vector<std::pair<Bond, Bond>> ladder_pairs(const BoxSpec& box, Bond base, Direction d, bool both_signs = false);

std::vector<CorrelationRecord> scan_correlations(const CouplingField& field,
                                                 const std::vector<std::pair<Bond, Bond>>& pairs, int workers = 1);
// Same pairs at several temperatures; jobs run over beta.
std::vector<std::vector<CorrelationRecord>> scan_correlations(
    const std::function<CouplingField(double)>& factory, const std::vector<double>& betas,
    const std::vector<std::pair<Bond, Bond>>& pairs, int workers = 1);

struct ModelScore {
  std::string model;
  int params = 0;
  int points = 0;
  double rss = 0.0;
  double aicc = 0.0;  // +inf when points <= params + 1
};

// Small-sample corrected Akaike criterion for Gaussian residuals.
double aicc(double rss, int n, int k);

struct FitResult {
  std::string model;  // preferred model: power | power-log | stretched-exp | exponential
  double exponent = 0.0;      // power-law slope
  double amplitude = 0.0;
  double log_exponent = 0.0;  // c in r^p (1 + ln r)^c
  double kappa = 0.0;         // exp(-kappa sqrt(delta r))
  double xi = 0.0;            // exp(-r / xi)
  double offset = 0.0;        // constant term of the exponential model
  std::array<double, 2> velocities{1.0, 1.0};
  std::vector<double> residuals;    // of the preferred model (log or relative units)
  std::vector<ModelScore> scores;   // every competing model, preferred one included
};

// log|S| = a + p ln r, and the alternative a + p ln r + c ln(1 + ln r).
// Needs at least 5 distinct separations spanning a decade.
FitResult fit_power_law(const std::vector<double>& r, const std::vector<double>& S);

// Two models for correlations off criticality:
//   stretched-exp  log|S| = a - kappa sqrt(delta r)
//   exponential    S = A [f(r) + f(period - r)] + C,  f(r) = K_1(m r)^2 - K_0(m r)^2,  xi = 1 / (2 m)
// f is the massive free-fermion bilinear: r^-2 for r << xi and ~ e^{-r/xi} r^-2 beyond. The image term
// is omitted for period = 0; C absorbs the constant left by the boundary-sector sum on a torus.
// Points with |S| below noise_floor * max|S| are dropped; at least 4 must remain.
FitResult fit_stretched_exponential(const std::vector<double>& r, const std::vector<double>& S, double delta,
                                    double period = 0.0, double noise_floor = 1e-12);

// Anisotropy from the amplitudes of S = A_j r^-2 along the two axes: v0 / v1 = sqrt(A_1 / A_0).
// Requires at least 3 common separations r >= 3.
FitResult extract_velocities(const std::vector<double>& r, const std::vector<double>& S_axis0,
                             const std::vector<double>& S_axis1);

struct ModulationSpectrum {
  std::vector<double> magnitude;  // |DFT| per bin, bins 0..n-1
  double dc = 0.0;
  int drive_bin = 0;              // nearest bin to omega * n, folded to 0..n/2
  int peak_bin = 0;               // dominant non-DC bin, folded to 0..n/2
  double peak_magnitude = 0.0;    // normalised by n
  double non_dc_fraction = 0.0;   // sum of non-DC magnitudes / DC
  bool peak_at_drive = false;
};
constexpr int kMinModulationLength = 34;
// DFT of an amplitude sequence sampled at consecutive base points; omega is the driving frequency
// in units of 2 pi per site.
ModulationSpectrum extract_amplitude_modulation(const std::vector<double>& amplitude, double omega);

struct SpecificHeatPeak {
  double beta = 0.0;
  double height = 0.0;
  double step = 0.0;
  int evaluations = 0;
  std::vector<SpecificHeatPoint> scan;
};
// Maximum of c_v = beta^2 d^2 (logZ/N)/d beta^2 on a grid of step h around beta_guess; the grid is
// extended until the maximum is interior, then refined by a parabola through three points.
SpecificHeatPeak specific_heat_peak(const std::function<CouplingField(double)>& factory, double beta_guess,
                                    double h, int max_extensions = 8);

struct GrowthClassification {
  std::string verdict;  // log | loglog
  std::vector<ModelScore> scores;  // log, loglog, power
  double log_slope = 0.0;
};
// Fits height = a + b ln L, a + b ln ln L and a L^b; verdict is the better of log and loglog
// (equal parameter counts, so by residual). Needs at least 3 sizes.
GrowthClassification classify_peak_growth(const std::vector<double>& sizes, const std::vector<double>& heights);

}  // namespace qpising
