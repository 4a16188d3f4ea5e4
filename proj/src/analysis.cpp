#include "qpising/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/tools/minima.hpp>

#include "qpising/parallel.hpp"

namespace qpising {

double CorrelationRecord::r() const { return std::hypot(double(dx0), double(dx1)); }

std::vector<int> fibonacci_ladder(int r_max) {
  std::vector<int> out;
  for (int a = 1, b = 2; a <= r_max; std::tie(a, b) = std::pair{b, a + b}) out.push_back(a);
  return out;
}

std::vector<std::pair<Bond, Bond>> ladder_pairs(const BoxSpec& box, Bond base, Direction d, bool both_signs) {
  int e0 = 0, e1 = 0, r_max = 0;
  switch (d) {
    case Direction::kAxis0: e0 = 1; r_max = box.L0 / 2; break;
    case Direction::kAxis1: e1 = 1; r_max = box.L1 / 2; break;
    case Direction::kDiagonal: e0 = e1 = 1; r_max = std::min(box.L0, box.L1) / 2; break;
  }
  std::vector<std::pair<Bond, Bond>> out;
  for (int r : fibonacci_ladder(r_max)) {
    out.push_back({base, Bond{base.x0 + r * e0, base.x1 + r * e1, base.j}});
    if (both_signs) out.push_back({base, Bond{base.x0 - r * e0, base.x1 - r * e1, base.j}});
  }
  return out;
}

namespace {

std::vector<CorrelationRecord> to_records(const CouplingField& f, const std::vector<std::pair<Bond, Bond>>& pairs,
                                          const std::vector<double>& S) {
  std::vector<CorrelationRecord> out;
  out.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    CorrelationRecord rec;
    rec.b1 = pairs[p].first;
    rec.b2 = pairs[p].second;
    rec.dx0 = rec.b2.x0 - rec.b1.x0;
    rec.dx1 = rec.b2.x1 - rec.b1.x1;
    rec.S = S[p];
    rec.beta = f.beta;
    rec.lambda = f.lambda;
    rec.L0 = f.box.L0;
    rec.L1 = f.box.L1;
    out.push_back(rec);
  }
  return out;
}

struct LinearFit {
  Eigen::VectorXd coef;
  std::vector<double> residuals;
  double rss = 0.0;
};

LinearFit least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  LinearFit f;
  f.coef = X.colPivHouseholderQr().solve(y);
  Eigen::VectorXd res = y - X * f.coef;
  f.residuals.assign(res.data(), res.data() + res.size());
  f.rss = res.squaredNorm();
  return f;
}

ModelScore score(const std::string& name, const LinearFit& f, int k) {
  const int n = static_cast<int>(f.residuals.size());
  return {name, k, n, f.rss, aicc(f.rss, n, k)};
}

void require_positive(const std::vector<double>& r, const std::vector<double>& S, const char* who) {
  if (r.size() != S.size()) throw std::invalid_argument(std::string(who) + ": size mismatch");
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(r[i] > 0.0)) throw std::invalid_argument(std::string(who) + ": separations must be positive");
    if (!std::isfinite(S[i]) || S[i] == 0.0) throw std::invalid_argument(std::string(who) + ": zero or non-finite S");
  }
}

}  // namespace

std::vector<CorrelationRecord> scan_correlations(const CouplingField& field,
                                                 const std::vector<std::pair<Bond, Bond>>& pairs, int workers) {
  CorrelationBatch b = energy_correlations(field, pairs, workers);
  return to_records(field, pairs, b.S);
}

std::vector<std::vector<CorrelationRecord>> scan_correlations(
    const std::function<CouplingField(double)>& factory, const std::vector<double>& betas,
    const std::vector<std::pair<Bond, Bond>>& pairs, int workers) {
  return parallel_map<std::vector<CorrelationRecord>>(betas.size(), workers, [&](std::size_t i) {
    CouplingField f = factory(betas[i]);
    return to_records(f, pairs, energy_correlations(f, pairs, 1).S);
  });
}

double aicc(double rss, int n, int k) {
  if (n <= k + 1) return std::numeric_limits<double>::infinity();
  const double floor = 1e-300;
  return n * std::log(std::max(rss, floor) / n) + 2.0 * k + 2.0 * k * (k + 1) / double(n - k - 1);
}

FitResult fit_power_law(const std::vector<double>& r, const std::vector<double>& S) {
  require_positive(r, S, "fit_power_law");
  std::vector<double> distinct = r;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 5) throw std::invalid_argument("fit_power_law: need at least 5 distinct separations");
  if (distinct.back() < 10.0 * distinct.front())
    throw std::invalid_argument("fit_power_law: separations must span at least one decade");
  const Eigen::Index n = static_cast<Eigen::Index>(r.size());
  Eigen::MatrixXd X1(n, 2), X2(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lr = std::log(r[i]);
    X1.row(i) << 1.0, lr;
    X2.row(i) << 1.0, lr, std::log1p(lr);
    y(i) = std::log(std::fabs(S[i]));
  }
  LinearFit pure = least_squares(X1, y), withlog = least_squares(X2, y);
  FitResult out;
  out.scores = {score("power", pure, 2), score("power-log", withlog, 3)};
  const bool pure_wins = out.scores[0].aicc <= out.scores[1].aicc;
  out.model = pure_wins ? "power" : "power-log";
  const LinearFit& w = pure_wins ? pure : withlog;
  out.amplitude = std::exp(w.coef(0));
  out.exponent = w.coef(1);
  out.log_exponent = pure_wins ? 0.0 : w.coef(2);
  out.residuals = w.residuals;
  return out;
}

FitResult fit_stretched_exponential(const std::vector<double>& r, const std::vector<double>& S, double delta,
                                    double period, double noise_floor) {
  if (r.size() != S.size()) throw std::invalid_argument("fit_stretched_exponential: size mismatch");
  if (!(delta > 0.0)) throw std::invalid_argument("fit_stretched_exponential: needs beta != beta_c");
  double smax = 0.0;
  for (double s : S) smax = std::max(smax, std::fabs(s));
  std::vector<double> rr, ss;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (std::fabs(S[i]) > noise_floor * smax && r[i] > 0.0 && (period <= 0.0 || r[i] < period)) {
      rr.push_back(r[i]);
      ss.push_back(S[i]);
    }
  if (rr.size() < 4)
    throw std::invalid_argument("fit_stretched_exponential: fewer than 4 points above the noise floor");
  const Eigen::Index n = static_cast<Eigen::Index>(rr.size());
  Eigen::MatrixXd Xs(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Xs.row(i) << 1.0, -std::sqrt(delta * rr[i]);
    y(i) = std::log(std::fabs(ss[i]));
  }
  LinearFit st = least_squares(Xs, y);

  // exponential model: linear in (A, C) for fixed m, relative residuals
  auto f = [](double m, double x) {
    const double z = m * x;
    if (z > 600.0) return 0.0;
    const double k1 = boost::math::cyl_bessel_k(1, z), k0 = boost::math::cyl_bessel_k(0, z);
    return (k1 - k0) * (k1 + k0);
  };
  auto fit_at = [&](double logm) {
    const double m = std::exp(logm);
    Eigen::MatrixXd X(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      double g = f(m, rr[i]);
      if (period > 0.0) g += f(m, period - rr[i]);
      X.row(i) << g / ss[i], 1.0 / ss[i];
    }
    return least_squares(X, Eigen::VectorXd::Ones(n));
  };
  // coarse scan for the basin, then Brent inside it
  const double lo = std::log(1e-4), hi = std::log(5.0);
  const int grid = 60;
  int best = 0;
  double best_rss = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    const double v = fit_at(lo + (hi - lo) * i / grid).rss;
    if (v < best_rss) {
      best_rss = v;
      best = i;
    }
  }
  const double a = lo + (hi - lo) * std::max(best - 1, 0) / grid, b = lo + (hi - lo) * std::min(best + 1, grid) / grid;
  const auto [logm, rss] = boost::math::tools::brent_find_minima([&](double t) { return fit_at(t).rss; }, a, b, 40);
  LinearFit ex = fit_at(logm);

  FitResult out;
  out.scores = {score("stretched-exp", st, 2), {"exponential", 3, int(n), ex.rss, aicc(ex.rss, int(n), 3)}};
  out.kappa = st.coef(1);
  out.xi = 0.5 / std::exp(logm);
  out.offset = ex.coef(1);
  const bool exp_wins = out.scores[1].aicc <= out.scores[0].aicc;
  out.model = exp_wins ? "exponential" : "stretched-exp";
  out.amplitude = exp_wins ? ex.coef(0) : std::exp(st.coef(0));
  out.residuals = exp_wins ? ex.residuals : st.residuals;
  (void)rss;
  return out;
}

FitResult extract_velocities(const std::vector<double>& r, const std::vector<double>& S0,
                             const std::vector<double>& S1) {
  if (r.size() != S0.size() || r.size() != S1.size())
    throw std::invalid_argument("extract_velocities: size mismatch");
  std::vector<double> l0, l1;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] < 3.0) continue;
    if (!(S0[i] > 0.0) || !(S1[i] > 0.0)) throw std::invalid_argument("extract_velocities: non-positive S");
    l0.push_back(std::log(S0[i] * r[i] * r[i]));
    l1.push_back(std::log(S1[i] * r[i] * r[i]));
  }
  if (l0.size() < 3)
    throw std::invalid_argument("extract_velocities: need at least 3 separations r >= 3 (ill-conditioned)");
  const double n = static_cast<double>(l0.size());
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < l0.size(); ++i) {
    m0 += l0[i] / n;
    m1 += l1[i] / n;
  }
  FitResult out;
  out.model = "power";
  out.exponent = -2.0;
  // |g+ g-| = 1 / (v1^2 x1^2 + v0^2 x0^2): A_0 ~ v0^-2, A_1 ~ v1^-2
  out.velocities = {std::exp(0.5 * (m1 - m0)), 1.0};
  out.amplitude = std::exp(0.5 * (m0 + m1));
  double rss0 = 0.0, rss1 = 0.0;
  for (std::size_t i = 0; i < l0.size(); ++i) {
    out.residuals.push_back(l0[i] - m0);
    rss0 += (l0[i] - m0) * (l0[i] - m0);
  }
  for (std::size_t i = 0; i < l1.size(); ++i) {
    out.residuals.push_back(l1[i] - m1);
    rss1 += (l1[i] - m1) * (l1[i] - m1);
  }
  const int k = static_cast<int>(l0.size());
  out.scores = {{"axis0", 1, k, rss0, aicc(rss0, k, 1)}, {"axis1", 1, k, rss1, aicc(rss1, k, 1)}};
  return out;
}

ModulationSpectrum extract_amplitude_modulation(const std::vector<double>& a, double omega) {
  const int n = static_cast<int>(a.size());
  if (n < kMinModulationLength)
    throw std::invalid_argument("extract_amplitude_modulation: sweep of " + std::to_string(n) +
                                " sites is too short, need at least " + std::to_string(kMinModulationLength));
  ModulationSpectrum out;
  out.magnitude.resize(n);
  for (int k = 0; k < n; ++k) {
    std::complex<double> s = 0.0;
    for (int x = 0; x < n; ++x) s += a[x] * std::polar(1.0, -2.0 * std::numbers::pi * k * double(x) / n);
    out.magnitude[k] = std::abs(s);
  }
  out.dc = out.magnitude[0];
  auto fold = [n](int k) { return std::min(k, n - k); };
  double w = omega - std::floor(omega);
  out.drive_bin = fold(static_cast<int>(std::lround(w * n)) % n);
  double best = -1.0, mass = 0.0;
  for (int k = 1; k < n; ++k) mass += out.magnitude[k];
  for (int k = 1; k <= n / 2; ++k)
    if (out.magnitude[k] > best) {
      best = out.magnitude[k];
      out.peak_bin = k;
    }
  out.peak_magnitude = best / n;
  out.non_dc_fraction = out.dc > 0.0 ? mass / out.dc : std::numeric_limits<double>::infinity();
  out.peak_at_drive = out.peak_bin == out.drive_bin;
  return out;
}

SpecificHeatPeak specific_heat_peak(const std::function<CouplingField(double)>& factory, double beta_guess,
                                    double h, int max_extensions) {
  if (!(h > 0.0)) throw std::invalid_argument("specific_heat_peak: step must be positive");
  std::map<int, double> logZ;
  int N = 0;
  auto beta_of = [&](int i) { return beta_guess + i * h; };
  auto ensure = [&](int i) {
    if (logZ.count(i)) return;
    CouplingField f = factory(beta_of(i));
    N = f.box.sites();
    logZ[i] = partition_function(f).logZ;
  };
  auto cv = [&](int i) {
    const double b = beta_of(i);
    return b * b * (logZ.at(i + 1) - 2.0 * logZ.at(i) + logZ.at(i - 1)) / (h * h * N);
  };
  int lo = -2, hi = 2;
  for (int i = lo; i <= hi; ++i) ensure(i);
  int arg = 0;
  for (int ext = 0;; ++ext) {
    arg = lo + 1;
    for (int i = lo + 1; i < hi; ++i)
      if (cv(i) > cv(arg)) arg = i;
    const bool at_lo = arg == lo + 1, at_hi = arg == hi - 1;
    if (!at_lo && !at_hi) break;
    if (ext >= max_extensions)
      throw std::runtime_error("specific_heat_peak: maximum not bracketed after extending the grid");
    if (at_lo) ensure(--lo);
    if (at_hi) ensure(++hi);
  }
  SpecificHeatPeak out;
  out.step = h;
  out.evaluations = static_cast<int>(logZ.size());
  for (int i = lo + 1; i < hi; ++i) out.scan.push_back({beta_of(i), cv(i), logZ.at(i)});
  const double cm = cv(arg - 1), c0 = cv(arg), cp = cv(arg + 1);
  const double curv = cm - 2.0 * c0 + cp;
  out.beta = beta_of(arg) + 0.5 * h * (cm - cp) / curv;
  out.height = c0 - (cm - cp) * (cm - cp) / (8.0 * curv);
  return out;
}

GrowthClassification classify_peak_growth(const std::vector<double>& L, const std::vector<double>& c) {
  if (L.size() != c.size()) throw std::invalid_argument("classify_peak_growth: size mismatch");
  if (L.size() < 3) throw std::invalid_argument("classify_peak_growth: need at least 3 sizes");
  const Eigen::Index n = static_cast<Eigen::Index>(L.size());
  Eigen::MatrixXd Xl(n, 2), Xll(n, 2), Xp(n, 2);
  Eigen::VectorXd y(n), ly(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(L[i] > std::numbers::e) || !(c[i] > 0.0))
      throw std::invalid_argument("classify_peak_growth: sizes must exceed e and heights be positive");
    Xl.row(i) << 1.0, std::log(L[i]);
    Xll.row(i) << 1.0, std::log(std::log(L[i]));
    Xp.row(i) << 1.0, std::log(L[i]);
    y(i) = c[i];
    ly(i) = std::log(c[i]);
  }
  LinearFit fl = least_squares(Xl, y), fll = least_squares(Xll, y), fp = least_squares(Xp, ly);
  // residuals of the power model in height units, so that all three are comparable
  double rssp = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = c[i] - std::exp(fp.coef(0) + fp.coef(1) * std::log(L[i]));
    rssp += d * d;
  }
  GrowthClassification out;
  const int k = static_cast<int>(n);
  out.scores = {score("log", fl, 2), score("loglog", fll, 2), {"power", 2, k, rssp, aicc(rssp, k, 2)}};
  out.verdict = fl.rss <= fll.rss ? "log" : "loglog";
  out.log_slope = fl.coef(1);
  return out;
}

}  // namespace qpising
