#include "qpising/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <json.hpp>

#include "qpising/analysis.hpp"
#include "qpising/chain.hpp"
#include "qpising/fermion.hpp"
#include "qpising/kernels.hpp"
#include "qpising/rg.hpp"

namespace qpising {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Context {
  const RunConfig& cfg;
  int workers;
  ExperimentReport& rep;
  json summary = json::object();

  void check(bool ok, const std::string& what) {
    if (!ok) rep.failures.push_back(what);
  }
  std::string path(const std::string& file) const { return (fs::path(cfg.out_dir) / file).string(); }
  void write(const std::string& file, const std::string& text) {
    std::ofstream o(path(file), std::ios::binary);
    if (!o) throw std::runtime_error("cannot write " + path(file));
    o << text;
    rep.files.push_back(path(file));
  }
};

std::function<CouplingField(double)> factory_for(const RunConfig& cfg, double lambda) {
  const BoxSpec box = cfg.box();
  RunConfig c = cfg;
  c.lambda = lambda;
  const ModulationSpec mod = c.modulation();
  return [box, mod, J = cfg.J](double beta) { return build_couplings(box, mod, J, beta); };
}

double critical_for(const RunConfig& cfg, double lambda) {
  RunConfig c = cfg;
  c.lambda = lambda;
  return model_critical_beta(c);
}

// Sum of |A_n| times sup |g_xi|: the geometric ratio of the first-integration series.
double series_ratio(const HarmonicSet& hs) {
  double asum = 0.0, gsup = 0.0;
  for (int j = 0; j < 2; ++j)
    for (auto [n, a] : hs.A[j]) asum += std::abs(a);
  const int m = 32;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      const Vec2 k{-kPi + kTwoPi * a / m, -kPi + kTwoPi * b / m};
      Eigen::JacobiSVD<Mat2> svd(g_xi(k, hs.t));
      gsup = std::max(gsup, svd.singularValues()(0));
    }
  return asum * gsup;
}

void oracle_check(Context& cx) {
  std::vector<double> lambdas{0.0};
  if (cx.cfg.lambda != 0.0) lambdas.push_back(cx.cfg.lambda);
  std::vector<double> betas = cx.cfg.beta ? std::vector<double>{*cx.cfg.beta} : std::vector<double>{0.3, 0.44, 0.6};
  std::string csv = "L0,L1,lambda,beta,logZ_pfaffian,logZ_spin,abs_dlogZ,max_abs_dS\n";
  double worst_z = 0.0, worst_s = 0.0;
  for (int L : {3, 4}) {
    const BoxSpec box = box_explicit(L, L, std::llround(cx.cfg.omega[0] * L), std::llround(cx.cfg.omega[1] * L));
    std::vector<std::pair<Bond, Bond>> pairs;
    for (int j1 = 0; j1 < 2; ++j1)
      for (int x0 = 0; x0 < L; ++x0)
        for (int x1 = 0; x1 < L; ++x1)
          for (int j2 = 0; j2 < 2; ++j2)
            if (!(x0 == 0 && x1 == 0 && j1 == j2)) pairs.push_back({Bond{0, 0, j1}, Bond{x0, x1, j2}});
    for (double lam : lambdas)
      for (double beta : betas) {
        RunConfig c = cx.cfg;
        c.lambda = lam;
        const CouplingField f = build_couplings(box, c.modulation(), c.J, beta);
        const CorrelationBatch pf = energy_correlations(f, pairs, cx.workers);
        const SpinOracleResult spin = spin_oracle(f, pairs);
        double ds = 0.0;
        for (std::size_t p = 0; p < pairs.size(); ++p) ds = std::max(ds, std::fabs(pf.S[p] - spin.S[p]));
        const double dz = std::fabs(pf.logZ - spin.logZ);
        worst_z = std::max(worst_z, dz);
        worst_s = std::max(worst_s, ds);
        csv += std::to_string(L) + "," + std::to_string(L) + "," + g17(lam) + "," + g17(beta) + "," + g17(pf.logZ) +
               "," + g17(spin.logZ) + "," + g17(dz) + "," + g17(ds) + "\n";
      }
  }
  cx.write("oracle_check.csv", csv);
  cx.summary["max_abs_dlogZ"] = worst_z;
  cx.summary["max_abs_dS"] = worst_s;
  cx.check(worst_z < 1e-9, "logZ differs from the spin sum by " + g17(worst_z));
  cx.check(worst_s < 1e-8, "S differs from the spin sum by " + g17(worst_s));
}

void critical_scan(Context& cx) {
  const auto factory = factory_for(cx.cfg, cx.cfg.lambda);
  std::vector<double> grid;
  for (int i = 0; i < cx.cfg.beta_count; ++i)
    grid.push_back(cx.cfg.beta_min + (cx.cfg.beta_max - cx.cfg.beta_min) * i / (cx.cfg.beta_count - 1));
  const SpecificHeatResult sh = specific_heat(factory, grid, cx.workers);
  std::string csv = "beta,cv,logZ\n";
  for (const auto& p : sh.points) csv += g17(p.beta) + "," + g17(p.cv) + "," + g17(p.logZ) + "\n";
  cx.write("critical_scan.csv", csv);
  auto it = std::max_element(sh.points.begin(), sh.points.end(),
                             [](const auto& a, const auto& b) { return a.cv < b.cv; });
  cx.summary["grid_peak_beta"] = it->beta;
  cx.summary["grid_peak_cv"] = it->cv;
  cx.summary["warnings"] = sh.warnings;
  for (const auto& p : sh.points) cx.check(std::isfinite(p.cv), "non-finite c_v at beta " + g17(p.beta));
  cx.check(sh.warnings.empty(), sh.warnings.empty() ? "" : sh.warnings.front());
}

json fit_json(const FitResult& f) {
  json j;
  j["model"] = f.model;
  j["exponent"] = f.exponent;
  j["amplitude"] = f.amplitude;
  j["log_exponent"] = f.log_exponent;
  j["kappa"] = f.kappa;
  j["xi"] = f.xi;
  j["offset"] = f.offset;
  j["velocities"] = f.velocities;
  j["residuals"] = f.residuals;
  json scores = json::array();
  for (const auto& s : f.scores)
    scores.push_back({{"model", s.model}, {"params", s.params}, {"points", s.points}, {"rss", s.rss},
                      {"aicc", std::isfinite(s.aicc) ? json(s.aicc) : json(nullptr)}});
  j["scores"] = scores;
  return j;
}

void exponent_fit(Context& cx) {
  const double lambda = cx.cfg.lambda;
  const double beta = cx.cfg.beta.value_or(critical_for(cx.cfg, lambda));
  const CouplingField f = factory_for(cx.cfg, lambda)(beta);
  const BoxSpec& box = f.box;
  // base points spread along x1; one suffices without modulation
  const int bases = lambda == 0.0 ? 1 : 8;
  std::vector<std::pair<Bond, Bond>> pairs;
  std::vector<int> axis;
  for (int b = 0; b < bases; ++b) {
    const Bond base{0, b * box.L1 / bases, 1};
    for (int d = 0; d < 2; ++d)
      for (const auto& p : ladder_pairs(box, base, d == 0 ? Direction::kAxis0 : Direction::kAxis1)) {
        pairs.push_back(p);
        axis.push_back(d);
      }
  }
  const auto recs = scan_correlations(f, pairs, cx.workers);
  std::string csv = "axis,base_x0,base_x1,dx0,dx1,r,S\n";
  std::array<std::map<double, double>, 2> mean;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    csv += std::to_string(axis[i]) + "," + std::to_string(r.b1.x0) + "," + std::to_string(r.b1.x1) + "," +
           std::to_string(r.dx0) + "," + std::to_string(r.dx1) + "," + g17(r.r()) + "," + g17(r.S) + "\n";
    mean[axis[i]][r.r()] += r.S / bases;
  }
  cx.write("exponent_fit.csv", csv);
  json fits = json::array();
  cx.summary["beta"] = beta;
  cx.summary["lambda"] = lambda;
  cx.summary["window"] = {2, std::min(box.L0, box.L1) / 4};
  for (int d = 0; d < 2; ++d) {
    std::vector<double> rr, ss;
    for (auto [r, s] : mean[d])
      if (r >= 2 && r <= std::min(box.L0, box.L1) / 4) {
        rr.push_back(r);
        ss.push_back(s);
      }
    const FitResult fr = fit_power_law(rr, ss);
    json j = fit_json(fr);
    j["axis"] = d;
    fits.push_back(j);
    cx.check(fr.scores.size() >= 2 && !fr.residuals.empty(), "fit without residuals or competing score");
    if (lambda == 0.0)
      cx.check(std::fabs(fr.exponent + 2.0) <= 0.1, "lambda = 0 slope " + g17(fr.exponent) + " outside -2 +- 0.1");
  }
  cx.summary["fits"] = fits;
}

void rg_flow(Context& cx) {
  const double lambda = cx.cfg.lambda;
  const ModulationSpec mod = cx.cfg.modulation();
  const bool critical = !cx.cfg.beta;
  const double beta = critical ? critical_for(cx.cfg, lambda) : *cx.cfg.beta;
  RGModel model(mod, cx.cfg.J, beta, cx.cfg.rg);
  const double ratio = series_ratio(model.harmonics());
  cx.summary["beta"] = beta;
  cx.summary["lambda"] = lambda;
  cx.summary["series_ratio"] = ratio;
  if (!(ratio < 1.0)) {
    cx.check(false, "lambda beyond the convergence guard: first-integration ratio " + g17(ratio) + " >= 1");
    return;
  }
  // off criticality mu = m_psi + gamma^2 nu_2 is iterated with the counterterm
  double mu = 0.0;
  CountertermResult ct = solve_counterterm(model, mu);
  if (!critical)
    for (int it = 0; it < 4; ++it) {
      mu = model.m_psi() + cx.cfg.rg.gamma * cx.cfg.rg.gamma * ct.state.nu_at(2);
      ct = solve_counterterm(model, mu);
    }
  std::string csv = "h,nu_h,re_a0,im_a0,re_a1,im_a1,beta_nu,beta_a0,beta_a1\n";
  double worst_nu = 0.0, worst_scaled = 0.0;
  for (const auto& r : ct.trajectory) {
    csv += std::to_string(r.h) + "," + g17(r.nu) + "," + g17(r.a[0].real()) + "," + g17(r.a[0].imag()) + "," +
           g17(r.a[1].real()) + "," + g17(r.a[1].imag()) + "," + g17(r.beta_nu) + "," + g17(r.beta_a[0].real()) +
           "," + g17(r.beta_a[1].real()) + "\n";
    worst_nu = std::max(worst_nu, std::fabs(r.nu));
    worst_scaled = std::max(worst_scaled, std::fabs(r.nu) / std::pow(cx.cfg.rg.gamma, (r.h - 2) / 4.0));
  }
  cx.write("rg_flow.csv", csv);
  cx.summary["mu"] = mu;
  cx.summary["iterations"] = ct.iterations;
  cx.summary["contraction_ratio"] = ct.contraction_ratio;
  cx.summary["norm"] = ct.norm;
  cx.summary["corridor_ok"] = ct.corridor_ok;
  cx.summary["max_abs_nu"] = worst_nu;
  cx.check(ct.corridor_ok, "velocity corridor 7/8..9/8 violated");
  cx.check(ct.contraction_ratio < 1.0, "counterterm map is not a contraction");
  const double lam = std::fabs(lambda);
  cx.check(worst_nu <= lam || lam == 0.0, "|nu_h| exceeds |lambda|");
  cx.check(worst_scaled <= lam || lam == 0.0, "|nu_h| exceeds gamma^((h-2)/4) |lambda|");
}

void modulation_map(Context& cx) {
  std::set<double> lambdas(cx.cfg.lambdas.begin(), cx.cfg.lambdas.end());
  lambdas.insert(0.0);
  const BoxSpec box = cx.cfg.box();
  const int r = cx.cfg.separation;
  std::vector<std::pair<Bond, Bond>> pairs;
  for (int x1 = 0; x1 < box.L1; ++x1) pairs.push_back({Bond{0, x1, 1}, Bond{r, x1, 1}});
  std::string csv = "lambda,beta,base_x1,amplitude\n";
  json spectra = json::array();
  std::map<double, double> peak;
  for (double lam : lambdas) {
    const double beta = critical_for(cx.cfg, lam);
    const auto recs = scan_correlations(factory_for(cx.cfg, lam)(beta), pairs, cx.workers);
    std::vector<double> amp;
    for (const auto& rec : recs) {
      amp.push_back(rec.S * r * r);
      csv += g17(lam) + "," + g17(beta) + "," + std::to_string(rec.b1.x1) + "," + g17(amp.back()) + "\n";
    }
    const ModulationSpectrum sp = extract_amplitude_modulation(amp, box.Omega(1));
    peak[lam] = sp.peak_magnitude;
    spectra.push_back({{"lambda", lam},
                       {"beta", beta},
                       {"dc", sp.dc / box.L1},
                       {"drive_bin", sp.drive_bin},
                       {"peak_bin", sp.peak_bin},
                       {"peak_magnitude", sp.peak_magnitude},
                       {"non_dc_fraction", sp.non_dc_fraction}});
    if (lam == 0.0)
      cx.check(sp.non_dc_fraction < 1e-8, "lambda = 0 spectrum not DC-pure: " + g17(sp.non_dc_fraction));
    else
      cx.check(sp.peak_at_drive, "lambda = " + g17(lam) + " peak at bin " + std::to_string(sp.peak_bin) +
                                     ", drive bin " + std::to_string(sp.drive_bin));
  }
  cx.write("modulation_map.csv", csv);
  cx.summary["separation"] = r;
  cx.summary["spectra"] = spectra;
}

}  // namespace

std::vector<std::string> experiment_names() {
  return {"oracle-check", "critical-scan", "exponent-fit", "rg-flow", "modulation-map"};
}

double model_critical_beta(const RunConfig& cfg) {
  if (cfg.lambda == 0.0) return mass_root_beta_c(cfg.J);
  return critical_beta(cfg.modulation(), cfg.J, cfg.rg).beta_c;
}

ExperimentReport run_experiment(const std::string& name, const RunConfig& cfg, int workers) {
  ExperimentReport rep;
  rep.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  Context cx{cfg, workers, rep};
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  try {
    if (ec) throw std::runtime_error("cannot create " + cfg.out_dir + ": " + ec.message());
    if (name == "oracle-check")
      oracle_check(cx);
    else if (name == "critical-scan")
      critical_scan(cx);
    else if (name == "exponent-fit")
      exponent_fit(cx);
    else if (name == "rg-flow")
      rg_flow(cx);
    else if (name == "modulation-map")
      modulation_map(cx);
    else
      throw std::invalid_argument("unknown experiment '" + name + "'");
  } catch (const std::exception& e) {
    rep.failures.push_back(std::string("error: ") + e.what());
  }
  rep.pass = rep.failures.empty();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.summary_json = cx.summary.dump();

  json summary_file;
  summary_file["schema_version"] = kSchemaVersion;
  summary_file["experiment"] = name;
  summary_file["pass"] = rep.pass;
  summary_file["failures"] = rep.failures;
  summary_file["results"] = cx.summary;
  try {
    if (!ec) cx.write(std::string(name) + ".json", summary_file.dump(2) + "\n");
  } catch (const std::exception& e) {
    rep.failures.push_back(std::string("error: ") + e.what());
    rep.pass = false;
  }

  const std::string text = emit_config(cfg);
  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["experiment"] = name;
  manifest["status"] = rep.pass ? "pass" : "fail";
  manifest["failures"] = rep.failures;
  manifest["config_hash"] = fnv1a_hex(text);
  manifest["config"] = text;
  manifest["versions"] = {{"qpising", kVersion},
                          {"compiler", __VERSION__},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"boost", BOOST_LIB_VERSION}};
  manifest["workers"] = workers;
  manifest["wall_seconds"] = rep.wall_seconds;
  manifest["files"] = rep.files;
  const std::string mpath = (fs::path(cfg.out_dir) / "manifest.json").string();
  std::ofstream(mpath, std::ios::binary) << manifest.dump(2) << "\n";
  rep.files.push_back(mpath);
  return rep;
}

}  // namespace qpising
