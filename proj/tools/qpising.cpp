#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qpising/analysis.hpp"
#include "qpising/chain.hpp"
#include "qpising/config.hpp"
#include "qpising/core.hpp"
#include "qpising/experiments.hpp"
#include "qpising/fermion.hpp"
#include "qpising/kernels.hpp"
#include "qpising/parallel.hpp"
#include "qpising/rg.hpp"

using namespace qpising;
using json = nlohmann::ordered_json;

namespace {

struct Options {
  std::string config_path;
  int workers = 0;
  std::string out;
};

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json with_schema(json j) {
  json out;
  out["schema_version"] = kSchemaVersion;
  for (auto& [k, v] : j.items()) out[k] = v;
  return out;
}

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + o.out);
  f << text;
}

void emit_json(const Options& o, const json& j) { emit(o, with_schema(j).dump(2) + "\n"); }

RunConfig load_config(const Options& o) {
  std::string text;
  if (!o.config_path.empty()) {
    std::ifstream f(o.config_path);
    if (!f) throw std::runtime_error("cannot read config " + o.config_path);
    std::stringstream ss;
    ss << f.rdbuf();
    text = ss.str();
  }
  ParseResult p = parse_config(text);
  if (!p.ok()) throw std::invalid_argument("invalid config:\n" + p.report());
  return p.config;
}

json mat_json(const Mat2& m) {
  json rows = json::array();
  for (int i = 0; i < 2; ++i) {
    json row = json::array();
    for (int j = 0; j < 2; ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(row);
  }
  return rows;
}

double beta_of(const RunConfig& c) { return c.beta.value_or(model_critical_beta(c)); }

Bond parse_bond(const std::string& s) {
  Bond b;
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> b.x0 >> c1 >> b.x1 >> c2 >> b.j) || c1 != ',' || c2 != ',' || (b.j != 0 && b.j != 1))
    throw std::invalid_argument("bond must be x0,x1,j with j in {0,1}: " + s);
  return b;
}

std::vector<double> parse_range(const std::string& s) {
  double a = 0, b = 0;
  int n = 0;
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> a >> c1 >> b >> c2 >> n) || c1 != ':' || c2 != ':' || n < 2 || !(b > a))
    throw std::invalid_argument("range must be lo:hi:count with lo < hi and count >= 2");
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(a + (b - a) * i / (n - 1));
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-periodic Ising toolkit: exact solver, chain graphs, RG flow and analysis"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("-c,--config", o.config_path, "config file");
  app.add_option("-w,--workers", o.workers, "worker cap (default QPISING_WORKERS or all cores)");
  app.add_option("-o,--out", o.out, "output file (default stdout); output directory for run");

  auto* lattice = app.add_subcommand("lattice", "box, convergents and Diophantine constants");
  auto* solve = app.add_subcommand("solve", "partition function by Pfaffians");
  auto* correlate = app.add_subcommand("correlate", "truncated energy correlations");
  std::vector<std::string> pair_args;
  std::string ladder_axis;
  correlate->add_option("--pair", pair_args, "pair b1:b2 with b = x0,x1,j (repeatable)");
  correlate->add_option("--ladder", ladder_axis, "Fibonacci ladder from bond 0,0,1 along axis 0, 1 or diag");
  auto* oracle = app.add_subcommand("oracle", "Pfaffian solver against the exhaustive spin sum (L <= 4)");
  auto* kernels = app.add_subcommand("kernels", "free kernels at a momentum");
  std::vector<double> kvec{0.0, 0.0};
  kernels->add_option("--k", kvec, "momentum k0 k1")->expected(2);
  auto* effpot = app.add_subcommand("effective-potential", "V_n(k) from the chain-graph series");
  int q_max = 4;
  std::vector<int> nvec{0, 0};
  effpot->add_option("--k", kvec, "momentum k0 k1")->expected(2);
  effpot->add_option("--n", nvec, "harmonic n0 n1")->expected(2);
  effpot->add_option("--q-max", q_max, "series order");
  auto* diffk = app.add_subcommand("diff-kernels", "series kernels against the exact Schur complement");
  std::vector<int> q_list{4, 5, 6};
  diffk->add_option("--q-max", q_list, "orders");
  auto* rgflow = app.add_subcommand("rg-flow", "counterterm trajectory as CSV");
  auto* critical = app.add_subcommand("critical-beta", "beta_c(lambda) from the flow");
  auto* scan = app.add_subcommand("scan-beta", "specific heat on a beta grid");
  std::string range = "0.40:0.48:41";
  scan->add_option("--range", range, "lo:hi:count");
  auto* fit = app.add_subcommand("fit", "fit correlation records");
  std::string records, model = "auto";
  double delta = 0.0, period = 0.0;
  fit->add_option("--records", records, "CSV with columns r,S (extra columns ignored)")->required();
  fit->add_option("--model", model, "auto | power | stretched-exp")
      ->check(CLI::IsMember({"auto", "power", "stretched-exp"}));
  fit->add_option("--delta", delta, "|beta - beta_c| for the off-critical models");
  fit->add_option("--period", period, "torus length for the image term");
  auto* run = app.add_subcommand("run", "named experiment with manifest");
  std::string experiment;
  run->add_option("experiment", experiment, "experiment name")->required()->check(CLI::IsMember(experiment_names()));

  CLI11_PARSE(app, argc, argv);
  if (o.workers > 0) set_worker_cap(o.workers);
  const int workers = worker_cap();

  try {
    RunConfig cfg = load_config(o);
    if (lattice->parsed()) {
      const BoxSpec box = cfg.box();
      json j;
      j["L0"] = box.L0;
      j["L1"] = box.L1;
      j["generation"] = box.generation;
      j["p0"] = box.p0;
      j["p1"] = box.p1;
      for (int d = 0; d < 2; ++d) {
        const DiophantineScan ds = diophantine_constant(cfg.omega[d], 1.0, 1000000);
        const ApproxResult ap = best_approximants(cfg.omega[d], 20);
        json conv = json::array();
        for (const auto& c : ap.list) conv.push_back({c.p, c.q});
        j["omega"][d] = {{"value", cfg.omega[d]},
                         {"diophantine_c", ds.c},
                         {"argmin", ds.argmin},
                         {"nearly_rational", ds.nearly_rational},
                         {"convergents", conv}};
      }
      emit_json(o, j);
    } else if (solve->parsed()) {
      const double beta = beta_of(cfg);
      const PartitionResult r = partition_function(build_couplings(cfg.box(), cfg.modulation(), cfg.J, beta));
      json sectors = json::array();
      for (int a = 0; a < 4; ++a)
        sectors.push_back({{"bc", r.bcs[a].label()},
                           {"log_abs_pf", r.sector[a].log_abs},
                           {"phase", r.sector[a].phase.real()},
                           {"singular", r.sector[a].singular()}});
      emit_json(o, {{"beta", beta}, {"lambda", cfg.lambda}, {"logZ", r.logZ}, {"condition", r.condition},
                    {"sectors", sectors}});
    } else if (correlate->parsed()) {
      const double beta = beta_of(cfg);
      const CouplingField f = build_couplings(cfg.box(), cfg.modulation(), cfg.J, beta);
      std::vector<std::pair<Bond, Bond>> pairs;
      for (const auto& p : pair_args) {
        const auto colon = p.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("pair must be b1:b2");
        pairs.push_back({parse_bond(p.substr(0, colon)), parse_bond(p.substr(colon + 1))});
      }
      if (!ladder_axis.empty()) {
        const Direction d = ladder_axis == "0" ? Direction::kAxis0 : ladder_axis == "1" ? Direction::kAxis1
                            : ladder_axis == "diag" ? Direction::kDiagonal
                                                    : throw std::invalid_argument("--ladder must be 0, 1 or diag");
        for (const auto& p : ladder_pairs(f.box, Bond{0, 0, 1}, d)) pairs.push_back(p);
      }
      if (pairs.empty()) throw std::invalid_argument("correlate: give --pair or --ladder");
      std::string csv = "x0a,x1a,ja,x0b,x1b,jb,r,S,beta,lambda,L0,L1\n";
      for (const auto& r : scan_correlations(f, pairs, workers))
        csv += std::to_string(r.b1.x0) + "," + std::to_string(r.b1.x1) + "," + std::to_string(r.b1.j) + "," +
               std::to_string(r.b2.x0) + "," + std::to_string(r.b2.x1) + "," + std::to_string(r.b2.j) + "," +
               g17(r.r()) + "," + g17(r.S) + "," + g17(r.beta) + "," + g17(r.lambda) + "," + std::to_string(r.L0) +
               "," + std::to_string(r.L1) + "\n";
      emit(o, csv);
    } else if (oracle->parsed()) {
      const BoxSpec box = cfg.box();
      if (box.sites() > 20) throw std::invalid_argument("oracle: box has more than 20 sites; use box.L0/L1 <= 4");
      const double beta = beta_of(cfg);
      const CouplingField f = build_couplings(box, cfg.modulation(), cfg.J, beta);
      std::vector<std::pair<Bond, Bond>> pairs;
      for (int x0 = 0; x0 < box.L0; ++x0)
        for (int x1 = 0; x1 < box.L1; ++x1)
          for (int j = 0; j < 2; ++j)
            if (x0 || x1 || j != 1) pairs.push_back({Bond{0, 0, 1}, Bond{x0, x1, j}});
      const CorrelationBatch pf = energy_correlations(f, pairs, workers);
      const SpinOracleResult sp = spin_oracle(f, pairs);
      double ds = 0.0;
      for (std::size_t i = 0; i < pairs.size(); ++i) ds = std::max(ds, std::fabs(pf.S[i] - sp.S[i]));
      emit_json(o, {{"logZ_pfaffian", pf.logZ}, {"logZ_spin", sp.logZ}, {"abs_dlogZ", std::fabs(pf.logZ - sp.logZ)},
                    {"max_abs_dS", ds}, {"pairs", pairs.size()}});
    } else if (kernels->parsed()) {
      const double beta = beta_of(cfg);
      const Hopping t{std::tanh(beta * cfg.J[0]), std::tanh(beta * cfg.J[1])};
      const Vec2 k{kvec[0], kvec[1]};
      emit_json(o, {{"beta", beta},
                    {"t", {t.t0, t.t1}},
                    {"m_chi", mass_chi(k, t)},
                    {"m_psi0", mass_psi0(k, t)},
                    {"m_psi", mass_psi_effective(t)},
                    {"C_chi", mat_json(C_chi(k, t).v)},
                    {"C_psi", mat_json(C_psi(k, t).v)},
                    {"Q", mat_json(Q_free(k, t).v)},
                    {"g_xi", mat_json(g_xi(k, t))},
                    {"g_psi_inverse", mat_json(g_psi_inverse(k, t))}});
    } else if (effpot->parsed()) {
      const double beta = beta_of(cfg);
      const HarmonicSet hs = harmonic_set(build_couplings(cfg.box(), cfg.modulation(), cfg.J, beta));
      const auto orders = effective_potential_orders(hs, {nvec[0], nvec[1]}, q_max, {kvec[0], kvec[1]});
      json arr = json::array();
      for (std::size_t q = 0; q < orders.size(); ++q) arr.push_back({{"q_max", q + 1}, {"V", mat_json(orders[q])}});
      emit_json(o, {{"n", nvec}, {"k", kvec}, {"orders", arr}});
    } else if (diffk->parsed()) {
      const double beta = beta_of(cfg);
      const HarmonicSet hs = harmonic_set(build_couplings(cfg.box(), cfg.modulation(), cfg.J, beta));
      const MomentumGrid grid = momentum_grid(cfg.box().L0, cfg.box().L1, BoundaryCondition{{-1, -1}});
      const SchurOracle exact = schur_oracle(hs, grid);
      std::vector<Index2> ns;
      for (const auto& v : harmonic_support(hs)) ns.push_back(v.n);
      ns.push_back({0, 0});
      std::sort(ns.begin(), ns.end());
      ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
      json arr = json::array();
      // the series is folded onto the box so that aliased transfers are compared like with like
      for (int q : q_list) {
        double dev = 0.0;
        for (const auto& n : ns)
          for (int ik = 0; ik < grid.size(); ++ik) {
            const Mat2 v = box_potential_orders(hs, n, q, grid.k[ik], grid.L0, grid.L1).back();
            dev = std::max(dev, kernel_norm(v - exact.vertex(ik, n)));
          }
        arr.push_back({{"q_max", q}, {"max_deviation", dev}});
      }
      emit_json(o, {{"beta", beta}, {"lambda", cfg.lambda}, {"L0", grid.L0}, {"L1", grid.L1}, {"orders", arr}});
    } else if (rgflow->parsed()) {
      const double beta = beta_of(cfg);
      RGModel m(cfg.modulation(), cfg.J, beta, cfg.rg);
      const CountertermResult ct = solve_counterterm(m, 0.0);
      std::string csv = "h,nu_h,re_a0,im_a0,re_a1,im_a1,beta_nu,beta_a0,beta_a1\n";
      for (const auto& r : ct.trajectory)
        csv += std::to_string(r.h) + "," + g17(r.nu) + "," + g17(r.a[0].real()) + "," + g17(r.a[0].imag()) + "," +
               g17(r.a[1].real()) + "," + g17(r.a[1].imag()) + "," + g17(r.beta_nu) + "," +
               g17(r.beta_a[0].real()) + "," + g17(r.beta_a[1].real()) + "\n";
      emit(o, csv);
      if (!ct.corridor_ok) {
        std::cerr << "velocity corridor violated\n";
        return 2;
      }
    } else if (critical->parsed()) {
      const CriticalResult r = critical_beta(cfg.modulation(), cfg.J, cfg.rg);
      emit_json(o, {{"lambda", cfg.lambda}, {"beta_c", r.beta_c}, {"beta_c0", r.beta_c0}, {"b_lambda", r.b_lambda},
                    {"iterations", r.iterations}, {"contraction_ratio", r.contraction_ratio}});
    } else if (scan->parsed()) {
      const BoxSpec box = cfg.box();
      const ModulationSpec mod = cfg.modulation();
      const SpecificHeatResult sh = specific_heat(
          [&](double b) { return build_couplings(box, mod, cfg.J, b); }, parse_range(range), workers);
      std::string csv = "beta,cv,logZ\n";
      for (const auto& p : sh.points) csv += g17(p.beta) + "," + g17(p.cv) + "," + g17(p.logZ) + "\n";
      emit(o, csv);
      for (const auto& w : sh.warnings) std::cerr << w << "\n";
    } else if (fit->parsed()) {
      std::ifstream f(records);
      if (!f) throw std::runtime_error("cannot read " + records);
      std::string header, line;
      std::getline(f, header);
      std::vector<std::string> cols;
      {
        std::stringstream hs(header);
        std::string c;
        while (std::getline(hs, c, ',')) cols.push_back(c);
      }
      const auto ir = std::find(cols.begin(), cols.end(), "r") - cols.begin();
      const auto is = std::find(cols.begin(), cols.end(), "S") - cols.begin();
      if (ir == long(cols.size()) || is == long(cols.size())) throw std::invalid_argument("records need r and S columns");
      std::map<double, std::pair<double, int>> acc;
      while (std::getline(f, line)) {
        std::vector<std::string> v;
        std::stringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) v.push_back(c);
        if (v.size() < cols.size()) continue;
        auto& a = acc[std::stod(v[ir])];
        a.first += std::stod(v[is]);
        a.second += 1;
      }
      std::vector<double> r, S;
      for (auto [x, a] : acc) {
        r.push_back(x);
        S.push_back(a.first / a.second);
      }
      const bool off = model == "stretched-exp" || (model == "auto" && delta > 0.0);
      const FitResult fr = off ? fit_stretched_exponential(r, S, delta, period) : fit_power_law(r, S);
      json scores = json::array();
      for (const auto& s : fr.scores)
        scores.push_back({{"model", s.model}, {"params", s.params}, {"points", s.points}, {"rss", s.rss},
                          {"aicc", std::isfinite(s.aicc) ? json(s.aicc) : json(nullptr)}});
      emit_json(o, {{"model", fr.model}, {"exponent", fr.exponent}, {"amplitude", fr.amplitude},
                    {"log_exponent", fr.log_exponent}, {"kappa", fr.kappa}, {"xi", fr.xi}, {"offset", fr.offset},
                    {"residuals", fr.residuals}, {"scores", scores}});
    } else if (run->parsed()) {
      if (!o.out.empty()) cfg.out_dir = o.out;
      const ExperimentReport rep = run_experiment(experiment, cfg, workers);
      std::cout << with_schema({{"experiment", rep.name}, {"pass", rep.pass}, {"failures", rep.failures},
                                {"files", rep.files}, {"wall_seconds", rep.wall_seconds}})
                       .dump(2)
                << "\n";
      return rep.pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << with_schema({{"error", e.what()}}).dump(2) << "\n";
    return 1;
  }
  return 0;
}
