#include "qpising/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace qpising {

RunConfig::RunConfig() { omega = {golden_mean(), golden_mean()}; }

BoxSpec RunConfig::box() const {
  if (L0 > 0 && L1 > 0)
    return box_explicit(L0, L1, std::llround(omega[0] * L0), std::llround(omega[1] * L1));
  return box_from_generation(omega[0], omega[1], generation);
}

ModulationSpec RunConfig::modulation() const {
  ModulationSpec m;
  if (preset == "layered") {
    m = layered_preset(lambda);
  } else if (preset == "bidimensional") {
    m = bidimensional_preset(lambda);
  } else if (preset == "custom") {
    m.lambda = lambda;
    m.harmonics = harmonics;
    m.make_hermitian();
  } else {
    m = single_cosine(lambda);
  }
  if (theta) m.theta = *theta;
  m.decay_A = decay_A;
  m.decay_eta = decay_eta;
  return m;
}

namespace {

bool same_harmonics(const std::vector<Harmonic>& a, const std::vector<Harmonic>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].n0 != b[i].n0 || a[i].n1 != b[i].n1 || a[i].amp != b[i].amp) return false;
  return true;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> to_double(const std::string& v) {
  double x = 0.0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end || !std::isfinite(x)) return std::nullopt;
  return x;
}

std::optional<int> to_int(const std::string& v) {
  int x = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) return std::nullopt;
  return x;
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const {
  return J == o.J && beta == o.beta && lambda == o.lambda && omega == o.omega && preset == o.preset &&
         theta == o.theta && same_harmonics(harmonics[0], o.harmonics[0]) &&
         same_harmonics(harmonics[1], o.harmonics[1]) && decay_A == o.decay_A && decay_eta == o.decay_eta &&
         generation == o.generation && L0 == o.L0 && L1 == o.L1 && rg.gamma == o.rg.gamma &&
         rg.q_max == o.rg.q_max && rg.q_first == o.rg.q_first && rg.h_min == o.rg.h_min &&
         rg.torus_grid == o.rg.torus_grid && beta_min == o.beta_min && beta_max == o.beta_max &&
         beta_count == o.beta_count && lambdas == o.lambdas && separation == o.separation &&
         out_dir == o.out_dir && format == o.format;
}

std::string ParseResult::report() const {
  std::string s;
  for (const auto& e : errors) s += (e.line > 0 ? "line " + std::to_string(e.line) + ": " : "") + e.message + "\n";
  return s;
}

ParseResult parse_config(const std::string& text) {
  ParseResult res;
  RunConfig& c = res.config;
  auto err = [&](int line, std::string msg) { res.errors.push_back({line, std::move(msg)}); };

  std::array<double, 4> th{};
  bool theta_set = false;
  bool generation_set = false;

  using Setter = std::function<bool(const std::string&)>;
  auto dbl = [](double& dst) -> Setter {
    return [&dst](const std::string& v) {
      auto x = to_double(v);
      if (x) dst = *x;
      return x.has_value();
    };
  };
  auto integer = [](int& dst) -> Setter {
    return [&dst](const std::string& v) {
      auto x = to_int(v);
      if (x) dst = *x;
      return x.has_value();
    };
  };
  auto text_value = [](std::string& dst) -> Setter {
    return [&dst](const std::string& v) {
      dst = v;
      return !v.empty();
    };
  };
  auto theta_entry = [&](int i) -> Setter {
    return [&, i](const std::string& v) {
      auto x = to_double(v);
      if (x) th[i] = *x, theta_set = true;
      return x.has_value();
    };
  };

  std::map<std::string, Setter> keys = {
      {"model.J0", dbl(c.J[0])},
      {"model.J1", dbl(c.J[1])},
      {"model.beta",
       [&](const std::string& v) {
         if (v == "critical") {
           c.beta.reset();
           return true;
         }
         auto x = to_double(v);
         if (x) c.beta = *x;
         return x.has_value();
       }},
      {"model.lambda", dbl(c.lambda)},
      {"model.omega0", dbl(c.omega[0])},
      {"model.omega1", dbl(c.omega[1])},
      {"model.preset", text_value(c.preset)},
      {"model.theta00", theta_entry(0)},
      {"model.theta01", theta_entry(1)},
      {"model.theta10", theta_entry(2)},
      {"model.theta11", theta_entry(3)},
      {"model.harmonics",
       [&](const std::string& v) {
         c.harmonics = {};
         for (const auto& item : split(v, ';')) {
           std::istringstream is(item);
           int j = 0, n0 = 0, n1 = 0;
           double re = 0.0, im = 0.0;
           std::string extra;
           if (!(is >> j >> n0 >> n1 >> re >> im) || (is >> extra) || (j != 0 && j != 1)) return false;
           c.harmonics[j].push_back({n0, n1, cplx(re, im)});
         }
         return true;
       }},
      {"model.decay_A", dbl(c.decay_A)},
      {"model.decay_eta", dbl(c.decay_eta)},
      {"box.generation",
       [&](const std::string& v) {
         generation_set = true;
         return integer(c.generation)(v);
       }},
      {"box.L0", integer(c.L0)},
      {"box.L1", integer(c.L1)},
      {"rg.gamma", dbl(c.rg.gamma)},
      {"rg.q_max", integer(c.rg.q_max)},
      {"rg.q_first", integer(c.rg.q_first)},
      {"rg.h_min", integer(c.rg.h_min)},
      {"rg.torus_grid", integer(c.rg.torus_grid)},
      {"scan.beta_min", dbl(c.beta_min)},
      {"scan.beta_max", dbl(c.beta_max)},
      {"scan.beta_count", integer(c.beta_count)},
      {"scan.lambdas",
       [&](const std::string& v) {
         c.lambdas.clear();
         for (const auto& item : split(v, ',')) {
           auto x = to_double(item);
           if (!x) return false;
           c.lambdas.push_back(*x);
         }
         return true;
       }},
      {"scan.separation", integer(c.separation)},
      {"output.dir", text_value(c.out_dir)},
      {"output.format", text_value(c.format)},
  };

  std::map<std::string, int> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        err(line_no, "malformed section header '" + line + "'");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "box" && section != "rg" && section != "scan" && section != "output")
        err(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      err(line_no, "expected 'key = value', got '" + line + "'");
      continue;
    }
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      err(line_no, "key '" + trim(line.substr(0, eq)) + "' outside any section");
      continue;
    }
    auto it = keys.find(key);
    if (it == keys.end()) {
      err(line_no, "unknown key '" + key + "'");
      continue;
    }
    if (auto s = seen.find(key); s != seen.end()) {
      err(line_no, "duplicate key '" + key + "' on lines " + std::to_string(s->second) + " and " +
                       std::to_string(line_no));
      continue;
    }
    seen[key] = line_no;
    if (!it->second(value)) err(line_no, "invalid value '" + value + "' for '" + key + "'");
  }
  if (theta_set) c.theta = std::array<std::array<double, 2>, 2>{{{th[0], th[1]}, {th[2], th[3]}}};

  auto at = [&](const std::string& key) { return seen.count(key) ? seen[key] : 0; };
  for (int j = 0; j < 2; ++j) {
    const std::string k = "model.J" + std::to_string(j);
    if (!(c.J[j] > 0.0)) err(at(k), k + " must be positive");
    const std::string w = "model.omega" + std::to_string(j);
    if (!(c.omega[j] > 0.0 && c.omega[j] < 1.0)) err(at(w), w + " must lie in (0, 1)");
  }
  if (c.beta && !(*c.beta > 0.0)) err(at("model.beta"), "model.beta must be positive or 'critical'");
  if (c.preset != "single-cosine" && c.preset != "layered" && c.preset != "bidimensional" && c.preset != "custom")
    err(at("model.preset"), "model.preset must be single-cosine, layered, bidimensional or custom");
  if (c.preset == "custom" && c.harmonics[0].empty() && c.harmonics[1].empty())
    err(at("model.preset"), "preset custom needs model.harmonics");
  if (c.preset != "custom" && seen.count("model.harmonics"))
    err(at("model.harmonics"), "model.harmonics is only used with preset = custom");
  if (!(c.decay_eta > 0.0)) err(at("model.decay_eta"), "model.decay_eta must be positive");
  if ((c.L0 > 0) != (c.L1 > 0) || c.L0 < 0 || c.L1 < 0)
    err(at(seen.count("box.L0") ? "box.L0" : "box.L1"), "box.L0 and box.L1 must both be positive");
  if (c.L0 > 0 && generation_set) err(at("box.generation"), "give either box.generation or box.L0/L1, not both");
  if (!(c.rg.gamma > 1.0)) err(at("rg.gamma"), "rg.gamma must exceed 1");
  if (c.rg.q_max < 1) err(at("rg.q_max"), "rg.q_max must be at least 1");
  if (c.rg.q_first < 1) err(at("rg.q_first"), "rg.q_first must be at least 1");
  if (c.rg.h_min > 0) err(at("rg.h_min"), "rg.h_min must be <= 0");
  if (c.rg.torus_grid < 4) err(at("rg.torus_grid"), "rg.torus_grid must be at least 4");
  if (!(c.beta_min > 0.0 && c.beta_max > c.beta_min)) err(at("scan.beta_max"), "need 0 < beta_min < beta_max");
  if (c.beta_count < 5) err(at("scan.beta_count"), "scan.beta_count must be at least 5");
  if (c.lambdas.empty()) err(at("scan.lambdas"), "scan.lambdas must not be empty");
  if (c.separation < 1) err(at("scan.separation"), "scan.separation must be positive");
  if (c.format != "csv" && c.format != "json") err(at("output.format"), "output.format must be csv or json");
  if (!res.errors.empty()) return res;

  // checks that need the box and the modulation
  BoxSpec box;
  try {
    box = c.box();
  } catch (const std::exception& e) {
    err(at(c.L0 > 0 ? "box.L0" : "box.generation"), e.what());
    return res;
  }
  const int w0 = box.L0 / 2, w1 = box.L1 / 2;
  for (int j = 0; j < 2; ++j)
    for (const auto& h : c.harmonics[j])
      if (std::abs(h.n0) > w0 || std::abs(h.n1) > w1)
        err(at("model.harmonics"), "harmonic (" + std::to_string(h.n0) + ", " + std::to_string(h.n1) +
                                       ") outside the box Fourier window |n0| <= " + std::to_string(w0) +
                                       ", |n1| <= " + std::to_string(w1));
  if (!res.errors.empty()) return res;
  try {
    build_couplings(box, c.modulation(), c.J, c.beta.value_or(0.44));
  } catch (const std::exception& e) {
    err(at("model.lambda"), std::string("model rejected: ") + e.what());
  }
  return res;
}

std::string emit_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[model]\n";
  o << "J0 = " << num(c.J[0]) << "\nJ1 = " << num(c.J[1]) << "\n";
  o << "beta = " << (c.beta ? num(*c.beta) : std::string("critical")) << "\n";
  o << "lambda = " << num(c.lambda) << "\n";
  o << "omega0 = " << num(c.omega[0]) << "\nomega1 = " << num(c.omega[1]) << "\n";
  o << "preset = " << c.preset << "\n";
  if (c.theta) {
    const auto& t = *c.theta;
    o << "theta00 = " << num(t[0][0]) << "\ntheta01 = " << num(t[0][1]) << "\n";
    o << "theta10 = " << num(t[1][0]) << "\ntheta11 = " << num(t[1][1]) << "\n";
  }
  if (c.preset == "custom") {
    o << "harmonics =";
    bool first = true;
    for (int j = 0; j < 2; ++j)
      for (const auto& h : c.harmonics[j]) {
        o << (first ? " " : "; ") << j << " " << h.n0 << " " << h.n1 << " " << num(h.amp.real()) << " "
          << num(h.amp.imag());
        first = false;
      }
    o << "\n";
  }
  o << "decay_A = " << num(c.decay_A) << "\ndecay_eta = " << num(c.decay_eta) << "\n";
  o << "\n[box]\n";
  if (c.L0 > 0)
    o << "L0 = " << c.L0 << "\nL1 = " << c.L1 << "\n";
  else
    o << "generation = " << c.generation << "\n";
  o << "\n[rg]\n";
  o << "gamma = " << num(c.rg.gamma) << "\nq_max = " << c.rg.q_max << "\nq_first = " << c.rg.q_first
    << "\nh_min = " << c.rg.h_min << "\ntorus_grid = " << c.rg.torus_grid << "\n";
  o << "\n[scan]\n";
  o << "beta_min = " << num(c.beta_min) << "\nbeta_max = " << num(c.beta_max) << "\nbeta_count = " << c.beta_count
    << "\nlambdas = ";
  for (std::size_t i = 0; i < c.lambdas.size(); ++i) o << (i ? ", " : "") << num(c.lambdas[i]);
  o << "\nseparation = " << c.separation << "\n";
  o << "\n[output]\n";
  o << "dir = " << c.out_dir << "\nformat = " << c.format << "\n";
  return o.str();
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace qpising
