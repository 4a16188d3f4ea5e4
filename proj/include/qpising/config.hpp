#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "qpising/core.hpp"
#include "qpising/rg.hpp"

namespace qpising {

// Text format: "[section]" headers and "key = value" lines; '#' starts a comment.
//
// [model]   J0, J1, beta (number or "critical"), lambda, omega0, omega1, preset
//           (single-cosine | layered | bidimensional | custom), theta00, theta01, theta10, theta11,
//           harmonics ("j n0 n1 re im; ..." for preset = custom), decay_A, decay_eta
// [box]     generation, or L0 and L1
// [rg]      gamma, q_max, q_first, h_min, torus_grid
// [scan]    beta_min, beta_max, beta_count, lambdas (comma list), separation
// [output]  dir, format (csv | json)
struct RunConfig {
  std::array<double, 2> J{1.0, 1.0};
  std::optional<double> beta;  // empty: critical point of the model
  double lambda = 0.0;
  std::array<double, 2> omega{};  // filled with the golden mean
  std::string preset = "single-cosine";
  std::optional<std::array<std::array<double, 2>, 2>> theta;  // empty: the preset's phases
  std::array<std::vector<Harmonic>, 2> harmonics;  // custom preset only
  double decay_A = 0.5;
  double decay_eta = 1.0;

  int generation = 9;
  int L0 = 0, L1 = 0;  // explicit box when both positive

  RGConfig rg;

  double beta_min = 0.40, beta_max = 0.48;
  int beta_count = 41;
  std::vector<double> lambdas{0.05, 0.1};
  int separation = 8;

  std::string out_dir = "out";
  std::string format = "csv";

  RunConfig();
  BoxSpec box() const;
  ModulationSpec modulation() const;
  bool operator==(const RunConfig&) const;
};

struct ConfigIssue {
  int line = 0;  // 0 when the issue is not tied to one line
  std::string message;
};

struct ParseResult {
  RunConfig config;
  std::vector<ConfigIssue> errors;
  bool ok() const { return errors.empty(); }
  std::string report() const;  // one issue per line
};

ParseResult parse_config(const std::string& text);
// Canonical text form; parse_config(emit_config(c)).config == c.
std::string emit_config(const RunConfig& c);

// 64-bit FNV-1a of a string, hex encoded.
std::string fnv1a_hex(const std::string& s);

}  // namespace qpising
