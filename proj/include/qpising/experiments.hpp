#pragma once

#include <string>
#include <vector>

#include "qpising/config.hpp"

namespace qpising {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

struct ExperimentReport {
  std::string name;
  bool pass = false;
  std::vector<std::string> failures;  // failed invariant checks or the error that stopped the run
  std::vector<std::string> files;     // written artifacts, manifest last
  std::string summary_json;
  double wall_seconds = 0.0;
};

std::vector<std::string> experiment_names();

// Runs one of oracle-check, critical-scan, exponent-fit, rg-flow, modulation-map and writes its
// artifacts plus manifest.json into cfg.out_dir. The manifest is written even when the run throws.
ExperimentReport run_experiment(const std::string& name, const RunConfig& cfg, int workers = 1);

// Critical temperature used by the experiments: the mass root at lambda = 0, the flow root otherwise.
double model_critical_beta(const RunConfig& cfg);

}  // namespace qpising
