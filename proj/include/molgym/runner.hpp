#pragma once

#include <memory>
#include <string>
#include <vector>

#include "molgym/agent.hpp"
#include "molgym/config.hpp"
#include "molgym/env.hpp"
#include "molgym/opt_agent.hpp"
#include "molgym/ppo.hpp"

namespace molgym {

struct ExperimentConfig {
  std::string mode = "train";  // train | evaluate | baseline
  std::vector<long> seeds{0};
  std::shared_ptr<const ElementTable> table;
  TaskSpec task;
  std::string oracle_kind = "morse";  // morse | counting
  AgentConfig agent;
  PpoConfig ppo;
  EnvConfig env;
  OptConfig opt;
  std::string checkpoint_path;  // evaluate mode
  double metrics_relax_tol = 1e-5;
  int metrics_relax_max_iter = 2000;
  double bond_factor = 1.2;
};

/// Parses an experiment file. Unknown keys are an error (prevents silently
/// ignored typos); every hyperparameter has its paper-default fallback.
ExperimentConfig load_experiment(const std::string& path);
ExperimentConfig experiment_from_config(const ConfigFile& cfg);

std::shared_ptr<const EnergyOracle> make_oracle(const ExperimentConfig& cfg);

/// Runs the configured mode for every seed, writing per-seed artifacts
/// (metrics.jsonl, structures/, checkpoint.txt) under out_dir and a
/// summary.json recomputed purely from the stored structures.
void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

struct RunSummary {
  long structures_total = 0;   // final-evaluation structures
  long structures_valid = 0;
  double validity = 0.0;       // valid / total over final evaluations
  long diversity_final = 0;    // distinct valid hashes, final evaluations
  long diversity_all = 0;      // distinct valid hashes, every stored structure
  double rmsd_median = 0.0;    // median stability RMSD over valid finals
  bool rmsd_defined = false;
};

/// Recomputes the summary from the XYZ artifacts on disk; the same function
/// backs both `run_experiment` and the `metrics` subcommand, so the numbers
/// are reproducible from raw structures alone.
RunSummary summarize_run_dir(const ExperimentConfig& cfg, const std::string& out_dir);
std::string summary_to_json(const RunSummary& summary);

}  // namespace molgym
