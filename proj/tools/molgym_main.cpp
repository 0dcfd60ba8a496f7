#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "molgym/checkpoint.hpp"
#include "molgym/density.hpp"
#include "molgym/runner.hpp"
#include "molgym/xyz.hpp"

namespace {

using namespace molgym;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void print_summary(const RunSummary& s) {
  std::printf("%-18s %-18s %-18s %s\n", "validity", "diversity(final)", "diversity(all)",
              "stability RMSD (median)");
  std::printf("%-18.3f %-18ld %-18ld ", s.validity, s.diversity_final, s.diversity_all);
  if (s.rmsd_defined) {
    std::printf("%.4f\n", s.rmsd_median);
  } else {
    std::printf("n/a\n");
  }
}

int run_mode(const std::string& config_path, long seed, bool has_seed,
             const std::string& out_dir, const std::string& mode,
             const std::string& checkpoint) {
  ExperimentConfig cfg = load_experiment(config_path);
  cfg.mode = mode;
  if (has_seed) cfg.seeds = {seed};
  if (!checkpoint.empty()) cfg.checkpoint_path = checkpoint;
  run_experiment(cfg, out_dir);
  print_summary(summarize_run_dir(cfg, out_dir));
  std::cout << "wrote " << out_dir << "/summary.json\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential 3D molecular design: covariant actor-critic, PPO training,\n"
               "a classical optimization baseline, and structure metrics."};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", checkpoint, in_xyz, out_xyz, metrics_dir;
  long seed = 0;
  bool has_seed = false;
  double relax_tol = 1e-5;
  int relax_max_iter = 5000;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--seed", seed, "override the config's seed list")
        ->each([&](const std::string&) { has_seed = true; });
    sub->add_option("--out-dir", out_dir, "output directory");
  };

  CLI::App* train = app.add_subcommand("train", "PPO training across seeds");
  add_common(train);

  CLI::App* evaluate = app.add_subcommand("evaluate", "greedy rollouts from a checkpoint");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "parameter checkpoint to load");

  CLI::App* baseline = app.add_subcommand("baseline", "classical optimization agent");
  add_common(baseline);

  CLI::App* metrics = app.add_subcommand("metrics", "recompute summary from stored XYZ");
  metrics->add_option("--config", config_path, "experiment config file")->required();
  metrics->add_option("--dir", metrics_dir, "run directory to summarize")->required();

  CLI::App* relax_cmd = app.add_subcommand("relax", "relax a structure with the oracle");
  relax_cmd->add_option("--config", config_path, "experiment config file")->required();
  relax_cmd->add_option("--in", in_xyz, "input XYZ file")->required();
  relax_cmd->add_option("--out", out_xyz, "output XYZ file")->required();
  relax_cmd->add_option("--tol", relax_tol, "max per-atom force");
  relax_cmd->add_option("--max-iter", relax_max_iter, "iteration cap");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return run_mode(config_path, seed, has_seed, out_dir, "train", "");
    if (evaluate->parsed()) {
      return run_mode(config_path, seed, has_seed, out_dir, "evaluate", checkpoint);
    }
    if (baseline->parsed()) {
      return run_mode(config_path, seed, has_seed, out_dir, "baseline", "");
    }
    if (metrics->parsed()) {
      const ExperimentConfig cfg = load_experiment(config_path);
      const RunSummary summary = summarize_run_dir(cfg, metrics_dir);
      std::cout << summary_to_json(summary);
      return kExitOk;
    }
    if (relax_cmd->parsed()) {
      const ExperimentConfig cfg = load_experiment(config_path);
      const auto oracle = make_oracle(cfg);
      const XyzFile input = read_xyz(in_xyz, *cfg.table);
      const RelaxResult result = relax_all(input.canvas, *oracle, relax_tol, relax_max_iter);
      char comment[96];
      std::snprintf(comment, sizeof(comment), "energy=%.12g converged=%d", result.energy,
                    result.converged ? 1 : 0);
      write_xyz(out_xyz, result.canvas, *cfg.table, comment);
      std::cout << "wrote " << out_xyz << " energy=" << result.energy << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SamplingError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}
