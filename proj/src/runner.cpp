#include "molgym/runner.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "molgym/checkpoint.hpp"
#include "molgym/metrics.hpp"
#include "molgym/xyz.hpp"

namespace molgym {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<Bag> parse_bag_list(const std::string& text, const ElementTable& table) {
  std::vector<Bag> bags;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto bar = text.find('|', start);
    const std::string piece =
        text.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
    if (!piece.empty()) bags.push_back(parse_bag(piece, table));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  if (bags.empty()) throw ConfigError("task: empty bag list");
  return bags;
}

std::vector<int> element_universe(const TaskSpec& task) {
  std::vector<int> out;
  auto add = [&](int e) {
    if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
  };
  for (const Bag& b : task.bags) {
    for (const auto& [e, c] : b.counts) add(e);
  }
  for (const auto& [e, c] : task.bag_star.counts) add(e);
  for (const Atom& a : task.initial_canvas.atoms) add(a.element);
  std::sort(out.begin(), out.end());
  return out;
}

std::string comment_for(const Canvas& canvas, const EnergyOracle& oracle, double total_reward) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "energy=%.12g return=%.12g", oracle.energy(canvas),
                total_reward);
  return buf;
}

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

json record_to_json(const IterationRecord& rec) {
  json j;
  j["iteration"] = rec.iteration;
  j["env_steps"] = rec.env_steps;
  j["mean_online_return"] = rec.mean_online_return;
  j["mean_offline_return"] = rec.mean_offline_return;
  j["policy_loss"] = rec.policy_loss;
  j["value_loss"] = rec.value_loss;
  j["entropy"] = rec.entropy;
  j["total_loss"] = rec.total_loss;
  j["grad_norm"] = rec.grad_norm;
  return j;
}

}  // namespace

ExperimentConfig experiment_from_config(const ConfigFile& cfg) {
  ExperimentConfig out;

  const std::string elements_file = cfg.get_string("oracle", "elements_file", "");
  out.table = std::make_shared<const ElementTable>(
      elements_file.empty() ? ElementTable::builtin() : ElementTable::load(elements_file));
  out.oracle_kind = cfg.get_string("oracle", "kind", "morse");
  if (out.oracle_kind != "morse" && out.oracle_kind != "counting") {
    throw ConfigError("oracle.kind: expected morse or counting, got " + out.oracle_kind);
  }

  // Task.
  const std::string kind = cfg.get_string("task", "kind", "single-bag");
  TaskSpec& task = out.task;
  if (kind == "single-bag") {
    task.kind = TaskKind::kSingleBag;
    task.bags = {parse_bag(cfg.require_string("task", "bag"), *out.table)};
  } else if (kind == "multi-bag") {
    task.kind = TaskKind::kMultiBag;
    task.bags = parse_bag_list(cfg.require_string("task", "bags"), *out.table);
  } else if (kind == "stochastic-bag") {
    task.kind = TaskKind::kStochasticBag;
    task.bag_star = parse_bag(cfg.require_string("task", "bstar"), *out.table);
    task.zeta_min = cfg.get_int("task", "zeta_min", task.bag_star.total());
    task.zeta_max = cfg.get_int("task", "zeta_max", task.bag_star.total());
    if (task.zeta_min > task.zeta_max || task.zeta_min < 1) {
      throw ConfigError("task.zeta_min/zeta_max: invalid range");
    }
    task.bags = {task.bag_star};  // evaluation bag
  } else if (kind == "solvation") {
    task.kind = TaskKind::kSolvation;
    task.bags = {parse_bag(cfg.require_string("task", "bag"), *out.table)};
    task.initial_canvas =
        read_xyz(cfg.require_string("task", "seed_xyz"), *out.table).canvas;
    task.solvation_rho = cfg.get_double("task", "rho", 0.01);
  } else {
    throw ConfigError("task.kind: unknown task kind '" + kind + "'");
  }
  task.elements = element_universe(task);
  if (cfg.has("task", "elements")) {
    task.elements.clear();
    std::istringstream ss(cfg.get_string("task", "elements", ""));
    std::string sym;
    while (std::getline(ss, sym, ',')) task.elements.push_back(out.table->id(sym));
  }

  // Agent (defaults follow the reported hyperparameters).
  AgentConfig& ag = out.agent;
  ag.l_max = cfg.get_int("agent", "l_max", ag.l_max);
  ag.channels_per_element = cfg.get_int("agent", "tau_e", ag.channels_per_element);
  ag.cg_rounds = cfg.get_int("agent", "cg_rounds", ag.cg_rounds);
  ag.mixture_components = cfg.get_int("agent", "mixture", ag.mixture_components);
  ag.d_min = cfg.get_double("agent", "d_min", ag.d_min);
  ag.d_max = cfg.get_double("agent", "d_max", ag.d_max);
  ag.beta = cfg.get_double("agent", "beta", ag.beta);
  const std::string variant = cfg.get_string("agent", "density", "exp-squared");
  if (variant == "exp-squared") {
    ag.density_variant = DensityVariant::kExpSquared;
  } else if (variant == "squared") {
    ag.density_variant = DensityVariant::kSquared;
  } else {
    throw ConfigError("agent.density: expected exp-squared or squared, got " + variant);
  }
  ag.quadrature_order = cfg.get_int("agent", "quadrature_order", ag.quadrature_order);
  ag.mode_samples = cfg.get_int("agent", "mode_samples", ag.mode_samples);
  ag.envelope_safety = cfg.get_double("agent", "envelope_safety", ag.envelope_safety);
  ag.envelope_grid = cfg.get_int("agent", "envelope_grid", ag.envelope_grid);
  ag.rbf_count = cfg.get_int("agent", "rbf_count", ag.rbf_count);
  ag.rbf_min = cfg.get_double("agent", "rbf_min", ag.rbf_min);
  ag.rbf_max = cfg.get_double("agent", "rbf_max", ag.rbf_max);
  ag.cutoff = cfg.get_double("agent", "cutoff", ag.cutoff);
  ag.hidden = cfg.get_int("agent", "hidden", ag.hidden);
  ag.distance_clip = cfg.get_double("agent", "distance_clip", ag.distance_clip);
  ag.sigma_init = cfg.get_double("agent", "sigma_init", ag.sigma_init);
  ag.bag_scale = cfg.get_double("agent", "bag_scale", ag.bag_scale);

  // PPO.
  PpoConfig& ppo = out.ppo;
  ppo.clip_eps = cfg.get_double("ppo", "clip_eps", ppo.clip_eps);
  ppo.grad_clip = cfg.get_double("ppo", "grad_clip", ppo.grad_clip);
  ppo.gae_lambda = cfg.get_double("ppo", "gae_lambda", ppo.gae_lambda);
  ppo.value_coef = cfg.get_double("ppo", "value_coef", ppo.value_coef);
  ppo.entropy_coef = cfg.get_double("ppo", "entropy_coef", ppo.entropy_coef);
  ppo.epochs = cfg.get_int("ppo", "epochs", ppo.epochs);
  ppo.lr = cfg.get_double("ppo", "lr", ppo.lr);
  ppo.gamma = cfg.get_double("ppo", "gamma", ppo.gamma);
  ppo.workers = cfg.get_int("ppo", "workers", ppo.workers);
  ppo.horizon_multiplier = cfg.get_int("ppo", "horizon_multiplier", ppo.horizon_multiplier);
  ppo.minibatch = cfg.get_int("ppo", "minibatch", ppo.minibatch);
  ppo.total_steps = cfg.get_long("run", "total_steps", ppo.total_steps);
  ppo.eval_every = cfg.get_int("run", "eval_every", ppo.eval_every);

  // Environment rules.
  EnvConfig& env = out.env;
  env.min_distance = cfg.get_double("env", "min_distance", env.min_distance);
  env.max_distance = cfg.get_double("env", "max_distance", env.max_distance);
  env.reward_floor = cfg.get_double("env", "reward_floor", env.reward_floor);
  env.floor_all_steps = cfg.get_bool("env", "floor_all_steps", env.floor_all_steps);
  env.horizon_multiplier = cfg.get_int("env", "horizon_multiplier", env.horizon_multiplier);

  // Opt baseline.
  OptConfig& opt = out.opt;
  opt.placement_radius = cfg.get_double("opt", "placement_radius", opt.placement_radius);
  opt.neighbor_cutoff = cfg.get_double("opt", "neighbor_cutoff", opt.neighbor_cutoff);
  opt.relax_tol = cfg.get_double("opt", "relax_tol", opt.relax_tol);
  opt.relax_max_iter = cfg.get_int("opt", "relax_max_iter", opt.relax_max_iter);
  opt.max_retries_per_step = cfg.get_int("opt", "max_retries", opt.max_retries_per_step);
  opt.eval_budget = cfg.get_long("opt", "eval_budget", opt.eval_budget);

  // Run control and metrics.
  out.mode = cfg.get_string("run", "mode", "train");
  if (out.mode != "train" && out.mode != "evaluate" && out.mode != "baseline") {
    throw ConfigError("run.mode: expected train, evaluate or baseline, got " + out.mode);
  }
  out.seeds = cfg.get_long_list("run", "seeds", {0});
  out.checkpoint_path = cfg.get_string("run", "checkpoint", "");
  out.metrics_relax_tol = cfg.get_double("eval", "relax_tol", out.metrics_relax_tol);
  out.metrics_relax_max_iter =
      cfg.get_int("eval", "relax_max_iter", out.metrics_relax_max_iter);
  out.bond_factor = cfg.get_double("eval", "bond_factor", out.bond_factor);

  const std::vector<std::string> unused = cfg.unused_keys();
  if (!unused.empty()) {
    throw ConfigError("unknown config key " + unused.front());
  }
  return out;
}

ExperimentConfig load_experiment(const std::string& path) {
  return experiment_from_config(ConfigFile::parse_file(path));
}

std::shared_ptr<const EnergyOracle> make_oracle(const ExperimentConfig& cfg) {
  if (cfg.oracle_kind == "counting") return std::make_shared<CountingOracle>();
  return std::make_shared<MorseOracle>(cfg.table);
}

namespace {

void run_train_seed(const ExperimentConfig& cfg, long seed, const fs::path& seed_dir) {
  const auto oracle = make_oracle(cfg);
  PolicyAgent agent(cfg.agent, cfg.task.elements, cfg.table,
                    Rng::mix({static_cast<std::uint64_t>(seed), 0x1eafULL}));

  fs::create_directories(seed_dir / "structures");
  fs::create_directories(seed_dir / "final");
  std::ofstream metrics(seed_dir / "metrics.jsonl", std::ios::binary);

  int last_eval_iteration = -1;
  TrainHooks hooks;
  hooks.on_iteration = [&](const IterationRecord& rec) {
    metrics << record_to_json(rec).dump() << "\n";
  };
  hooks.on_eval = [&](int iteration, const std::vector<EvalEpisode>& evals) {
    last_eval_iteration = iteration;
    for (std::size_t b = 0; b < evals.size(); ++b) {
      char name[64];
      std::snprintf(name, sizeof(name), "iter_%06d_bag%02zu.xyz", iteration, b);
      write_xyz((seed_dir / "structures" / name).string(), evals[b].final_canvas, *cfg.table,
                comment_for(evals[b].final_canvas, *oracle, evals[b].total_reward));
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  train(agent, cfg.task, cfg.table, oracle, cfg.env, cfg.ppo,
        static_cast<std::uint64_t>(seed), hooks);

  // Final offline evaluation defines the validity set.
  const std::vector<EvalEpisode> final_evals =
      evaluate_greedy(agent, cfg.task, cfg.table, oracle, cfg.env,
                      Rng::mix({static_cast<std::uint64_t>(seed), 0xf1a1ULL}));
  for (std::size_t b = 0; b < final_evals.size(); ++b) {
    char name[64];
    std::snprintf(name, sizeof(name), "bag%02zu.xyz", b);
    write_xyz((seed_dir / "final" / name).string(), final_evals[b].final_canvas, *cfg.table,
              comment_for(final_evals[b].final_canvas, *oracle, final_evals[b].total_reward));
  }
  save_checkpoint((seed_dir / "checkpoint.txt").string(), agent.params());

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  // Kept out of metrics.jsonl so logs stay byte-identical across reruns.
  std::ofstream timing(seed_dir / "timing.txt");
  timing << "wall_time_s " << wall << "\n";
  (void)last_eval_iteration;
}

void run_evaluate_seed(const ExperimentConfig& cfg, long seed, const fs::path& seed_dir) {
  if (cfg.checkpoint_path.empty()) {
    throw ConfigError("run.checkpoint: required for evaluate mode");
  }
  const auto oracle = make_oracle(cfg);
  PolicyAgent agent(cfg.agent, cfg.task.elements, cfg.table,
                    Rng::mix({static_cast<std::uint64_t>(seed), 0x1eafULL}));
  load_checkpoint(cfg.checkpoint_path, agent.params());

  fs::create_directories(seed_dir / "final");
  const std::vector<EvalEpisode> evals =
      evaluate_greedy(agent, cfg.task, cfg.table, oracle, cfg.env,
                      Rng::mix({static_cast<std::uint64_t>(seed), 0xf1a1ULL}));
  std::ofstream metrics(seed_dir / "metrics.jsonl", std::ios::binary);
  double sum = 0.0;
  for (std::size_t b = 0; b < evals.size(); ++b) {
    sum += evals[b].total_reward;
    char name[64];
    std::snprintf(name, sizeof(name), "bag%02zu.xyz", b);
    write_xyz((seed_dir / "final" / name).string(), evals[b].final_canvas, *cfg.table,
              comment_for(evals[b].final_canvas, *oracle, evals[b].total_reward));
  }
  IterationRecord rec;
  rec.mean_offline_return = evals.empty() ? 0.0 : sum / static_cast<double>(evals.size());
  metrics << record_to_json(rec).dump() << "\n";
}

void run_baseline_seed(const ExperimentConfig& cfg, long seed, const fs::path& seed_dir) {
  const auto oracle = make_oracle(cfg);
  Rng rng(Rng::mix({static_cast<std::uint64_t>(seed), 0x0b7aULL}));
  const OptResult result = run_opt_agent(cfg.task, cfg.table, oracle, cfg.opt, rng);

  fs::create_directories(seed_dir / "final");
  write_xyz((seed_dir / "final" / "bag00.xyz").string(), result.canvas, *cfg.table,
            comment_for(result.canvas, *oracle, result.total_reward));
  std::ofstream metrics(seed_dir / "metrics.jsonl", std::ios::binary);
  IterationRecord rec;
  rec.mean_offline_return = result.total_reward;
  json j = record_to_json(rec);
  j["oracle_calls"] = result.oracle_calls;
  j["completed"] = result.completed;
  metrics << j.dump() << "\n";
}

}  // namespace

RunSummary summarize_run_dir(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto oracle = make_oracle(cfg);
  RunSummary summary;
  std::vector<std::string> final_hashes;
  std::vector<std::string> all_hashes;
  std::vector<double> stabilities;

  std::vector<fs::path> seed_dirs;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (entry.is_directory() &&
        entry.path().filename().string().rfind("seed_", 0) == 0) {
      seed_dirs.push_back(entry.path());
    }
  }
  std::sort(seed_dirs.begin(), seed_dirs.end());

  const PerceptionConfig pc{cfg.bond_factor};
  auto hash_if_valid = [&](const fs::path& path) -> std::pair<bool, std::string> {
    const Canvas canvas = read_xyz(path.string(), *cfg.table).canvas;
    const MolecularGraph g = perceive_graph(canvas, *cfg.table, pc);
    if (!graph_is_valid(g, *cfg.table)) return {false, ""};
    return {true, canonical_hash(g, *cfg.table)};
  };

  for (const fs::path& sd : seed_dirs) {
    for (const fs::path& f : sorted_files(sd / "final", ".xyz")) {
      ++summary.structures_total;
      const auto [valid, hash] = hash_if_valid(f);
      if (!valid) continue;
      ++summary.structures_valid;
      final_hashes.push_back(hash);
      const Canvas canvas = read_xyz(f.string(), *cfg.table).canvas;
      stabilities.push_back(stability_metric(canvas, *oracle, cfg.metrics_relax_tol,
                                             cfg.metrics_relax_max_iter));
    }
    for (const fs::path& f : sorted_files(sd / "structures", ".xyz")) {
      const auto [valid, hash] = hash_if_valid(f);
      if (valid) all_hashes.push_back(hash);
    }
  }
  // Final structures count toward the all-evaluations diversity too.
  all_hashes.insert(all_hashes.end(), final_hashes.begin(), final_hashes.end());

  std::sort(final_hashes.begin(), final_hashes.end());
  final_hashes.erase(std::unique(final_hashes.begin(), final_hashes.end()),
                     final_hashes.end());
  std::sort(all_hashes.begin(), all_hashes.end());
  all_hashes.erase(std::unique(all_hashes.begin(), all_hashes.end()), all_hashes.end());
  summary.diversity_final = static_cast<long>(final_hashes.size());
  summary.diversity_all = static_cast<long>(all_hashes.size());
  summary.validity = summary.structures_total > 0
                         ? static_cast<double>(summary.structures_valid) /
                               static_cast<double>(summary.structures_total)
                         : 0.0;
  if (!stabilities.empty()) {
    std::sort(stabilities.begin(), stabilities.end());
    const std::size_t n = stabilities.size();
    summary.rmsd_median =
        (n % 2 == 1) ? stabilities[n / 2] : 0.5 * (stabilities[n / 2 - 1] + stabilities[n / 2]);
    summary.rmsd_defined = true;
  }
  return summary;
}

std::string summary_to_json(const RunSummary& s) {
  json j;
  j["structures_total"] = s.structures_total;
  j["structures_valid"] = s.structures_valid;
  j["validity"] = s.validity;
  j["diversity_final"] = s.diversity_final;
  j["diversity_all_evals"] = s.diversity_all;
  if (s.rmsd_defined) {
    j["rmsd_median"] = s.rmsd_median;
  } else {
    j["rmsd_median"] = nullptr;
  }
  return j.dump(2) + "\n";
}

void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (long seed : cfg.seeds) {
    const fs::path seed_dir = fs::path(out_dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);
    if (cfg.mode == "train") {
      run_train_seed(cfg, seed, seed_dir);
    } else if (cfg.mode == "evaluate") {
      run_evaluate_seed(cfg, seed, seed_dir);
    } else {
      run_baseline_seed(cfg, seed, seed_dir);
    }
  }
  const RunSummary summary = summarize_run_dir(cfg, out_dir);
  std::ofstream out(fs::path(out_dir) / "summary.json", std::ios::binary);
  out << summary_to_json(summary);
}

}  // namespace molgym
