#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "molgym/agent.hpp"
#include "molgym/env.hpp"

namespace molgym {

struct Transition {
  EnvState state;       // state the action was taken in
  PolicySample action;  // sub-actions + per-head log-probs + value at collection
  double reward = 0.0;
  bool done = false;
  double advantage = 0.0;  // filled by GAE
  double ret = 0.0;        // advantage + value
};

struct PpoConfig {
  double clip_eps = 0.2;
  double grad_clip = 0.5;
  double gae_lambda = 0.95;
  double value_coef = 1.0;    // c1
  double entropy_coef = 0.01; // c2
  int epochs = 7;
  double lr = 3e-4;
  double gamma = 0.99;
  int workers = 10;
  int horizon_multiplier = 20;  // rollout length per worker = mult * bag size
  int minibatch = 0;            // 0 = full batch per epoch
  long total_steps = 20000;
  int eval_every = 1;
};

/// GAE(gamma, lambda) over one completed episode (terminal bootstrap 0).
/// Fills advantage and ret in place; advantages are not yet normalized.
void compute_gae(std::vector<Transition>& episode, double gamma, double lambda);

/// Zero-mean unit-variance advantages across the whole batch.
void normalize_advantages(std::vector<Transition>& batch);

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

/// Builds the clipped-surrogate PPO loss over [begin, end) of the batch:
///   L = -E[min(rho A, clip(rho) A)] + c1 E[(V - R)^2] - c2 E[H].
/// The clipped branch enters as a constant, so it carries zero gradient.
ad::Var ppo_loss(ad::Tape& t, const PolicyAgent& agent, const nn::BoundParams& p,
                 const std::vector<Transition>& batch, std::size_t begin, std::size_t end,
                 const PpoConfig& cfg, LossStats* stats);

struct EvalEpisode {
  Bag bag;
  Canvas final_canvas;
  double total_reward = 0.0;
  bool violation = false;
};

struct IterationRecord {
  int iteration = 0;
  long env_steps = 0;  // cumulative
  double mean_online_return = 0.0;
  double mean_offline_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total_loss = 0.0;
  double grad_norm = 0.0;
};

struct TrainHooks {
  std::function<void(const IterationRecord&)> on_iteration;
  std::function<void(int iteration, const std::vector<EvalEpisode>&)> on_eval;
};

struct TrainResult {
  std::vector<IterationRecord> records;
  long env_steps = 0;
  double best_offline_return = -1e300;
};

/// PPO over parallel rollout workers. Deterministic for a fixed
/// (seed, worker count): each worker owns an environment and RNG streams
/// derived from (seed, worker id, episode index), trajectories merge in
/// worker order, and the optimizer runs single-threaded.
TrainResult train(PolicyAgent& agent, const TaskSpec& task,
                  std::shared_ptr<const ElementTable> table,
                  std::shared_ptr<const EnergyOracle> oracle, const EnvConfig& env_cfg,
                  const PpoConfig& cfg, std::uint64_t seed, const TrainHooks& hooks = {});

/// One greedy episode per evaluation bag.
std::vector<EvalEpisode> evaluate_greedy(const PolicyAgent& agent, const TaskSpec& task,
                                         std::shared_ptr<const ElementTable> table,
                                         std::shared_ptr<const EnergyOracle> oracle,
                                         const EnvConfig& env_cfg, std::uint64_t rng_seed);

}  // namespace molgym
