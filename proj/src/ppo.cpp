#include "molgym/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace molgym {

using ad::Tape;
using ad::Var;

void compute_gae(std::vector<Transition>& episode, double gamma, double lambda) {
  double running = 0.0;
  for (int i = static_cast<int>(episode.size()) - 1; i >= 0; --i) {
    Transition& tr = episode[static_cast<std::size_t>(i)];
    const double next_value =
        tr.done ? 0.0 : episode[static_cast<std::size_t>(i) + 1].action.value;
    const double delta = tr.reward + gamma * next_value - tr.action.value;
    running = tr.done ? delta : delta + gamma * lambda * running;
    tr.advantage = running;
    tr.ret = tr.advantage + tr.action.value;
  }
}

void normalize_advantages(std::vector<Transition>& batch) {
  if (batch.empty()) return;
  double mean = 0.0;
  for (const Transition& tr : batch) mean += tr.advantage;
  mean /= static_cast<double>(batch.size());
  double var = 0.0;
  for (const Transition& tr : batch) {
    var += (tr.advantage - mean) * (tr.advantage - mean);
  }
  var /= static_cast<double>(batch.size());
  const double std = std::sqrt(var) + 1e-8;
  for (Transition& tr : batch) tr.advantage = (tr.advantage - mean) / std;
}

ad::Var ppo_loss(Tape& t, const PolicyAgent& agent, const nn::BoundParams& p,
                 const std::vector<Transition>& batch, std::size_t begin, std::size_t end,
                 const PpoConfig& cfg, LossStats* stats) {
  const double inv_n = 1.0 / static_cast<double>(end - begin);
  Var policy_sum = t.constant(Tensor::scalar(0.0));
  Var value_sum = t.constant(Tensor::scalar(0.0));
  Var entropy_sum = t.constant(Tensor::scalar(0.0));

  for (std::size_t i = begin; i < end; ++i) {
    const Transition& tr = batch[i];
    const EvalVars ev = agent.evaluate(t, p, tr.state, tr.action);
    Var ratio = ad::exp_op(t, ad::add_const(t, ev.log_prob, -tr.action.log_prob()));
    const double rho = t.val(ratio)[0];
    const double clipped_rho = std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    Var surrogate;
    if (rho * tr.advantage <= clipped_rho * tr.advantage) {
      surrogate = ad::scale(t, ratio, tr.advantage);
    } else {
      // Clipped branch: enters as a constant, zero gradient through the ratio.
      surrogate = t.constant(Tensor::scalar(clipped_rho * tr.advantage));
    }
    policy_sum = ad::sub(t, policy_sum, surrogate);
    Var verr = ad::square(t, ad::add_const(t, ev.value, -tr.ret));
    value_sum = ad::add(t, value_sum, verr);
    entropy_sum = ad::add(t, entropy_sum, ev.entropy);
  }

  Var policy_mean = ad::scale(t, policy_sum, inv_n);
  Var value_mean = ad::scale(t, value_sum, inv_n);
  Var entropy_mean = ad::scale(t, entropy_sum, inv_n);
  Var total = ad::add(t, policy_mean,
                      ad::sub(t, ad::scale(t, value_mean, cfg.value_coef),
                              ad::scale(t, entropy_mean, cfg.entropy_coef)));
  if (stats != nullptr) {
    stats->policy_loss = t.val(policy_mean)[0];
    stats->value_loss = t.val(value_mean)[0];
    stats->entropy = t.val(entropy_mean)[0];
    stats->total = t.val(total)[0];
  }
  return total;
}

namespace {

struct WorkerState {
  std::unique_ptr<Env> env;
  std::unique_ptr<Rng> policy_rng;
  long episode_counter = 0;
};

struct WorkerBatch {
  std::vector<std::vector<Transition>> episodes;
  long steps = 0;
  double return_sum = 0.0;
  long episode_count = 0;
};

void collect_rollout(const PolicyAgent& agent, WorkerState& ws, std::uint64_t seed, int worker,
                     long rollout_steps, WorkerBatch& out) {
  out.episodes.clear();
  out.steps = 0;
  out.return_sum = 0.0;
  out.episode_count = 0;
  while (out.steps < rollout_steps) {
    Rng env_rng(Rng::mix({seed, 0x9e0aULL, static_cast<std::uint64_t>(worker),
                          static_cast<std::uint64_t>(ws.episode_counter)}));
    ++ws.episode_counter;
    EnvState state = ws.env->reset(env_rng);
    std::vector<Transition> episode;
    double ep_return = 0.0;
    while (true) {
      Transition tr;
      tr.state = state;
      tr.action = agent.act(state, ActionMode::kSample, *ws.policy_rng);
      const StepResult sr = ws.env->step({tr.action.element, tr.action.position});
      tr.reward = sr.reward;
      tr.done = sr.done;
      episode.push_back(std::move(tr));
      ep_return += sr.reward;
      ++out.steps;
      if (sr.done) break;
      state = sr.state;
    }
    out.return_sum += ep_return;
    ++out.episode_count;
    out.episodes.push_back(std::move(episode));
  }
}

}  // namespace

std::vector<EvalEpisode> evaluate_greedy(const PolicyAgent& agent, const TaskSpec& task,
                                         std::shared_ptr<const ElementTable> table,
                                         std::shared_ptr<const EnergyOracle> oracle,
                                         const EnvConfig& env_cfg, std::uint64_t rng_seed) {
  std::vector<EvalEpisode> out;
  const std::vector<Bag> bags = task.eval_bags();
  for (std::size_t b = 0; b < bags.size(); ++b) {
    Env env(task, table, oracle, env_cfg);
    Rng rng(Rng::mix({rng_seed, 0xeba1ULL, static_cast<std::uint64_t>(b)}));
    EnvState state = env.reset_with_bag(bags[b]);
    EvalEpisode ep;
    ep.bag = bags[b];
    while (true) {
      const PolicySample a = agent.act(state, ActionMode::kGreedy, rng);
      const StepResult sr = env.step({a.element, a.position});
      ep.total_reward += sr.reward;
      ep.violation = ep.violation || sr.violation;
      if (sr.done) {
        ep.final_canvas = sr.state.canvas;
        break;
      }
      state = sr.state;
    }
    out.push_back(std::move(ep));
  }
  return out;
}

TrainResult train(PolicyAgent& agent, const TaskSpec& task,
                  std::shared_ptr<const ElementTable> table,
                  std::shared_ptr<const EnergyOracle> oracle, const EnvConfig& env_cfg,
                  const PpoConfig& cfg, std::uint64_t seed, const TrainHooks& hooks) {
  if (cfg.workers < 1) throw std::invalid_argument("train: workers >= 1");
  const long rollout_steps =
      static_cast<long>(cfg.horizon_multiplier) * std::max(1, task.max_bag_size());

  std::vector<WorkerState> workers(static_cast<std::size_t>(cfg.workers));
  for (int w = 0; w < cfg.workers; ++w) {
    workers[static_cast<std::size_t>(w)].env =
        std::make_unique<Env>(task, table, oracle, env_cfg);
    workers[static_cast<std::size_t>(w)].policy_rng = std::make_unique<Rng>(
        Rng::mix({seed, 0x901cULL, static_cast<std::uint64_t>(w)}));
  }

  nn::Adam optimizer(cfg.lr);
  TrainResult result;
  long env_steps = 0;
  int iteration = 0;

  while (env_steps < cfg.total_steps) {
    // Parallel collection into per-worker slots merged in worker order, so
    // thread scheduling cannot change the batch. Worker exceptions are
    // carried back to this thread instead of terminating the process.
    std::vector<WorkerBatch> batches(static_cast<std::size_t>(cfg.workers));
    {
      std::vector<std::thread> threads;
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.workers));
      threads.reserve(static_cast<std::size_t>(cfg.workers));
      for (int w = 0; w < cfg.workers; ++w) {
        threads.emplace_back([&, w] {
          try {
            collect_rollout(agent, workers[static_cast<std::size_t>(w)], seed, w,
                            rollout_steps, batches[static_cast<std::size_t>(w)]);
          } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
          }
        });
      }
      for (std::thread& th : threads) th.join();
      for (const std::exception_ptr& err : errors) {
        if (err) std::rethrow_exception(err);
      }
    }

    std::vector<Transition> batch;
    double return_sum = 0.0;
    long episode_count = 0;
    for (WorkerBatch& wb : batches) {
      env_steps += wb.steps;
      return_sum += wb.return_sum;
      episode_count += wb.episode_count;
      for (std::vector<Transition>& ep : wb.episodes) {
        compute_gae(ep, cfg.gamma, cfg.gae_lambda);
        for (Transition& tr : ep) batch.push_back(std::move(tr));
      }
    }
    normalize_advantages(batch);

    LossStats last_stats;
    double last_grad_norm = 0.0;
    const std::size_t mb =
        cfg.minibatch > 0 ? static_cast<std::size_t>(cfg.minibatch) : batch.size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t begin = 0; begin < batch.size(); begin += mb) {
        const std::size_t end = std::min(batch.size(), begin + mb);
        Tape t;
        const nn::BoundParams p(t, agent.params());
        Var loss = ppo_loss(t, agent, p, batch, begin, end, cfg, &last_stats);
        t.backward(loss);
        std::map<std::string, Tensor> grads;
        for (const auto& [name, tensor] : agent.params().all()) {
          Var v = p[name];
          grads.emplace(name, t.has_grad(v) ? t.grad(v) : Tensor::zeros(tensor.shape));
        }
        last_grad_norm = nn::clip_global_norm(grads, cfg.grad_clip);
        optimizer.step(agent.params(), grads);
      }
    }

    IterationRecord rec;
    rec.iteration = iteration;
    rec.env_steps = env_steps;
    rec.mean_online_return =
        episode_count > 0 ? return_sum / static_cast<double>(episode_count) : 0.0;
    rec.policy_loss = last_stats.policy_loss;
    rec.value_loss = last_stats.value_loss;
    rec.entropy = last_stats.entropy;
    rec.total_loss = last_stats.total;
    rec.grad_norm = last_grad_norm;

    if (cfg.eval_every > 0 && iteration % cfg.eval_every == 0) {
      const std::vector<EvalEpisode> evals = evaluate_greedy(
          agent, task, table, oracle, env_cfg,
          Rng::mix({seed, 0x0ff1ULL, static_cast<std::uint64_t>(iteration)}));
      double sum = 0.0;
      for (const EvalEpisode& ep : evals) sum += ep.total_reward;
      rec.mean_offline_return = evals.empty() ? 0.0 : sum / static_cast<double>(evals.size());
      result.best_offline_return =
          std::max(result.best_offline_return, rec.mean_offline_return);
      if (hooks.on_eval) hooks.on_eval(iteration, evals);
    }

    if (hooks.on_iteration) hooks.on_iteration(rec);
    result.records.push_back(rec);
    ++iteration;
  }
  result.env_steps = env_steps;
  return result;
}

}  // namespace molgym
