#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "molgym/ppo.hpp"

using namespace molgym;

namespace {

std::shared_ptr<const ElementTable> table() {
  static auto t = std::make_shared<const ElementTable>(ElementTable::builtin());
  return t;
}

TaskSpec x_task(const std::string& bag) {
  TaskSpec task;
  task.kind = TaskKind::kSingleBag;
  task.bags = {parse_bag(bag, *table())};
  task.elements = {table()->id("X")};
  return task;
}

AgentConfig tiny_agent_config() {
  AgentConfig cfg;
  cfg.l_max = 1;
  cfg.channels_per_element = 2;
  cfg.quadrature_order = 8;
  cfg.hidden = 8;
  cfg.mode_samples = 16;
  cfg.envelope_grid = 128;
  cfg.beta = -10.0;
  cfg.cg_rounds = 1;
  return cfg;
}

std::vector<Transition> fake_episode(const std::vector<double>& rewards,
                                     const std::vector<double>& values) {
  std::vector<Transition> ep(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    ep[i].reward = rewards[i];
    ep[i].action.value = values[i];
    ep[i].done = (i + 1 == rewards.size());
  }
  return ep;
}

}  // namespace

TEST_CASE("compute_gae: terminal step, TD(0) reduction, geometric closed form") {
  // Single terminal step, r = 1, V = 0: advantage 1.
  {
    std::vector<Transition> ep = fake_episode({1.0}, {0.0});
    compute_gae(ep, 0.99, 0.95);
    CHECK(ep[0].advantage == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ep[0].ret == doctest::Approx(1.0).epsilon(1e-15));
  }
  // lambda = 0: advantage = r + gamma V(s') - V(s) at every step.
  {
    std::vector<Transition> ep = fake_episode({0.5, -0.2, 1.5}, {0.3, -0.1, 0.8});
    const double gamma = 0.9;
    compute_gae(ep, gamma, 0.0);
    CHECK(ep[0].advantage ==
          doctest::Approx(0.5 + gamma * (-0.1) - 0.3).epsilon(1e-14));
    CHECK(ep[1].advantage == doctest::Approx(-0.2 + gamma * 0.8 - (-0.1)).epsilon(1e-14));
    CHECK(ep[2].advantage == doctest::Approx(1.5 - 0.8).epsilon(1e-14));
  }
  // Constant reward and value: closed-form geometric sums.
  {
    const double r = 0.7, v = 0.2, gamma = 0.95, lambda = 0.9;
    const int n = 6;
    std::vector<Transition> ep =
        fake_episode(std::vector<double>(n, r), std::vector<double>(n, v));
    compute_gae(ep, gamma, lambda);
    // delta_t = r + gamma v - v for t < n-1; delta_{n-1} = r - v.
    const double d = r + gamma * v - v;
    const double dT = r - v;
    for (int t = 0; t < n; ++t) {
      double expect = 0.0;
      for (int j = t; j < n; ++j) {
        const double delta = (j == n - 1) ? dT : d;
        expect += std::pow(gamma * lambda, j - t) * delta;
      }
      CHECK(ep[static_cast<std::size_t>(t)].advantage ==
            doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("normalize_advantages: zero mean, unit variance") {
  std::vector<Transition> batch = fake_episode({1.0, 3.0, -2.0, 0.5}, {0, 0, 0, 0});
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i].advantage = 2.0 * i - 1.7;
  normalize_advantages(batch);
  double mean = 0.0, var = 0.0;
  for (const Transition& tr : batch) mean += tr.advantage;
  mean /= static_cast<double>(batch.size());
  for (const Transition& tr : batch) var += (tr.advantage - mean) * (tr.advantage - mean);
  var /= static_cast<double>(batch.size());
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::abs(var - 1.0) < 1e-6);
}

TEST_CASE("ppo_loss: ratio 1 at collection parameters; entropy toggle") {
  PolicyAgent agent(tiny_agent_config(), {table()->id("X")}, table(), 11);
  auto oracle = std::make_shared<MorseOracle>(table());
  Env env(x_task("X:3"), table(), oracle);
  Rng rng(12);

  // Collect one short episode.
  std::vector<Transition> batch;
  EnvState state = env.reset(rng);
  while (true) {
    Transition tr;
    tr.state = state;
    tr.action = agent.act(state, ActionMode::kSample, rng);
    const StepResult sr = env.step({tr.action.element, tr.action.position});
    tr.reward = sr.reward;
    tr.done = sr.done;
    batch.push_back(tr);
    if (sr.done) break;
    state = sr.state;
  }
  compute_gae(batch, 0.99, 0.95);
  normalize_advantages(batch);

  PpoConfig cfg;
  // Ratio at the collection parameters is exp(0) = 1 within 1e-12, so the
  // surrogate reduces to -mean(A).
  {
    ad::Tape t;
    const nn::BoundParams p(t, agent.params());
    for (const Transition& tr : batch) {
      const EvalVars ev = agent.evaluate(t, p, tr.state, tr.action);
      CHECK(std::abs(t.val(ev.log_prob)[0] - tr.action.log_prob()) < 1e-12);
    }
    LossStats stats;
    ppo_loss(t, agent, p, batch, 0, batch.size(), cfg, &stats);
    double mean_adv = 0.0;
    for (const Transition& tr : batch) mean_adv += tr.advantage;
    mean_adv /= static_cast<double>(batch.size());
    CHECK(stats.policy_loss == doctest::Approx(-mean_adv).epsilon(1e-9));
  }
  // c2 = 0 removes the entropy term from the total.
  {
    ad::Tape t;
    const nn::BoundParams p(t, agent.params());
    LossStats with_entropy;
    ppo_loss(t, agent, p, batch, 0, batch.size(), cfg, &with_entropy);
    PpoConfig no_ent = cfg;
    no_ent.entropy_coef = 0.0;
    ad::Tape t2;
    const nn::BoundParams p2(t2, agent.params());
    LossStats without;
    ppo_loss(t2, agent, p2, batch, 0, batch.size(), no_ent, &without);
    CHECK(with_entropy.total ==
          doctest::Approx(without.total - cfg.entropy_coef * with_entropy.entropy)
              .epsilon(1e-12));
  }
}

TEST_CASE("clipped branch carries zero gradient through the ratio") {
  PolicyAgent agent(tiny_agent_config(), {table()->id("X")}, table(), 13);
  auto oracle = std::make_shared<MorseOracle>(table());
  Env env(x_task("X:2"), table(), oracle);
  Rng rng(14);
  std::vector<Transition> batch;
  EnvState state = env.reset(rng);
  while (true) {
    Transition tr;
    tr.state = state;
    tr.action = agent.act(state, ActionMode::kSample, rng);
    const StepResult sr = env.step({tr.action.element, tr.action.position});
    tr.reward = sr.reward;
    tr.done = sr.done;
    batch.push_back(tr);
    if (sr.done) break;
    state = sr.state;
  }
  // Forge stored log-probs so the current ratio is ~e^0.5 ~ 1.65 > 1 + eps
  // with positive advantages: every transition lands on the clipped branch.
  for (Transition& tr : batch) {
    tr.action.logp_element -= 0.5;
    tr.advantage = 1.0;
    tr.ret = tr.action.value;  // keep the value loss at zero error
  }
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  ad::Tape t;
  const nn::BoundParams p(t, agent.params());
  LossStats stats;
  ad::Var loss = ppo_loss(t, agent, p, batch, 0, batch.size(), cfg, &stats);
  t.backward(loss);
  double grad_norm_sq = 0.0;
  for (const auto& [name, tensor] : agent.params().all()) {
    (void)tensor;
    ad::Var v = p[name];
    if (!t.has_grad(v)) continue;
    const Tensor& g = t.grad(v);
    for (long i = 0; i < g.numel(); ++i) grad_norm_sq += g[i] * g[i];
  }
  CHECK(grad_norm_sq == 0.0);
  CHECK(stats.policy_loss == doctest::Approx(-1.2).epsilon(1e-12));  // clip at 1 + 0.2
}

TEST_CASE("train: zero epochs leave parameters bitwise unchanged") {
  PolicyAgent agent(tiny_agent_config(), {table()->id("X")}, table(), 15);
  const std::map<std::string, Tensor> before = agent.params().all();
  PpoConfig cfg;
  cfg.epochs = 0;
  cfg.workers = 2;
  cfg.total_steps = 12;
  cfg.eval_every = 0;
  auto oracle = std::make_shared<MorseOracle>(table());
  train(agent, x_task("X:2"), table(), oracle, EnvConfig{}, cfg, 99);
  for (const auto& [name, tensor] : agent.params().all()) {
    const Tensor& orig = before.at(name);
    for (long i = 0; i < tensor.numel(); ++i) CHECK(tensor[i] == orig[i]);
  }
}

TEST_CASE("train: identical seeds give bitwise-identical metric records") {
  auto run = [&]() {
    PolicyAgent agent(tiny_agent_config(), {table()->id("X")}, table(), 15);
    PpoConfig cfg;
    cfg.workers = 3;
    cfg.total_steps = 40;
    cfg.epochs = 2;
    auto oracle = std::make_shared<MorseOracle>(table());
    return train(agent, x_task("X:2"), table(), oracle, EnvConfig{}, cfg, 1234);
  };
  const TrainResult a = run();
  const TrainResult b = run();
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].env_steps == b.records[i].env_steps);
    CHECK(a.records[i].mean_online_return == b.records[i].mean_online_return);
    CHECK(a.records[i].mean_offline_return == b.records[i].mean_offline_return);
    CHECK(a.records[i].total_loss == b.records[i].total_loss);
    CHECK(a.records[i].grad_norm == b.records[i].grad_norm);
  }
}
