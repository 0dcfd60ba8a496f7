#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "fd_helpers.hpp"
#include "molgym/agent.hpp"

using namespace molgym;

namespace {

std::shared_ptr<const ElementTable> table() {
  static auto t = std::make_shared<const ElementTable>(ElementTable::builtin());
  return t;
}

AgentConfig small_config() {
  AgentConfig cfg;
  cfg.l_max = 2;
  cfg.channels_per_element = 2;
  cfg.quadrature_order = 47;
  cfg.hidden = 16;
  cfg.mode_samples = 64;
  cfg.envelope_grid = 512;
  cfg.beta = -10.0;
  return cfg;
}

EnvState make_state(const std::vector<Vec3>& positions, const std::string& bag_text) {
  EnvState s;
  const int x = table()->id("X");
  for (const Vec3& p : positions) s.canvas.atoms.push_back({x, p});
  s.bag = parse_bag(bag_text, *table());
  s.step_index = static_cast<int>(positions.size());
  return s;
}

EnvState transform_state(const EnvState& s, const Mat3& r, const Vec3& shift) {
  EnvState out = s;
  for (Atom& a : out.canvas.atoms) a.position = r * a.position + shift;
  return out;
}

PolicyAgent make_agent(const AgentConfig& cfg = small_config()) {
  return PolicyAgent(cfg, {table()->id("X")}, table(), 9001);
}

}  // namespace

TEST_CASE("act/evaluate round trip: log-probs agree to 1e-12") {
  const PolicyAgent agent = make_agent();
  Rng rng(1);

  // t = 0 (empty canvas).
  {
    const EnvState s = make_state({}, "X:3");
    const PolicySample a = agent.act(s, ActionMode::kSample, rng);
    CHECK(a.focal == -1);
    CHECK(a.position.norm() == 0.0);
    ad::Tape t;
    const nn::BoundParams p(t, agent.params());
    const EvalVars ev = agent.evaluate(t, p, s, a);
    CHECK(std::abs(t.val(ev.log_prob)[0] - a.log_prob()) < 1e-12);
    CHECK(std::abs(t.val(ev.value)[0] - a.value) < 1e-12);
  }
  // Later steps with atoms on the canvas.
  for (int trial = 0; trial < 5; ++trial) {
    const EnvState s = make_state({{0, 0, 0}, {1.0, 0.1, -0.2}, {0.4, 0.9, 0.3}}, "X:2");
    const PolicySample a = agent.act(s, ActionMode::kSample, rng);
    CHECK(std::abs((a.position - s.canvas.atoms[static_cast<std::size_t>(a.focal)].position)
                       .norm() -
                   a.distance) < 1e-12);
    ad::Tape t;
    const nn::BoundParams p(t, agent.params());
    const EvalVars ev = agent.evaluate(t, p, s, a);
    CHECK(std::abs(t.val(ev.log_prob)[0] - a.log_prob()) < 1e-12);
  }
}

TEST_CASE("focal head: single atom is certain; twins are split evenly") {
  const PolicyAgent agent = make_agent();
  Rng rng(2);
  {
    const EnvState s = make_state({{0, 0, 0}}, "X:1");
    const PolicySample a = agent.act(s, ActionMode::kSample, rng);
    CHECK(a.focal == 0);
    CHECK(a.logp_focal == 0.0);
    CHECK(a.logp_element == 0.0);  // single-element bag
  }
  {
    // Two atoms with identical environments: symmetric dimer.
    const EnvState s = make_state({{0, 0, 0}, {1.2, 0, 0}}, "X:1");
    const HeadReport rep = agent.head_report(s, 0, table()->id("X"));
    REQUIRE(rep.focal_probs.size() == 2);
    CHECK(std::abs(rep.focal_probs[0] - 0.5) < 1e-10);
    CHECK(std::abs(rep.focal_probs[1] - 0.5) < 1e-10);
  }
}

TEST_CASE("greedy mode picks the argmax focal/element") {
  const PolicyAgent agent = make_agent();
  Rng rng(3);
  const EnvState s = make_state({{0, 0, 0}, {1.0, 0.2, 0.1}, {-0.5, 0.8, -0.4}}, "X:2");
  const HeadReport rep = agent.head_report(s, 0, table()->id("X"));
  int argmax = 0;
  for (std::size_t i = 1; i < rep.focal_probs.size(); ++i) {
    if (rep.focal_probs[i] > rep.focal_probs[static_cast<std::size_t>(argmax)]) {
      argmax = static_cast<int>(i);
    }
  }
  const PolicySample a = agent.act(s, ActionMode::kGreedy, rng);
  CHECK(a.focal == argmax);
}

TEST_CASE("embedding invariances: translation exact, rotation covariant heads") {
  const PolicyAgent agent = make_agent();
  Rng rng(4);
  const EnvState s = make_state({{0, 0, 0}, {1.1, 0.2, -0.3}, {0.2, 0.9, 0.5}}, "X:2");

  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 r = random_rotation(rng);
    const Vec3 shift{rng.normal(), rng.normal(), rng.normal()};
    const EnvState st = transform_state(s, r, shift);

    const HeadReport rep0 = agent.head_report(s, 1, table()->id("X"));
    const HeadReport rep1 = agent.head_report(st, 1, table()->id("X"));
    for (std::size_t i = 0; i < rep0.focal_probs.size(); ++i) {
      CHECK(std::abs(rep0.focal_probs[i] - rep1.focal_probs[i]) < 1e-10);
    }
    for (std::size_t i = 0; i < rep0.element_probs.size(); ++i) {
      CHECK(std::abs(rep0.element_probs[i] - rep1.element_probs[i]) < 1e-10);
    }
    for (std::size_t i = 0; i < rep0.mixture_means.size(); ++i) {
      CHECK(std::abs(rep0.mixture_means[i] - rep1.mixture_means[i]) < 1e-10);
      CHECK(std::abs(rep0.mixture_weights[i] - rep1.mixture_weights[i]) < 1e-10);
    }

    // Critic invariance.
    CHECK(std::abs(agent.value_plain(s) - agent.value_plain(st)) < 1e-9);

    // Orientation density covariance: p(R u | R s) = p(u | s).
    const SphericalDensity d0 = agent.orientation_density(s, 1, table()->id("X"), 1.1);
    const SphericalDensity d1 = agent.orientation_density(st, 1, table()->id("X"), 1.1);
    for (int i = 0; i < 20; ++i) {
      const Vec3 u = random_unit_vector(rng);
      CHECK(std::abs(d1.density(r * u) - d0.density(u)) < 1e-9);
    }
  }
}

TEST_CASE("critic: permutation invariance and single-atom reduction") {
  const PolicyAgent agent = make_agent();
  const EnvState s = make_state({{0, 0, 0}, {1.0, 0.3, 0.0}, {0.1, 1.1, -0.4}}, "X:1");
  EnvState perm = s;
  std::swap(perm.canvas.atoms[0], perm.canvas.atoms[2]);
  CHECK(std::abs(agent.value_plain(s) - agent.value_plain(perm)) < 1e-12);

  // V(single atom) = MLP_rho(MLP_phi(s_inv)).
  const EnvState one = make_state({{0.3, -0.2, 0.9}}, "X:2");
  CHECK(std::isfinite(agent.value_plain(one)));
}

TEST_CASE("masked elements are never sampled; empty bag rejected") {
  // Universe {X, H}, bag holds only X.
  AgentConfig cfg = small_config();
  PolicyAgent agent(cfg, {table()->id("X"), table()->id("H")}, table(), 77);
  Rng rng(5);
  const EnvState s = make_state({{0, 0, 0}}, "X:3");
  for (int i = 0; i < 300; ++i) {
    const PolicySample a = agent.act(s, ActionMode::kSample, rng);
    CHECK(a.element == table()->id("X"));
  }
  EnvState empty_bag = s;
  empty_bag.bag = Bag{};
  CHECK_THROWS_AS(agent.act(empty_bag, ActionMode::kSample, rng), std::invalid_argument);
}

TEST_CASE("distance head: means land in range, negative draws clip") {
  AgentConfig cfg = small_config();
  PolicyAgent agent = make_agent(cfg);
  // Zeroing the MDN output layer forces tanh(0) = 0: means sit at the
  // centre of [d_min, d_max].
  auto& w1 = agent.params().get("mdn.w1");
  auto& b1 = agent.params().get("mdn.b1");
  for (long i = 0; i < w1.numel(); ++i) w1[i] = 0.0;
  for (long i = 0; i < b1.numel(); ++i) b1[i] = 0.0;
  const EnvState s = make_state({{0, 0, 0}, {1.0, 0, 0}}, "X:1");
  const HeadReport rep = agent.head_report(s, 0, table()->id("X"));
  for (double mu : rep.mixture_means) {
    CHECK(mu == doctest::Approx(0.5 * (cfg.d_min + cfg.d_max)).epsilon(1e-12));
  }

  // Huge sigma makes negative raw draws common; all must clip to 0.001.
  auto& ls = agent.params().get("sigma.log");
  for (long i = 0; i < ls.numel(); ++i) ls[i] = std::log(50.0);
  Rng rng(6);
  bool saw_clip = false;
  for (int i = 0; i < 200; ++i) {
    const PolicySample a = agent.act(s, ActionMode::kSample, rng);
    CHECK(a.distance >= 0.001 - 1e-15);
    saw_clip = saw_clip || (a.distance == 0.001);
  }
  CHECK(saw_clip);
}

TEST_CASE("full-policy gradient check against finite differences") {
  AgentConfig cfg = small_config();
  cfg.quadrature_order = 8;  // keep the FD loop cheap
  PolicyAgent agent = make_agent(cfg);
  Rng rng(7);
  const EnvState s = make_state({{0, 0, 0}, {0.9, 0.4, 0.1}}, "X:2");
  const PolicySample a = agent.act(s, ActionMode::kSample, rng);

  std::vector<std::string> names;
  for (const auto& [name, tensor] : agent.params().all()) names.push_back(name);
  auto flatten = [&]() {
    std::vector<double> out;
    for (const auto& name : names) {
      const Tensor& p = agent.params().get(name);
      out.insert(out.end(), p.data.begin(), p.data.end());
    }
    return out;
  };
  auto scatter = [&](const std::vector<double>& flat) {
    std::size_t off = 0;
    for (const auto& name : names) {
      Tensor& p = agent.params().get(name);
      for (long i = 0; i < p.numel(); ++i) p[i] = flat[off++];
    }
  };
  const std::vector<double> base = flatten();
  auto eval = [&](const std::vector<double>& flat) {
    scatter(flat);
    ad::Tape t(false);
    const nn::BoundParams p(t, agent.params());
    const EvalVars ev = agent.evaluate(t, p, s, a);
    const double out = t.val(ev.log_prob)[0] + 0.5 * t.val(ev.value)[0] +
                       0.25 * t.val(ev.entropy)[0];
    return out;
  };

  ad::Tape t;
  const nn::BoundParams p(t, agent.params());
  const EvalVars ev = agent.evaluate(t, p, s, a);
  ad::Var loss = ad::add(t, ad::add(t, ev.log_prob, ad::scale(t, ev.value, 0.5)),
                         ad::scale(t, ev.entropy, 0.25));
  t.backward(loss);
  std::vector<double> analytic;
  for (const auto& name : names) {
    ad::Var v = p[name];
    if (t.has_grad(v)) {
      const Tensor& g = t.grad(v);
      analytic.insert(analytic.end(), g.data.begin(), g.data.end());
    } else {
      const Tensor& val = t.val(v);
      analytic.insert(analytic.end(), static_cast<std::size_t>(val.numel()), 0.0);
    }
  }
  const std::vector<double> fd = testing::central_fd(eval, base);
  scatter(base);
  CHECK(testing::max_rel_error(analytic, fd, 1e-5) < 1e-4);
}

TEST_CASE("act is deterministic for a fixed rng seed") {
  const PolicyAgent agent = make_agent();
  const EnvState s = make_state({{0, 0, 0}, {1.0, 0.1, 0.0}}, "X:2");
  Rng ra(42), rb(42);
  const PolicySample a = agent.act(s, ActionMode::kSample, ra);
  const PolicySample b = agent.act(s, ActionMode::kSample, rb);
  CHECK(a.focal == b.focal);
  CHECK(a.distance == b.distance);
  CHECK(a.position.x == b.position.x);
  CHECK(a.log_prob() == b.log_prob());
}
