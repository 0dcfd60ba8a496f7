#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "molgym/agent.hpp"
#include "molgym/checkpoint.hpp"
#include "molgym/config.hpp"
#include "molgym/runner.hpp"
#include "molgym/xyz.hpp"

using namespace molgym;

namespace {

std::shared_ptr<const ElementTable> table() {
  static auto t = std::make_shared<const ElementTable>(ElementTable::builtin());
  return t;
}

}  // namespace

TEST_CASE("xyz: round trip and malformed input") {
  Canvas c;
  c.atoms.push_back({table()->id("O"), {0.0, 0.0, 0.0}});
  c.atoms.push_back({table()->id("H"), {0.9572, 0.0, 0.0}});
  c.atoms.push_back({table()->id("H"), {-0.2399872, 0.9266272, 0.0}});
  const std::string text = to_xyz(c, *table(), "energy=-1.5 return=1.5");
  const XyzFile parsed = parse_xyz(text, *table());
  CHECK(parsed.comment == "energy=-1.5 return=1.5");
  REQUIRE(parsed.canvas.size() == 3);
  CHECK(parsed.canvas.atoms[0].element == table()->id("O"));
  CHECK(parsed.canvas.atoms[1].position.x == doctest::Approx(0.9572).epsilon(1e-10));

  CHECK_THROWS(parse_xyz("not a count\ncomment\n", *table()));
  CHECK_THROWS(parse_xyz("2\ncomment\nO 0 0 0\n", *table()));  // truncated

  // File round trip is byte-stable.
  const std::string path = "io_test.xyz";
  write_xyz(path, c, *table(), "c");
  const XyzFile from_disk = read_xyz(path, *table());
  CHECK(to_xyz(from_disk.canvas, *table(), "c") == to_xyz(c, *table(), "c"));
  std::remove(path.c_str());
}

TEST_CASE("config parsing: sections, types, diagnostics") {
  const std::string text = R"(
# top comment
[task]
kind = single-bag
bag = X:3

[ppo]
lr = 3e-4
workers = 10
flag = true
seeds_example = 0,1,2
)";
  const ConfigFile cfg = ConfigFile::parse_text(text, "inline");
  CHECK(cfg.get_string("task", "kind", "") == "single-bag");
  CHECK(cfg.get_double("ppo", "lr", 0.0) == doctest::Approx(3e-4));
  CHECK(cfg.get_int("ppo", "workers", 0) == 10);
  CHECK(cfg.get_bool("ppo", "flag", false));
  CHECK(cfg.get_long_list("ppo", "seeds_example", {}) == std::vector<long>({0, 1, 2}));
  CHECK(cfg.get_int("ppo", "missing", 7) == 7);

  // Unused-key reporting.
  const ConfigFile cfg2 = ConfigFile::parse_text("[a]\nx = 1\ny = 2\n", "inline");
  (void)cfg2.get_int("a", "x", 0);
  CHECK(cfg2.unused_keys() == std::vector<std::string>{"a.y"});

  // Errors carry the key path / line.
  CHECK_THROWS_AS(ConfigFile::parse_text("x = 1\n", "inline"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse_text("[a]\nbroken line\n", "inline"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse_text("[a]\nx = 1\nx = 2\n", "inline"), ConfigError);
  const ConfigFile bad = ConfigFile::parse_text("[a]\nx = abc\n", "inline");
  try {
    bad.get_double("a", "x", 0.0);
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("a.x") != std::string::npos);
  }
}

TEST_CASE("experiment config: defaults and unknown keys") {
  const std::string text = R"(
[run]
mode = train
seeds = 0

[task]
kind = single-bag
bag = X:3

[oracle]
kind = morse

[agent]
beta = -10
quadrature_order = 17

[ppo]
workers = 2
)";
  const ExperimentConfig cfg = experiment_from_config(ConfigFile::parse_text(text, "inline"));
  CHECK(cfg.mode == "train");
  CHECK(cfg.task.kind == TaskKind::kSingleBag);
  CHECK(cfg.task.bags[0].total() == 3);
  CHECK(cfg.task.elements == std::vector<int>{table()->id("X")});
  CHECK(cfg.agent.beta == -10.0);
  CHECK(cfg.agent.l_max == 4);            // paper default
  CHECK(cfg.ppo.clip_eps == 0.2);         // paper default
  CHECK(cfg.ppo.epochs == 7);             // paper default
  CHECK(cfg.ppo.lr == doctest::Approx(3e-4));
  CHECK(cfg.env.reward_floor == -0.6);

  CHECK_THROWS_AS(
      experiment_from_config(ConfigFile::parse_text(
          "[run]\nmode = train\n[task]\nkind = single-bag\nbag = X:1\nbogus = 1\n",
          "inline")),
      ConfigError);
  CHECK_THROWS_AS(experiment_from_config(ConfigFile::parse_text(
                      "[task]\nkind = mystery\n", "inline")),
                  ConfigError);
}

TEST_CASE("checkpoint: exact round trip and shape guards") {
  AgentConfig acfg;
  acfg.l_max = 1;
  acfg.channels_per_element = 2;
  acfg.quadrature_order = 8;
  acfg.hidden = 8;
  PolicyAgent agent(acfg, {table()->id("X")}, table(), 42);
  const std::string path = "io_test_checkpoint.txt";
  save_checkpoint(path, agent.params());

  // Perturb, reload, compare bitwise.
  PolicyAgent other(acfg, {table()->id("X")}, table(), 43);
  load_checkpoint(path, other.params());
  for (const auto& [name, tensor] : agent.params().all()) {
    const Tensor& restored = other.params().get(name);
    REQUIRE(restored.shape == tensor.shape);
    for (long i = 0; i < tensor.numel(); ++i) CHECK(restored[i] == tensor[i]);
  }

  // Mismatched stores are rejected.
  nn::ParamStore wrong;
  wrong.add("mystery", Tensor::zeros({3}));
  CHECK_THROWS(load_checkpoint(path, wrong));
  std::remove(path.c_str());

  CHECK_THROWS(load_checkpoint_from_string("bad header\n", agent.params()));
}
