#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "molgym/oracle.hpp"
#include "molgym/rng.hpp"

namespace molgym {

/// Multiset of elements still to be placed.
struct Bag {
  std::map<int, int> counts;  // element id -> multiplicity (kept > 0)

  int total() const {
    int n = 0;
    for (const auto& [e, c] : counts) n += c;
    return n;
  }
  int count(int element) const {
    auto it = counts.find(element);
    return it == counts.end() ? 0 : it->second;
  }
  void add(int element, int n = 1) {
    if (n == 0) return;
    counts[element] += n;
    if (counts[element] <= 0) counts.erase(element);
  }
  void remove_one(int element) {
    auto it = counts.find(element);
    if (it == counts.end() || it->second <= 0) {
      throw std::invalid_argument("Bag: element not available");
    }
    if (--it->second == 0) counts.erase(it);
  }
  bool empty() const { return counts.empty(); }
  bool operator==(const Bag& o) const { return counts == o.counts; }
};

struct EnvState {
  Canvas canvas;
  Bag bag;
  int step_index = 0;
};

struct EnvAction {
  int element = 0;
  Vec3 position;
};

enum class TaskKind { kSingleBag, kMultiBag, kStochasticBag, kSolvation };

struct TaskSpec {
  TaskKind kind = TaskKind::kSingleBag;
  std::vector<Bag> bags;        // single: one entry; multi: uniform choice
  Bag bag_star;                 // stochastic: base bag defining p_e
  int zeta_min = 0;             // stochastic: bag size range
  int zeta_max = 0;
  Canvas initial_canvas;        // solvation: pre-placed solute
  double solvation_rho = 0.0;   // penalty weight; > 0 only for solvation
  std::vector<int> elements;    // element universe, ordered (policy heads)

  /// Largest bag this task can emit (canvas excluded).
  int max_bag_size() const;
  /// Bags used for offline greedy evaluation.
  std::vector<Bag> eval_bags() const;
};

struct EnvConfig {
  double min_distance = 0.6;    // closer than this to any atom -> violation
  double max_distance = 2.0;    // farther than this from every atom -> violation
  double reward_floor = -0.6;
  bool floor_all_steps = true;  // clip every step at the floor, not only violations
  int horizon_multiplier = 20;  // episode cap = multiplier * initial bag size
  // Optional per-element override of max_distance for the placed atom
  // (hook for elements forming stable two-atom molecules); empty = off.
  std::map<int, double> max_distance_per_element;

  double attach_distance(int element) const {
    auto it = max_distance_per_element.find(element);
    return it == max_distance_per_element.end() ? max_distance : it->second;
  }
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
  bool violation = false;
};

/// Samples a bag of size zeta ~ Uniform{zeta_min..zeta_max} with counts
/// Mult(zeta, p_e), p_e proportional to the multiplicities of bag_star;
/// resamples until the valence-electron sum is even.
Bag sample_bag(const Bag& bag_star, int zeta_min, int zeta_max, const ElementTable& table,
               Rng& rng);

/// Path-independent total reward of a completed structure:
/// sum_i E_atom(e_i) - E(canvas).
double optimal_return(const Canvas& canvas, const EnergyOracle& oracle);

/// r = base - rho * |x|.
double solvation_reward(double base_reward, const Vec3& position, double rho);

/// The sequential molecular-design MDP. One instance per rollout worker;
/// deterministic given the injected RNG stream.
class Env {
 public:
  Env(TaskSpec task, std::shared_ptr<const ElementTable> table,
      std::shared_ptr<const EnergyOracle> oracle, EnvConfig config = {});

  EnvState reset(Rng& rng);
  /// Resets to one specific bag (used by offline evaluation).
  EnvState reset_with_bag(const Bag& bag);

  StepResult step(const EnvAction& action);

  const EnvState& state() const { return state_; }
  const TaskSpec& task() const { return task_; }
  const EnvConfig& config() const { return config_; }
  const ElementTable& table() const { return *table_; }
  int horizon() const { return horizon_; }

 private:
  EnvState begin_episode(Canvas canvas, Bag bag);

  TaskSpec task_;
  std::shared_ptr<const ElementTable> table_;
  std::shared_ptr<const EnergyOracle> oracle_;
  EnvConfig config_;
  EnvState state_;
  double cached_energy_ = 0.0;
  int horizon_ = 0;
  bool episode_done_ = true;
};

/// Parses "H:2,O:1" into a bag using the table's symbols.
Bag parse_bag(const std::string& text, const ElementTable& table);
std::string format_bag(const Bag& bag, const ElementTable& table);

}  // namespace molgym
