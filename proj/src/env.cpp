#include "molgym/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace molgym {

int TaskSpec::max_bag_size() const {
  int mx = 0;
  for (const Bag& b : bags) mx = std::max(mx, b.total());
  if (kind == TaskKind::kStochasticBag) mx = std::max(mx, zeta_max);
  return mx;
}

std::vector<Bag> TaskSpec::eval_bags() const {
  switch (kind) {
    case TaskKind::kSingleBag:
    case TaskKind::kMultiBag:
    case TaskKind::kSolvation:
      return bags;
    case TaskKind::kStochasticBag:
      return {bag_star};
  }
  return bags;
}

Bag sample_bag(const Bag& bag_star, int zeta_min, int zeta_max, const ElementTable& table,
               Rng& rng) {
  if (bag_star.empty()) throw std::invalid_argument("sample_bag: empty base bag");
  if (zeta_min > zeta_max || zeta_min < 1) {
    throw std::invalid_argument("sample_bag: invalid size range");
  }
  std::vector<int> elements;
  std::vector<double> probs;
  for (const auto& [e, c] : bag_star.counts) {
    elements.push_back(e);
    probs.push_back(static_cast<double>(c));
  }

  // Rejection loop: keep only bags with an even valence-electron sum. The
  // attempt cap guards against impossible configurations (e.g. a single odd
  // size with all-odd valences).
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const int zeta = rng.uniform_int(zeta_min, zeta_max);
    Bag bag;
    for (int i = 0; i < zeta; ++i) {
      bag.add(elements[static_cast<std::size_t>(rng.categorical(probs))]);
    }
    long electrons = 0;
    for (const auto& [e, c] : bag.counts) {
      electrons += static_cast<long>(table.info(e).valence_electrons) * c;
    }
    if (electrons % 2 == 0) return bag;
  }
  throw std::runtime_error("sample_bag: no even-electron bag found (check task config)");
}

double optimal_return(const Canvas& canvas, const EnergyOracle& oracle) {
  if (canvas.empty()) return 0.0;
  double refs = 0.0;
  for (const Atom& a : canvas.atoms) refs += oracle.atom_energy(a.element);
  return refs - oracle.energy(canvas);
}

double solvation_reward(double base_reward, const Vec3& position, double rho) {
  if (rho < 0.0) throw std::invalid_argument("solvation_reward: rho must be >= 0");
  return base_reward - rho * position.norm();
}

Env::Env(TaskSpec task, std::shared_ptr<const ElementTable> table,
         std::shared_ptr<const EnergyOracle> oracle, EnvConfig config)
    : task_(std::move(task)), table_(std::move(table)), oracle_(std::move(oracle)),
      config_(config) {
  if (task_.elements.empty()) throw std::invalid_argument("Env: task element list empty");
}

EnvState Env::begin_episode(Canvas canvas, Bag bag) {
  state_.canvas = std::move(canvas);
  state_.bag = std::move(bag);
  state_.step_index = 0;
  horizon_ = config_.horizon_multiplier * std::max(1, state_.bag.total());
  cached_energy_ = state_.canvas.empty() ? 0.0 : oracle_->energy(state_.canvas);
  episode_done_ = false;
  return state_;
}

EnvState Env::reset(Rng& rng) {
  switch (task_.kind) {
    case TaskKind::kSingleBag:
      return begin_episode(task_.initial_canvas, task_.bags.at(0));
    case TaskKind::kMultiBag: {
      const int i = rng.uniform_int(0, static_cast<int>(task_.bags.size()) - 1);
      return begin_episode(task_.initial_canvas, task_.bags.at(static_cast<std::size_t>(i)));
    }
    case TaskKind::kStochasticBag:
      return begin_episode(task_.initial_canvas,
                           sample_bag(task_.bag_star, task_.zeta_min, task_.zeta_max,
                                      *table_, rng));
    case TaskKind::kSolvation:
      return begin_episode(task_.initial_canvas, task_.bags.at(0));
  }
  throw std::logic_error("Env::reset: unknown task kind");
}

EnvState Env::reset_with_bag(const Bag& bag) {
  return begin_episode(task_.initial_canvas, bag);
}

StepResult Env::step(const EnvAction& action) {
  if (episode_done_) throw std::logic_error("Env::step: episode already finished");
  if (state_.bag.count(action.element) <= 0) {
    throw std::invalid_argument("Env::step: element not in bag");
  }

  StepResult res;
  const bool first_atom = state_.canvas.empty();
  Vec3 position = action.position;
  if (first_atom) position = Vec3{0.0, 0.0, 0.0};  // first action builds at the origin

  bool violation = false;
  if (!first_atom) {
    double dmin = std::numeric_limits<double>::infinity();
    for (const Atom& a : state_.canvas.atoms) {
      dmin = std::min(dmin, (a.position - position).norm());
    }
    // Boundary semantics: strictly closer than min_distance, or strictly
    // farther than the attach distance from every atom, is a violation.
    if (dmin < config_.min_distance || dmin > config_.attach_distance(action.element)) {
      violation = true;
    }
  }

  state_.canvas.atoms.push_back({action.element, position});
  state_.bag.remove_one(action.element);
  state_.step_index += 1;

  double reward;
  if (violation) {
    reward = config_.reward_floor;
    cached_energy_ = oracle_->energy(state_.canvas);
  } else {
    const double e_next = oracle_->energy(state_.canvas);
    const double delta =
        e_next - cached_energy_ - oracle_->atom_energy(action.element);
    reward = -delta;
    if (config_.floor_all_steps) reward = std::max(reward, config_.reward_floor);
    cached_energy_ = e_next;
  }
  if (task_.kind == TaskKind::kSolvation) {
    reward = solvation_reward(reward, position, task_.solvation_rho);
  }

  res.reward = reward;
  res.violation = violation;
  res.done = violation || state_.bag.empty() || state_.step_index >= horizon_;
  res.state = state_;
  episode_done_ = res.done;
  return res;
}

Bag parse_bag(const std::string& text, const ElementTable& table) {
  Bag bag;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    std::string sym = (colon == std::string::npos) ? item : item.substr(0, colon);
    // Trim whitespace.
    const auto strip = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    };
    strip(sym);
    int count = 1;
    if (colon != std::string::npos) {
      std::string num = item.substr(colon + 1);
      strip(num);
      count = std::stoi(num);
    }
    if (count < 0) throw std::invalid_argument("parse_bag: negative count");
    bag.add(table.id(sym), count);
  }
  return bag;
}

std::string format_bag(const Bag& bag, const ElementTable& table) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [e, c] : bag.counts) {
    if (!first) out << ",";
    out << table.info(e).symbol << ":" << c;
    first = false;
  }
  return out.str();
}

}  // namespace molgym
