#include "molgym/opt_agent.hpp"

#include <algorithm>
#include <cmath>

#include "molgym/oracle.hpp"

namespace molgym {

std::vector<int> available_atoms(const Canvas& canvas, const ElementTable& table,
                                 const OptConfig& config) {
  std::vector<int> out;
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    int neighbors = 0;
    for (std::size_t j = 0; j < canvas.size(); ++j) {
      if (i == j) continue;
      if ((canvas.atoms[i].position - canvas.atoms[j].position).norm() <
          config.neighbor_cutoff) {
        ++neighbors;
      }
    }
    if (neighbors < table.info(canvas.atoms[i].element).max_valence) {
      out.push_back(static_cast<int>(i));
    }
  }
  if (out.empty()) {
    for (std::size_t i = 0; i < canvas.size(); ++i) out.push_back(static_cast<int>(i));
  }
  return out;
}

OptResult run_opt_agent(const TaskSpec& task, std::shared_ptr<const ElementTable> table,
                        std::shared_ptr<const EnergyOracle> oracle, const OptConfig& config,
                        Rng& rng) {
  CountingWrapper counted(oracle);

  OptResult result;
  result.canvas = task.initial_canvas;
  Bag bag = task.bags.at(0);
  if (task.kind == TaskKind::kStochasticBag) {
    bag = sample_bag(task.bag_star, task.zeta_min, task.zeta_max, *table, rng);
  }

  double current_energy = 0.0;
  if (!result.canvas.empty()) current_energy = counted.energy(result.canvas);

  auto budget_left = [&]() { return counted.total_calls() < config.eval_budget; };

  while (!bag.empty() && budget_left()) {
    int retries = 0;
    bool placed = false;
    while (!placed && retries <= config.max_retries_per_step && budget_left()) {
      // Pick element first so a rejection can return it to the bag cleanly.
      std::vector<int> elems;
      std::vector<double> weights;
      for (const auto& [e, c] : bag.counts) {
        elems.push_back(e);
        weights.push_back(static_cast<double>(c));
      }
      const int element = elems[static_cast<std::size_t>(rng.categorical(weights))];
      bag.remove_one(element);

      Canvas trial = result.canvas;
      if (trial.empty()) {
        trial.atoms.push_back({element, {0.0, 0.0, 0.0}});
        result.canvas = std::move(trial);
        current_energy = counted.energy(result.canvas);
        placed = true;
        break;
      }

      const std::vector<int> focal_candidates = available_atoms(result.canvas, *table, config);
      const int focal = focal_candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(focal_candidates.size()) - 1))];
      const Vec3 pos = result.canvas.atoms[static_cast<std::size_t>(focal)].position +
                       random_unit_vector(rng) * config.placement_radius;
      trial.atoms.push_back({element, pos});

      // Relax only the newly placed atom.
      const std::vector<int> movable{static_cast<int>(trial.size()) - 1};
      RelaxResult local = relax(trial, counted, movable, config.relax_tol,
                                config.relax_max_iter);
      const double delta =
          local.energy - (current_energy + counted.atom_energy(element));
      if (delta > 0.0) {
        bag.add(element);  // rejected: return the element and retry
        ++retries;
        continue;
      }

      // Accepted: relax the whole structure.
      RelaxResult full =
          relax_all(local.canvas, counted, config.relax_tol, config.relax_max_iter);
      result.canvas = std::move(full.canvas);
      current_energy = full.energy;
      placed = true;
    }
    if (!placed) break;  // retry cap or budget: return the partial structure
  }

  result.completed = bag.empty();
  result.oracle_calls = counted.total_calls();
  result.total_reward = optimal_return(result.canvas, *oracle);
  return result;
}

}  // namespace molgym
