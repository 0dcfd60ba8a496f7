#pragma once

#include <memory>
#include <vector>

#include "molgym/env.hpp"

namespace molgym {

struct OptConfig {
  double placement_radius = 1.1;  // Angstrom, sphere around the focal atom
  double neighbor_cutoff = 1.5;   // Angstrom, neighbor definition
  double relax_tol = 1e-5;        // max per-atom force
  int relax_max_iter = 2000;
  int max_retries_per_step = 50;  // rejected placements before giving up
  long eval_budget = 100000000;   // oracle energy+force call budget
};

struct OptResult {
  Canvas canvas;
  double total_reward = 0.0;  // path-independent return of the final canvas
  long oracle_calls = 0;      // energy + force evaluations
  bool completed = false;     // bag emptied within the budget/retry caps
};

/// Atoms whose neighbor count (Euclidean distance < cutoff) is below their
/// element's cap; when none qualify, every atom is returned.
std::vector<int> available_atoms(const Canvas& canvas, const ElementTable& table,
                                 const OptConfig& config);

/// Classical optimization agent: repeatedly pick a random focal atom and
/// element, place the new atom on a sphere around the focal atom, relax only
/// the new atom, accept iff the energy difference is non-positive (else
/// return the element to the bag and retry), then relax the whole canvas.
OptResult run_opt_agent(const TaskSpec& task, std::shared_ptr<const ElementTable> table,
                        std::shared_ptr<const EnergyOracle> oracle, const OptConfig& config,
                        Rng& rng);

}  // namespace molgym
