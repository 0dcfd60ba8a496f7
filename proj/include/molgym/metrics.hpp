#pragma once

#include <string>
#include <vector>

#include "molgym/oracle.hpp"

namespace molgym {

struct MolecularGraph {
  std::vector<int> elements;               // node element ids
  std::vector<std::pair<int, int>> edges;  // undirected, i < j, no self loops

  int degree(int node) const {
    int d = 0;
    for (const auto& [a, b] : edges) d += (a == node) + (b == node);
    return d;
  }
};

struct PerceptionConfig {
  double bond_factor = 1.2;  // bond iff r <= factor * (r_cov_i + r_cov_j)
};

/// Distance-based bond perception.
MolecularGraph perceive_graph(const Canvas& canvas, const ElementTable& table,
                              const PerceptionConfig& config = {});

/// Valid iff the graph is connected and every node's degree is one of its
/// element's allowed valences. Empty canvases are invalid.
bool graph_is_valid(const MolecularGraph& graph, const ElementTable& table);

/// Canonical hash via iterated neighborhood refinement (Weisfeiler-Lehman
/// style): isomorphic graphs hash equal regardless of atom order.
std::string canonical_hash(const MolecularGraph& graph, const ElementTable& table);

/// RMSD after optimal rigid superposition (rotation + translation). Atom
/// correspondence is by index; equal counts and element multisets required.
double rmsd(const Canvas& a, const Canvas& b);

/// RMSD between a structure and its fully relaxed counterpart.
double stability_metric(const Canvas& canvas, const EnergyOracle& oracle, double relax_tol,
                        int relax_max_iter);

}  // namespace molgym
