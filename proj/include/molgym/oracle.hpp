#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "molgym/vec3.hpp"

namespace molgym {

struct Atom {
  int element = 0;  // index into the ElementTable
  Vec3 position;    // Angstrom
};

/// Ordered list of placed atoms.
struct Canvas {
  std::vector<Atom> atoms;

  std::size_t size() const { return atoms.size(); }
  bool empty() const { return atoms.empty(); }
};

struct ElementInfo {
  std::string symbol;
  int valence_electrons = 1;
  double covalent_radius = 0.5;       // Angstrom
  std::vector<int> allowed_valences;  // for graph validity
  int max_valence = 1;                // neighbor cap used by the opt agent
};

struct PairParams {
  double de = 1.0;  // well depth
  double a = 2.0;   // width, 1/Angstrom
  double r0 = 1.0;  // equilibrium distance, Angstrom
};

/// Element properties plus symmetric per-pair Morse parameters. Pairs
/// without an explicit entry fall back to r0 = sum of covalent radii,
/// a = 2.0 and a depth scaled by the smaller maximum valence (a crude
/// bond-order stand-in; these numbers are configuration, not ground truth).
class ElementTable {
 public:
  static ElementTable builtin();
  static ElementTable load(const std::string& path);

  int add_element(ElementInfo info);
  void set_pair(int i, int j, PairParams p);

  bool has(const std::string& symbol) const { return index_.count(symbol) != 0; }
  int id(const std::string& symbol) const;
  int size() const { return static_cast<int>(elements_.size()); }
  const ElementInfo& info(int id) const { return elements_[static_cast<std::size_t>(id)]; }
  PairParams pair(int i, int j) const;

 private:
  std::vector<ElementInfo> elements_;
  std::map<std::string, int> index_;
  std::map<std::pair<int, int>, PairParams> pairs_;
};

/// Energy/force backend. Forces are exact negative gradients of the energy;
/// atom_energy is the isolated-atom reference used by the reward.
class EnergyOracle {
 public:
  virtual ~EnergyOracle() = default;
  virtual double energy(const Canvas& canvas) const = 0;
  virtual std::vector<Vec3> forces(const Canvas& canvas) const = 0;
  virtual double atom_energy(int element) const = 0;
  virtual std::string name() const = 0;
};

/// Pairwise Morse potential E = sum_{i<j} De [(1 - exp(-a (r - r0)))^2 - 1]
/// with analytic forces. Isolated-atom references are zero.
class MorseOracle : public EnergyOracle {
 public:
  explicit MorseOracle(std::shared_ptr<const ElementTable> table) : table_(std::move(table)) {}

  double energy(const Canvas& canvas) const override;
  std::vector<Vec3> forces(const Canvas& canvas) const override;
  double atom_energy(int) const override { return 0.0; }
  std::string name() const override { return "morse"; }

 private:
  std::shared_ptr<const ElementTable> table_;
};

/// Hand-checkable test oracle: E = -(number of pairs with r in
/// [0.8, 1.6] Angstrom); forces are defined as zero.
class CountingOracle : public EnergyOracle {
 public:
  double energy(const Canvas& canvas) const override;
  std::vector<Vec3> forces(const Canvas& canvas) const override {
    return std::vector<Vec3>(canvas.size());
  }
  double atom_energy(int) const override { return 0.0; }
  std::string name() const override { return "counting"; }
};

/// Wraps an oracle and counts every energy/forces call (shared across
/// copies so the environment and relaxer bill the same budget).
class CountingWrapper : public EnergyOracle {
 public:
  explicit CountingWrapper(std::shared_ptr<const EnergyOracle> inner)
      : inner_(std::move(inner)), counts_(std::make_shared<Counts>()) {}

  double energy(const Canvas& canvas) const override {
    ++counts_->energy;
    return inner_->energy(canvas);
  }
  std::vector<Vec3> forces(const Canvas& canvas) const override {
    ++counts_->forces;
    return inner_->forces(canvas);
  }
  double atom_energy(int e) const override { return inner_->atom_energy(e); }
  std::string name() const override { return inner_->name(); }

  long energy_calls() const { return counts_->energy; }
  long force_calls() const { return counts_->forces; }
  long total_calls() const { return counts_->energy + counts_->forces; }

 private:
  struct Counts {
    long energy = 0;
    long forces = 0;
  };
  std::shared_ptr<const EnergyOracle> inner_;
  std::shared_ptr<Counts> counts_;
};

struct RelaxResult {
  Canvas canvas;
  double energy = 0.0;
  int iterations = 0;
  bool converged = false;  // false: hit max_iter or the step underflowed
};

/// Gradient descent with backtracking line search on the selected atoms.
/// Stops when the maximum per-atom force norm drops below `tol`. Energy is
/// non-increasing across accepted steps; on step underflow the best
/// configuration found so far is returned with converged = false.
RelaxResult relax(const Canvas& canvas, const EnergyOracle& oracle,
                  const std::vector<int>& movable, double tol, int max_iter);

/// Relaxes every atom.
RelaxResult relax_all(const Canvas& canvas, const EnergyOracle& oracle, double tol,
                      int max_iter);

}  // namespace molgym
