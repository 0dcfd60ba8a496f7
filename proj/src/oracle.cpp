#include "molgym/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace molgym {

namespace {

std::pair<int, int> ordered(int i, int j) { return {std::min(i, j), std::max(i, j)}; }

}  // namespace

ElementTable ElementTable::builtin() {
  ElementTable t;
  // Generic element for surrogate-scale tasks.
  t.add_element({"X", 1, 0.5, {1, 2, 3}, 3});
  t.add_element({"H", 1, 0.31, {1}, 1});
  t.add_element({"C", 4, 0.76, {4}, 4});
  t.add_element({"N", 5, 0.71, {3}, 3});
  t.add_element({"O", 6, 0.66, {2}, 2});
  t.add_element({"F", 7, 0.57, {1}, 1});
  t.add_element({"S", 6, 1.05, {2, 4, 6}, 6});
  t.add_element({"I", 7, 1.39, {1, 3, 5, 7}, 7});
  t.set_pair(t.id("X"), t.id("X"), {1.0, 2.0, 1.0});
  return t;
}

int ElementTable::add_element(ElementInfo info) {
  if (index_.count(info.symbol)) {
    throw std::invalid_argument("ElementTable: duplicate element " + info.symbol);
  }
  const int id = static_cast<int>(elements_.size());
  index_[info.symbol] = id;
  elements_.push_back(std::move(info));
  return id;
}

void ElementTable::set_pair(int i, int j, PairParams p) { pairs_[ordered(i, j)] = p; }

int ElementTable::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw std::out_of_range("ElementTable: unknown element " + symbol);
  return it->second;
}

PairParams ElementTable::pair(int i, int j) const {
  auto it = pairs_.find(ordered(i, j));
  if (it != pairs_.end()) return it->second;
  PairParams p;
  const ElementInfo& a = info(i);
  const ElementInfo& b = info(j);
  p.r0 = a.covalent_radius + b.covalent_radius;
  p.a = 2.0;
  p.de = 0.5 * std::min(a.max_valence, b.max_valence);
  return p;
}

ElementTable ElementTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ElementTable: cannot open " + path);
  ElementTable t;
  std::string line;
  int lineno = 0;

  auto parse_kv = [&](std::istringstream& ss, std::map<std::string, std::string>& kv) {
    std::string tok;
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error("ElementTable: expected key=value at " + path + ":" +
                                 std::to_string(lineno));
      }
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "element") {
      std::string sym;
      ss >> sym;
      if (!sym.empty() && sym.back() == ':') sym.pop_back();
      std::map<std::string, std::string> kv;
      parse_kv(ss, kv);
      ElementInfo e;
      e.symbol = sym;
      if (kv.count("valence")) e.valence_electrons = std::stoi(kv["valence"]);
      if (kv.count("radius")) e.covalent_radius = std::stod(kv["radius"]);
      if (kv.count("maxval")) e.max_valence = std::stoi(kv["maxval"]);
      if (kv.count("allowed")) {
        std::istringstream as(kv["allowed"]);
        std::string item;
        while (std::getline(as, item, ',')) e.allowed_valences.push_back(std::stoi(item));
      } else {
        e.allowed_valences = {e.max_valence};
      }
      t.add_element(std::move(e));
    } else if (kind == "pair") {
      std::string s1, s2;
      ss >> s1 >> s2;
      if (!s2.empty() && s2.back() == ':') s2.pop_back();
      std::map<std::string, std::string> kv;
      parse_kv(ss, kv);
      PairParams p;
      if (kv.count("de")) p.de = std::stod(kv["de"]);
      if (kv.count("a")) p.a = std::stod(kv["a"]);
      if (kv.count("r0")) p.r0 = std::stod(kv["r0"]);
      t.set_pair(t.id(s1), t.id(s2), p);
    } else {
      throw std::runtime_error("ElementTable: unknown record '" + kind + "' at " + path + ":" +
                               std::to_string(lineno));
    }
  }
  if (t.size() == 0) throw std::runtime_error("ElementTable: no elements in " + path);
  return t;
}

double MorseOracle::energy(const Canvas& canvas) const {
  double e = 0.0;
  const auto& atoms = canvas.atoms;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      const PairParams p = table_->pair(atoms[i].element, atoms[j].element);
      const double r = (atoms[i].position - atoms[j].position).norm();
      const double q = 1.0 - std::exp(-p.a * (r - p.r0));
      e += p.de * (q * q - 1.0);
    }
  }
  return e;
}

std::vector<Vec3> MorseOracle::forces(const Canvas& canvas) const {
  const auto& atoms = canvas.atoms;
  std::vector<Vec3> f(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      const PairParams p = table_->pair(atoms[i].element, atoms[j].element);
      const Vec3 dr = atoms[i].position - atoms[j].position;
      const double r = dr.norm();
      if (r <= 0.0) throw std::invalid_argument("MorseOracle::forces: coincident atoms");
      const double ex = std::exp(-p.a * (r - p.r0));
      // dE/dr = 2 De a (1 - ex) ex
      const double dedr = 2.0 * p.de * p.a * (1.0 - ex) * ex;
      const Vec3 pair_force = dr * (-dedr / r);  // force on atom i
      f[i] += pair_force;
      f[j] -= pair_force;
    }
  }
  return f;
}

double CountingOracle::energy(const Canvas& canvas) const {
  int pairs = 0;
  const auto& atoms = canvas.atoms;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      const double r = (atoms[i].position - atoms[j].position).norm();
      if (r >= 0.8 && r <= 1.6) ++pairs;
    }
  }
  return -static_cast<double>(pairs);
}

RelaxResult relax(const Canvas& canvas, const EnergyOracle& oracle,
                  const std::vector<int>& movable, double tol, int max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("relax: tol must be positive");
  RelaxResult res;
  res.canvas = canvas;
  res.energy = oracle.energy(res.canvas);

  double step = 0.1;
  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter;
    const std::vector<Vec3> forces = oracle.forces(res.canvas);
    double max_f = 0.0, sq = 0.0;
    for (int idx : movable) {
      const double n = forces[static_cast<std::size_t>(idx)].norm();
      max_f = std::max(max_f, n);
      sq += n * n;
    }
    if (max_f < tol) {
      res.converged = true;
      return res;
    }

    // Backtracking line search along the force (steepest descent) direction.
    bool accepted = false;
    double trial_step = step;
    while (trial_step > 1e-14) {
      Canvas trial = res.canvas;
      for (int idx : movable) {
        trial.atoms[static_cast<std::size_t>(idx)].position +=
            forces[static_cast<std::size_t>(idx)] * trial_step;
      }
      const double e = oracle.energy(trial);
      if (e <= res.energy - 1e-4 * trial_step * sq) {
        res.canvas = std::move(trial);
        res.energy = e;
        accepted = true;
        step = trial_step * 1.5;  // cautiously re-grow
        break;
      }
      trial_step *= 0.5;
    }
    if (!accepted) {
      res.converged = false;  // step underflow; best-so-far returned
      return res;
    }
  }
  res.converged = false;
  return res;
}

RelaxResult relax_all(const Canvas& canvas, const EnergyOracle& oracle, double tol,
                      int max_iter) {
  std::vector<int> movable(canvas.size());
  for (std::size_t i = 0; i < movable.size(); ++i) movable[i] = static_cast<int>(i);
  return relax(canvas, oracle, movable, tol, max_iter);
}

}  // namespace molgym
