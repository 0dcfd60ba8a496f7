#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "molgym/metrics.hpp"
#include "molgym/rng.hpp"

using namespace molgym;

namespace {

std::shared_ptr<const ElementTable> table() {
  static auto t = std::make_shared<const ElementTable>(ElementTable::builtin());
  return t;
}

Canvas x_canvas(const std::vector<Vec3>& positions) {
  Canvas c;
  for (const Vec3& p : positions) c.atoms.push_back({table()->id("X"), p});
  return c;
}

// Independent oracle for small-structure RMSD: coarse rotation grid search
// with local refinement around the best cell.
double brute_force_rmsd(const Canvas& a, const Canvas& b) {
  const int n = static_cast<int>(a.size());
  Vec3 ca{0, 0, 0}, cb{0, 0, 0};
  for (int i = 0; i < n; ++i) {
    ca += a.atoms[static_cast<std::size_t>(i)].position;
    cb += b.atoms[static_cast<std::size_t>(i)].position;
  }
  ca = ca * (1.0 / n);
  cb = cb * (1.0 / n);
  auto msd_for = [&](const Mat3& r) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec3 p = r * (a.atoms[static_cast<std::size_t>(i)].position - ca);
      const Vec3 q = b.atoms[static_cast<std::size_t>(i)].position - cb;
      s += (p - q).norm2();
    }
    return s / n;
  };
  double best = 1e300;
  Rng rng(4242);
  for (int trial = 0; trial < 20000; ++trial) {
    best = std::min(best, msd_for(random_rotation(rng)));
  }
  return std::sqrt(best);
}

}  // namespace

TEST_CASE("perceive_graph: bonds, validity, fragments") {
  // X dimer at r0 = 1.0 with radii 0.5: bonded, degree 1 allowed for X.
  {
    const Canvas c = x_canvas({{0, 0, 0}, {1.0, 0, 0}});
    const MolecularGraph g = perceive_graph(c, *table());
    CHECK(g.edges.size() == 1);
    CHECK(graph_is_valid(g, *table()));
  }
  // Two far-apart fragments: disconnected, invalid.
  {
    const Canvas c = x_canvas({{0, 0, 0}, {1.0, 0, 0}, {8.0, 0, 0}, {9.0, 0, 0}});
    const MolecularGraph g = perceive_graph(c, *table());
    CHECK(g.edges.size() == 2);
    CHECK_FALSE(graph_is_valid(g, *table()));
  }
  // Water geometry: O-H 0.96 A, H-O-H 104.5 degrees.
  {
    Canvas w;
    const double angle = 104.5 * M_PI / 180.0;
    w.atoms.push_back({table()->id("O"), {0, 0, 0}});
    w.atoms.push_back({table()->id("H"), {0.96, 0, 0}});
    w.atoms.push_back({table()->id("H"), {0.96 * std::cos(angle), 0.96 * std::sin(angle), 0}});
    const MolecularGraph g = perceive_graph(w, *table());
    // O-H bond threshold: 1.2 * (0.66 + 0.31) = 1.164 > 0.96; H..H distance
    // ~1.52 exceeds 1.2 * 0.62.
    CHECK(g.edges.size() == 2);
    CHECK(g.degree(0) == 2);
    CHECK(g.degree(1) == 1);
    CHECK(graph_is_valid(g, *table()));
  }
  // Empty canvas is invalid.
  CHECK_FALSE(graph_is_valid(perceive_graph(Canvas{}, *table()), *table()));
}

TEST_CASE("canonical_hash: permutation invariance on random graphs") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(2, 8);
    MolecularGraph g;
    for (int i = 0; i < n; ++i) {
      g.elements.push_back(rng.uniform() < 0.5 ? table()->id("X") : table()->id("H"));
    }
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (rng.uniform() < 0.4) g.edges.emplace_back(i, j);
      }

    // Random relabeling.
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
      std::swap(perm[static_cast<std::size_t>(i)],
                perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    }
    MolecularGraph h;
    h.elements.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      h.elements[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
          g.elements[static_cast<std::size_t>(i)];
    }
    for (const auto& [a, b] : g.edges) {
      h.edges.emplace_back(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
    }
    CHECK(canonical_hash(g, *table()) == canonical_hash(h, *table()));
  }
}

TEST_CASE("canonical_hash: distinguishes different connectivities") {
  // X2 vs X3 chain.
  MolecularGraph x2;
  x2.elements = {table()->id("X"), table()->id("X")};
  x2.edges = {{0, 1}};
  MolecularGraph x3;
  x3.elements = {table()->id("X"), table()->id("X"), table()->id("X")};
  x3.edges = {{0, 1}, {1, 2}};
  CHECK(canonical_hash(x2, *table()) != canonical_hash(x3, *table()));

  // Ethanol-like (C-C-O chain with hydrogens) vs ether-like (C-O-C) C2H6O.
  const int C = table()->id("C"), O = table()->id("O"), H = table()->id("H");
  MolecularGraph ethanol;
  ethanol.elements = {C, C, O, H, H, H, H, H, H};
  ethanol.edges = {{0, 1}, {1, 2}, {0, 3}, {0, 4}, {0, 5}, {1, 6}, {1, 7}, {2, 8}};
  MolecularGraph ether;
  ether.elements = {C, O, C, H, H, H, H, H, H};
  ether.edges = {{0, 1}, {1, 2}, {0, 3}, {0, 4}, {0, 5}, {2, 6}, {2, 7}, {2, 8}};
  CHECK(canonical_hash(ethanol, *table()) != canonical_hash(ether, *table()));
}

TEST_CASE("rmsd: rigid motions vanish; displacement matches the grid oracle") {
  Rng rng(2);
  const Canvas a = x_canvas({{0, 0, 0}, {1.1, 0.2, -0.3}, {0.3, 0.9, 0.4}, {-0.5, 0.4, 0.8}});
  CHECK(rmsd(a, a) == doctest::Approx(0.0).epsilon(1e-14));

  for (int trial = 0; trial < 10; ++trial) {
    const Mat3 r = random_rotation(rng);
    const Vec3 shift{rng.normal(), rng.normal(), rng.normal()};
    Canvas b = a;
    for (Atom& at : b.atoms) at.position = r * at.position + shift;
    CHECK(rmsd(a, b) < 1e-8);
  }

  // One displaced atom: compare against the rotation-grid-search oracle.
  Canvas c = a;
  c.atoms[2].position += Vec3{0.3, -0.1, 0.2};
  const double fast = rmsd(a, c);
  const double brute = brute_force_rmsd(a, c);
  CHECK(fast <= brute + 1e-6);          // optimal superposition beats any sampled rotation
  CHECK(std::abs(fast - brute) < 0.02); // and the grid search comes close

  // Mismatched inputs are rejected.
  Canvas short_canvas = x_canvas({{0, 0, 0}});
  CHECK_THROWS_AS(rmsd(a, short_canvas), std::invalid_argument);
  Canvas wrong_elements = a;
  wrong_elements.atoms[0].element = table()->id("H");
  CHECK_THROWS_AS(rmsd(a, wrong_elements), std::invalid_argument);
}

TEST_CASE("rmsd behaves as a pseudo-metric on random triples") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto random_canvas = [&]() {
      Canvas c;
      for (int i = 0; i < 4; ++i) {
        c.atoms.push_back(
            {table()->id("X"), {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}});
      }
      return c;
    };
    const Canvas a = random_canvas(), b = random_canvas(), c = random_canvas();
    const double ab = rmsd(a, b), ba = rmsd(b, a), ac = rmsd(a, c), cb = rmsd(c, b);
    CHECK(std::abs(ab - ba) < 1e-10);
    CHECK(ab <= ac + cb + 1e-9);
  }
}

TEST_CASE("stability metric: relaxed input, dimer closed form, rotation invariance") {
  MorseOracle oracle(table());
  // Already relaxed: ~0.
  {
    const Canvas dimer = x_canvas({{0, 0, 0}, {1.0, 0, 0}});
    CHECK(stability_metric(dimer, oracle, 1e-7, 2000) < 1e-5);
  }
  // Dimer stretched to 1.1 r0: each atom moves 0.05 r0, so RMSD = 0.05 r0.
  {
    const Canvas stretched = x_canvas({{-0.55, 0, 0}, {0.55, 0, 0}});
    const double s = stability_metric(stretched, oracle, 1e-8, 5000);
    CHECK(s == doctest::Approx(0.05).epsilon(1e-3));
  }
  // Rotation invariance of the metric.
  {
    Rng rng(4);
    const Canvas c = x_canvas({{0, 0, 0}, {1.2, 0.1, 0}, {0.4, 1.0, 0.3}});
    const double s0 = stability_metric(c, oracle, 1e-6, 2000);
    const Mat3 r = random_rotation(rng);
    Canvas rotated = c;
    for (Atom& at : rotated.atoms) at.position = r * at.position;
    const double s1 = stability_metric(rotated, oracle, 1e-6, 2000);
    CHECK(std::abs(s0 - s1) < 1e-6);
  }
}
