#include "molgym/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>

#include "molgym/oracle.hpp"

namespace molgym {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// Jacobi eigensolver for small symmetric matrices (4x4 here).
void jacobi_eigen(double a[4][4], double v[4][4], double w[4]) {
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) v[i][j] = (i == j) ? 1.0 : 0.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) off += a[i][j] * a[i][j];
    if (off < 1e-28) break;
    for (int p = 0; p < 4; ++p)
      for (int q = p + 1; q < 4; ++q) {
        if (std::abs(a[p][q]) < 1e-30) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double sign = theta >= 0.0 ? 1.0 : -1.0;
        const double tt = sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(tt * tt + 1.0);
        const double s = tt * c;
        for (int k = 0; k < 4; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 4; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 4; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  for (int i = 0; i < 4; ++i) w[i] = a[i][i];
}

}  // namespace

MolecularGraph perceive_graph(const Canvas& canvas, const ElementTable& table,
                              const PerceptionConfig& config) {
  MolecularGraph g;
  for (const Atom& a : canvas.atoms) g.elements.push_back(a.element);
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    for (std::size_t j = i + 1; j < canvas.size(); ++j) {
      const double r = (canvas.atoms[i].position - canvas.atoms[j].position).norm();
      const double bond =
          config.bond_factor * (table.info(canvas.atoms[i].element).covalent_radius +
                                table.info(canvas.atoms[j].element).covalent_radius);
      if (r <= bond) g.edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return g;
}

bool graph_is_valid(const MolecularGraph& graph, const ElementTable& table) {
  const int n = static_cast<int>(graph.elements.size());
  if (n == 0) return false;

  std::vector<int> stack{0};
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  seen[0] = true;
  int visited = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const auto& [a, b] : graph.edges) {
      const int other = (a == u) ? b : (b == u ? a : -1);
      if (other >= 0 && !seen[static_cast<std::size_t>(other)]) {
        seen[static_cast<std::size_t>(other)] = true;
        ++visited;
        stack.push_back(other);
      }
    }
  }
  if (visited != n) return false;

  for (int i = 0; i < n; ++i) {
    const auto& allowed =
        table.info(graph.elements[static_cast<std::size_t>(i)]).allowed_valences;
    const int d = graph.degree(i);
    if (std::find(allowed.begin(), allowed.end(), d) == allowed.end()) return false;
  }
  return true;
}

std::string canonical_hash(const MolecularGraph& graph, const ElementTable& table) {
  const int n = static_cast<int>(graph.elements.size());
  if (n == 0) return "empty";
  std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(n));
  for (const auto& [a, b] : graph.edges) {
    adjacency[static_cast<std::size_t>(a)].push_back(b);
    adjacency[static_cast<std::size_t>(b)].push_back(a);
  }
  std::vector<std::string> label(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    label[static_cast<std::size_t>(i)] =
        table.info(graph.elements[static_cast<std::size_t>(i)]).symbol;
  }
  // n refinement rounds suffice for neighborhood-refinement stabilization.
  for (int round = 0; round < n; ++round) {
    std::vector<std::string> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> neigh;
      for (int j : adjacency[static_cast<std::size_t>(i)]) {
        neigh.push_back(label[static_cast<std::size_t>(j)]);
      }
      std::sort(neigh.begin(), neigh.end());
      std::string combined = label[static_cast<std::size_t>(i)] + "(";
      for (const std::string& s : neigh) combined += s + ",";
      combined += ")";
      next[static_cast<std::size_t>(i)] = hex64(fnv1a(combined));
    }
    label = std::move(next);
  }
  std::sort(label.begin(), label.end());
  std::string all;
  for (const std::string& s : label) all += s + ";";
  all += "e" + std::to_string(graph.edges.size());
  return hex64(fnv1a(all));
}

double rmsd(const Canvas& a, const Canvas& b) {
  if (a.size() != b.size()) throw std::invalid_argument("rmsd: atom count mismatch");
  const int n = static_cast<int>(a.size());
  if (n == 0) return 0.0;
  {
    std::multiset<int> ea, eb;
    for (const Atom& at : a.atoms) ea.insert(at.element);
    for (const Atom& at : b.atoms) eb.insert(at.element);
    if (ea != eb) throw std::invalid_argument("rmsd: element multiset mismatch");
  }

  Vec3 ca{0, 0, 0}, cb{0, 0, 0};
  for (int i = 0; i < n; ++i) {
    ca += a.atoms[static_cast<std::size_t>(i)].position;
    cb += b.atoms[static_cast<std::size_t>(i)].position;
  }
  ca = ca * (1.0 / n);
  cb = cb * (1.0 / n);

  // Quaternion (Horn) method: the optimal proper rotation is the top
  // eigenvector of the 4x4 key matrix built from the correlation. The RMSD
  // is then summed directly from the superposed residuals, which avoids the
  // catastrophic cancellation of the (Ga + Gb - 2 lambda) closed form when
  // the structures are rigid copies.
  double sxx = 0, sxy = 0, sxz = 0, syx = 0, syy = 0, syz = 0, szx = 0, szy = 0, szz = 0;
  for (int i = 0; i < n; ++i) {
    const Vec3 p = a.atoms[static_cast<std::size_t>(i)].position - ca;
    const Vec3 q = b.atoms[static_cast<std::size_t>(i)].position - cb;
    sxx += p.x * q.x;
    sxy += p.x * q.y;
    sxz += p.x * q.z;
    syx += p.y * q.x;
    syy += p.y * q.y;
    syz += p.y * q.z;
    szx += p.z * q.x;
    szy += p.z * q.y;
    szz += p.z * q.z;
  }
  double k[4][4] = {
      {sxx + syy + szz, syz - szy, szx - sxz, sxy - syx},
      {syz - szy, sxx - syy - szz, sxy + syx, szx + sxz},
      {szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy},
      {sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz},
  };
  double vec[4][4], w[4];
  jacobi_eigen(k, vec, w);
  int top = 0;
  for (int i = 1; i < 4; ++i) {
    if (w[i] > w[top]) top = i;
  }
  const double qw = vec[0][top], qx = vec[1][top], qy = vec[2][top], qz = vec[3][top];
  Mat3 rot;
  rot.m[0][0] = qw * qw + qx * qx - qy * qy - qz * qz;
  rot.m[0][1] = 2.0 * (qx * qy - qw * qz);
  rot.m[0][2] = 2.0 * (qx * qz + qw * qy);
  rot.m[1][0] = 2.0 * (qx * qy + qw * qz);
  rot.m[1][1] = qw * qw - qx * qx + qy * qy - qz * qz;
  rot.m[1][2] = 2.0 * (qy * qz - qw * qx);
  rot.m[2][0] = 2.0 * (qx * qz - qw * qy);
  rot.m[2][1] = 2.0 * (qy * qz + qw * qx);
  rot.m[2][2] = qw * qw - qx * qx - qy * qy + qz * qz;

  double msd = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 p = rot * (a.atoms[static_cast<std::size_t>(i)].position - ca);
    const Vec3 q = b.atoms[static_cast<std::size_t>(i)].position - cb;
    msd += (p - q).norm2();
  }
  return std::sqrt(msd / n);
}

double stability_metric(const Canvas& canvas, const EnergyOracle& oracle, double relax_tol,
                        int relax_max_iter) {
  const RelaxResult relaxed = relax_all(canvas, oracle, relax_tol, relax_max_iter);
  return rmsd(canvas, relaxed.canvas);
}

}  // namespace molgym
