#include "molgym/so3.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace molgym::so3 {

namespace {

// P(l, m) for 0 <= m <= l by the standard stable upward recurrences on the
// spherical-harmonic-normalized functions:
//   P(0,0) = sqrt(1/4pi)
//   P(m,m) = -sqrt((2m+1)/(2m)) * sin(theta) * P(m-1,m-1)   (Condon-Shortley)
//   P(m+1,m) = sqrt(2m+3) * x * P(m,m)
//   P(l,m) = a_lm * (x * P(l-1,m) - b_lm * P(l-2,m))
void legendre_table(int l_max, double x, std::vector<double>& out) {
  const int n = (l_max + 1) * (l_max + 2) / 2;  // packed (l, m>=0)
  out.assign(n, 0.0);
  auto idx = [](int l, int m) { return l * (l + 1) / 2 + m; };
  const double s = std::sqrt(std::max(0.0, 1.0 - x * x));

  out[idx(0, 0)] = std::sqrt(1.0 / (4.0 * M_PI));
  for (int m = 1; m <= l_max; ++m) {
    out[idx(m, m)] =
        -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * out[idx(m - 1, m - 1)];
  }
  for (int m = 0; m < l_max; ++m) {
    out[idx(m + 1, m)] = std::sqrt(2.0 * m + 3.0) * x * out[idx(m, m)];
  }
  for (int m = 0; m <= l_max; ++m) {
    for (int l = m + 2; l <= l_max; ++l) {
      const double a =
          std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - static_cast<double>(m) * m));
      const double b = std::sqrt(
          ((static_cast<double>(l - 1) * (l - 1) - static_cast<double>(m) * m)) /
          (4.0 * static_cast<double>(l - 1) * (l - 1) - 1.0));
      out[idx(l, m)] = a * (x * out[idx(l - 1, m)] - b * out[idx(l - 2, m)]);
    }
  }
}

long double lfactorial(int n) {
  static const auto table = [] {
    std::array<long double, 64> t{};
    t[0] = 1.0L;
    for (int i = 1; i < 64; ++i) t[i] = t[i - 1] * i;
    return t;
  }();
  return table[static_cast<std::size_t>(n)];
}

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / pp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[static_cast<std::size_t>(i)] = t;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - t * t) * pp * pp);
  }
}

}  // namespace

double assoc_legendre_norm(int l, int m, double x) {
  if (l < 0 || std::abs(m) > l) {
    throw std::invalid_argument("assoc_legendre_norm: require |m| <= l, l >= 0");
  }
  if (std::abs(x) > 1.0) {
    throw std::invalid_argument("assoc_legendre_norm: require |x| <= 1");
  }
  std::vector<double> table;
  legendre_table(l, x, table);
  const int am = std::abs(m);
  double v = table[static_cast<std::size_t>(l * (l + 1) / 2 + am)];
  if (m < 0 && (am % 2) != 0) v = -v;
  return v;
}

Complex sph_harm(int l, int m, const SphCoord& coord) {
  if (l < 0 || std::abs(m) > l) {
    throw std::invalid_argument("sph_harm: require |m| <= l, l >= 0");
  }
  const double p = assoc_legendre_norm(l, m, std::cos(coord.theta));
  return p * Complex(std::cos(m * coord.phi), std::sin(m * coord.phi));
}

void sph_harm_all(int l_max, const SphCoord& coord, Complex* out) {
  thread_local std::vector<double> table;
  legendre_table(l_max, std::cos(coord.theta), table);
  auto idx = [](int l, int m) { return l * (l + 1) / 2 + m; };
  for (int m = 0; m <= l_max; ++m) {
    const Complex e(std::cos(m * coord.phi), std::sin(m * coord.phi));
    for (int l = m; l <= l_max; ++l) {
      const double p = table[static_cast<std::size_t>(idx(l, m))];
      const Complex y = p * e;
      out[sh_index(l, m)] = y;
      if (m > 0) {
        const Complex yc = std::conj(y);
        out[sh_index(l, -m)] = (m % 2 == 0) ? yc : -yc;
      }
    }
  }
}

QuadratureGrid build_quadrature(int order) {
  if (order < 1) throw std::invalid_argument("build_quadrature: order >= 1");
  const int n_theta = order + 1;
  const int n_phi = 2 * order + 1;
  std::vector<double> gx, gw;
  gauss_legendre(n_theta, gx, gw);

  QuadratureGrid grid;
  grid.nodes.reserve(static_cast<std::size_t>(n_theta) * n_phi);
  grid.weights.reserve(grid.nodes.capacity());
  const double wphi = 2.0 * M_PI / n_phi;
  for (int i = 0; i < n_theta; ++i) {
    const double theta = std::acos(std::clamp(gx[static_cast<std::size_t>(i)], -1.0, 1.0));
    for (int j = 0; j < n_phi; ++j) {
      SphCoord c;
      c.theta = theta;
      c.phi = wphi * j;
      grid.nodes.push_back(c);
      grid.weights.push_back(gw[static_cast<std::size_t>(i)] * wphi);
      grid.unit_vectors.push_back(c.to_unit_vector());
    }
  }
  return grid;
}

QuadratureGrid load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_grid_file: cannot open " + path);
  QuadratureGrid grid;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double theta = 0.0, phi = 0.0, w = 0.0;
    if (!(ss >> theta >> phi >> w)) {
      throw std::runtime_error("load_grid_file: parse error at " + path + ":" +
                               std::to_string(lineno));
    }
    if (w <= 0.0) {
      throw std::runtime_error("load_grid_file: non-positive weight at " + path + ":" +
                               std::to_string(lineno));
    }
    SphCoord c;
    c.theta = theta;
    c.phi = phi;
    grid.nodes.push_back(c);
    grid.weights.push_back(w);
    grid.unit_vectors.push_back(c.to_unit_vector());
  }
  if (grid.nodes.empty()) throw std::runtime_error("load_grid_file: empty grid in " + path);
  double sum = 0.0;
  for (double w : grid.weights) sum += w;
  const double target = 4.0 * M_PI;
  if (std::abs(sum - target) > 1e-6 * target) {
    throw std::runtime_error("load_grid_file: weights sum to " + std::to_string(sum) +
                             ", expected 4*pi");
  }
  const double scale = target / sum;
  for (double& w : grid.weights) w *= scale;
  return grid;
}

SunflowerGrid build_sunflower(int n) {
  if (n < 1) throw std::invalid_argument("build_sunflower: n >= 1");
  SunflowerGrid g;
  g.points.reserve(static_cast<std::size_t>(n));
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    g.points.push_back({r * std::cos(phi), r * std::sin(phi), z});
  }
  return g;
}

double cg_coeff(int l1, int l2, int l, int m1, int m2, int m) {
  if (l1 < 0 || l2 < 0 || l < 0) return 0.0;
  if (m != m1 + m2) return 0.0;
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m) > l) return 0.0;
  if (l < std::abs(l1 - l2) || l > l1 + l2) return 0.0;

  // Racah's closed form, evaluated in extended precision. Factorial
  // arguments stay below 64 for every l this artifact uses.
  const long double delta =
      lfactorial(l1 + l2 - l) * lfactorial(l1 - l2 + l) * lfactorial(-l1 + l2 + l) /
      lfactorial(l1 + l2 + l + 1);
  const long double pref =
      std::sqrt(static_cast<long double>(2 * l + 1) * delta * lfactorial(l1 + m1) *
                lfactorial(l1 - m1) * lfactorial(l2 + m2) * lfactorial(l2 - m2) *
                lfactorial(l + m) * lfactorial(l - m));

  const int t_min = std::max({0, l2 - l - m1, l1 - l + m2});
  const int t_max = std::min({l1 + l2 - l, l1 - m1, l2 + m2});
  long double sum = 0.0L;
  for (int t = t_min; t <= t_max; ++t) {
    const long double denom = lfactorial(t) * lfactorial(l1 + l2 - l - t) *
                              lfactorial(l1 - m1 - t) * lfactorial(l2 + m2 - t) *
                              lfactorial(l - l2 + m1 + t) * lfactorial(l - l1 - m2 + t);
    sum += ((t % 2 == 0) ? 1.0L : -1.0L) / denom;
  }
  return static_cast<double>(pref * sum);
}

ComplexMatrix wigner_d(int l, const Mat3& rotation) {
  // Validate orthogonality and orientation.
  const Mat3 rtr = rotation.transposed() * rotation;
  const Mat3 eye = Mat3::identity();
  double dev = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) dev = std::max(dev, std::abs(rtr.m[i][j] - eye.m[i][j]));
  if (dev > 1e-8 || rotation.det() < 0.0) {
    throw std::invalid_argument("wigner_d: input is not a proper rotation");
  }
  if (l < 0) throw std::invalid_argument("wigner_d: l >= 0");

  const int dim = 2 * l + 1;
  ComplexMatrix d(dim, dim);
  if (l == 0) {
    d.at(0, 0) = 1.0;
    return d;
  }

  // D[m, m'] = sum_q w_q Y_l^m(R u_q) conj(Y_l^m'(u_q)); exact because
  // Y_l^m(R .) is itself a degree-l harmonic and the grid integrates
  // degree-l products exactly.
  static std::mutex mu;
  static std::map<int, QuadratureGrid> grids;
  const QuadratureGrid* grid = nullptr;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = grids.find(l);
    if (it == grids.end()) it = grids.emplace(l, build_quadrature(std::max(4, l))).first;
    grid = &it->second;
  }

  const int nc = sh_count(l);
  std::vector<Complex> y_u(static_cast<std::size_t>(nc));
  std::vector<Complex> y_ru(static_cast<std::size_t>(nc));
  for (std::size_t q = 0; q < grid->size(); ++q) {
    const Vec3 u = grid->unit_vectors[q];
    const Vec3 ru = rotation * u;
    sph_harm_all(l, SphCoord::from_unit_vector(u), y_u.data());
    sph_harm_all(l, SphCoord::from_unit_vector(ru), y_ru.data());
    const double w = grid->weights[q];
    for (int a = 0; a < dim; ++a) {
      const Complex ya = y_ru[static_cast<std::size_t>(sh_index(l, a - l))] * w;
      for (int b = 0; b < dim; ++b) {
        d.at(a, b) += ya * std::conj(y_u[static_cast<std::size_t>(sh_index(l, b - l))]);
      }
    }
  }
  return d;
}

const CgTables& cg_tables(int l_max) {
  static std::mutex mu;
  static std::map<int, CgTables> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(l_max);
  if (it != cache.end()) return it->second;

  CgTables t;
  t.l_max = l_max;
  t.entries.resize(static_cast<std::size_t>(l_max) + 1);
  for (int l1 = 0; l1 <= l_max; ++l1) {
    t.entries[static_cast<std::size_t>(l1)].resize(static_cast<std::size_t>(l_max) + 1);
    for (int l2 = 0; l2 <= l_max; ++l2) {
      t.entries[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)].resize(
          static_cast<std::size_t>(l_max) + 1);
      for (int l = 0; l <= l_max; ++l) {
        if (l < std::abs(l1 - l2) || l > l1 + l2) continue;
        auto& list = t.entries[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)]
                              [static_cast<std::size_t>(l)];
        for (int m1 = -l1; m1 <= l1; ++m1) {
          for (int m2 = -l2; m2 <= l2; ++m2) {
            const int m = m1 + m2;
            if (std::abs(m) > l) continue;
            const double c = cg_coeff(l1, l2, l, m1, m2, m);
            if (c != 0.0) list.push_back({m1, m2, m, c});
          }
        }
      }
    }
  }
  return cache.emplace(l_max, std::move(t)).first->second;
}

}  // namespace molgym::so3
