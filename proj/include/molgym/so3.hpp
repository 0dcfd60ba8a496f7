#pragma once

#include <complex>
#include <string>
#include <vector>

#include "molgym/vec3.hpp"

namespace molgym::so3 {

using Complex = std::complex<double>;

/// Point on the unit sphere, theta in [0, pi], phi in [0, 2*pi).
struct SphCoord {
  double theta = 0.0;
  double phi = 0.0;

  Vec3 to_unit_vector() const {
    const double st = std::sin(theta);
    return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
  }

  static SphCoord from_unit_vector(const Vec3& u) {
    SphCoord c;
    c.theta = std::acos(std::clamp(u.z, -1.0, 1.0));
    c.phi = std::atan2(u.y, u.x);
    if (c.phi < 0.0) c.phi += 2.0 * M_PI;
    return c;
  }
};

/// Spherical-harmonic-normalized associated Legendre function, including the
/// Condon-Shortley phase, so that sph_harm(l, m, c) equals
/// assoc_legendre_norm(l, m, cos(theta)) * exp(i*m*phi).
/// Throws std::invalid_argument outside |m| <= l, |x| <= 1.
double assoc_legendre_norm(int l, int m, double x);

/// Complex spherical harmonic Y_l^m(theta, phi), unit L2 norm on the sphere.
Complex sph_harm(int l, int m, const SphCoord& coord);

/// All Y_l^m for l <= l_max into out[l*l + l + m] (size (l_max+1)^2).
void sph_harm_all(int l_max, const SphCoord& coord, Complex* out);
inline int sh_index(int l, int m) { return l * l + l + m; }
inline int sh_count(int l_max) { return (l_max + 1) * (l_max + 1); }

/// Product quadrature grid on the sphere: Gauss-Legendre nodes in cos(theta)
/// crossed with a uniform phi grid. Exact for products Y_l^m Y_l'^m'* with
/// l, l' <= order. Sum of weights is 4*pi.
struct QuadratureGrid {
  std::vector<SphCoord> nodes;
  std::vector<double> weights;
  std::vector<Vec3> unit_vectors;

  std::size_t size() const { return nodes.size(); }
};

QuadratureGrid build_quadrature(int order = 31);

/// Loads an externally tabulated grid (e.g. Lebedev nodes), one node per
/// line: `theta phi weight`. Weights are rescaled to sum exactly to 4*pi;
/// inputs off by more than 1e-6 relative are rejected.
QuadratureGrid load_grid_file(const std::string& path);

/// Deterministic golden-angle spiral of n quasi-uniform points.
struct SunflowerGrid {
  std::vector<Vec3> points;
};

SunflowerGrid build_sunflower(int n);

/// Clebsch-Gordan coefficient <l1 m1; l2 m2 | l m>. Out-of-domain selections
/// (m != m1 + m2, triangle violation, |mi| > li) return 0.
double cg_coeff(int l1, int l2, int l, int m1, int m2, int m);

/// Small dense complex matrix for Wigner-D results.
struct ComplexMatrix {
  int rows = 0, cols = 0;
  std::vector<Complex> data;

  ComplexMatrix() = default;
  ComplexMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {}
  Complex& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  Complex at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

/// Wigner D-matrix of degree l for a proper rotation, in the convention
/// fixed by the identity Y_l(R u) = D^l(R) Y_l(u), with m ordered -l..l.
/// Computed by projecting the rotated harmonics onto the unrotated basis
/// with an exact quadrature, which solves the defining identity directly.
/// Throws std::invalid_argument when R is not a rotation (1e-8 check).
ComplexMatrix wigner_d(int l, const Mat3& rotation);

/// Non-zero Clebsch-Gordan couplings for all (l1, l2) -> l with inputs and
/// outputs truncated at l_max, precomputed once.
struct CgEntry {
  int m1, m2, m;  // m = m1 + m2
  double c;
};
struct CgTables {
  int l_max = 0;
  // entries[l1][l2][l] -> coupling list (empty if not admissible)
  std::vector<std::vector<std::vector<std::vector<CgEntry>>>> entries;

  const std::vector<CgEntry>& couplings(int l1, int l2, int l) const {
    return entries[l1][l2][l];
  }
};

/// Shared table for the given truncation (thread-safe, built once).
const CgTables& cg_tables(int l_max);

}  // namespace molgym::so3
