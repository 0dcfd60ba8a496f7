#include "molgym/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace molgym {

namespace {

// Series value f(u) = sum_{l,m} c_l^m conj(Y_l^m(u)). The conjugate pairing
// is the rotation-invariant contraction for coefficients that transform like
// the harmonic value vectors (the wigner_d convention used throughout).
so3::Complex series_value(const cov::CovTensor& coeffs, const Vec3& u) {
  const int l_max = coeffs.l_max();
  thread_local std::vector<so3::Complex> y;
  y.resize(static_cast<std::size_t>(so3::sh_count(l_max)));
  so3::sph_harm_all(l_max, so3::SphCoord::from_unit_vector(u), y.data());
  so3::Complex f = 0.0;
  for (int l = 0; l <= l_max; ++l) {
    const Tensor& part = coeffs.parts[static_cast<std::size_t>(l)];
    for (int m = -l; m <= l; ++m) {
      f += so3::Complex(part.at3(0, m + l, 0), part.at3(0, m + l, 1)) *
           std::conj(y[static_cast<std::size_t>(so3::sh_index(l, m))]);
    }
  }
  return f;
}

}  // namespace

double quadrature_log_z(const std::vector<double>& neg_beta_g,
                        const std::vector<double>& weights) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double e : neg_beta_g) mx = std::max(mx, e);
  double z = 0.0;
  for (std::size_t i = 0; i < neg_beta_g.size(); ++i) {
    z += weights[i] * std::exp(neg_beta_g[i] - mx);
  }
  return std::log(z) + mx;
}

SphericalDensity::SphericalDensity(cov::CovTensor coeffs, double beta,
                                   DensityVariant variant, const so3::QuadratureGrid& grid)
    : coeffs_(std::move(coeffs)), beta_(beta), variant_(variant) {
  for (const Tensor& p : coeffs_.parts) {
    if (p.dim(0) != 1) throw std::invalid_argument("SphericalDensity: one channel required");
  }
  k_ = 0.0;
  for (const Tensor& p : coeffs_.parts) {
    for (long i = 0; i < p.numel(); ++i) k_ += p[i] * p[i];
  }
  if (!(k_ > 0.0)) throw std::invalid_argument("SphericalDensity: k must be positive");

  if (variant_ == DensityVariant::kExpSquared) {
    std::vector<double> exponents(grid.size());
    for (std::size_t q = 0; q < grid.size(); ++q) {
      exponents[q] = -beta_ * normalized_square(grid.unit_vectors[q]);
    }
    log_z_ = quadrature_log_z(exponents, grid.weights);
  } else {
    log_z_ = 0.0;  // Parseval: integral |f|^2 = k exactly
  }
}

double SphericalDensity::normalized_square(const Vec3& u) const {
  const so3::Complex f = series_value(coeffs_, u);
  return (f.real() * f.real() + f.imag() * f.imag()) / k_;
}

double SphericalDensity::density(const Vec3& u) const {
  const double g = normalized_square(u);
  if (variant_ == DensityVariant::kExpSquared) return std::exp(-beta_ * g - log_z_);
  return g;
}

double SphericalDensity::log_density(const Vec3& u) const {
  const double g = normalized_square(u);
  if (variant_ == DensityVariant::kExpSquared) return -beta_ * g - log_z_;
  return std::log(g);
}

OrientationSampler::OrientationSampler(const SphericalDensity& density,
                                       const SamplerConfig& cfg)
    : density_(density), cfg_(cfg) {
  const so3::SunflowerGrid grid = so3::build_sunflower(cfg.envelope_grid);
  double max_p = 0.0;
  for (const Vec3& u : grid.points) max_p = std::max(max_p, density_.density(u));
  m_env_ = 4.0 * M_PI * max_p * cfg.safety;
  if (!(m_env_ > 0.0)) m_env_ = cfg.safety;  // degenerate all-zero grid scan
}

OrientationSample OrientationSampler::sample(Rng& rng, long* proposal_count) const {
  long rejections = 0;
  for (;;) {
    const Vec3 u = random_unit_vector(rng);
    if (proposal_count != nullptr) ++*proposal_count;
    const double p = density_.density(u);
    const double bound = m_env_ / (4.0 * M_PI);
    if (p > bound) {
      // Grid scan under-estimated the maximum; widen and retry this draw.
      m_env_ *= 2.0;
      continue;
    }
    const double accept = rng.uniform() * bound;
    if (accept < p) {
      OrientationSample s;
      s.direction = u;
      s.log_prob = density_.log_density(u);
      return s;
    }
    if (++rejections > cfg_.max_rejections) {
      throw SamplingError("orientation sampling exceeded rejection budget");
    }
  }
}

Vec3 OrientationSampler::estimate_mode(int s, Rng& rng) const {
  if (s < 1) throw std::invalid_argument("estimate_mode: s >= 1");
  Vec3 best;
  double best_p = -1.0;
  for (int i = 0; i < s; ++i) {
    const OrientationSample draw = sample(rng);
    const double p = density_.density(draw.direction);
    if (p > best_p) {
      best_p = p;
      best = draw.direction;
    }
  }
  return best;
}

}  // namespace molgym
