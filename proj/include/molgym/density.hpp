#pragma once

#include <stdexcept>

#include "molgym/covariant.hpp"
#include "molgym/rng.hpp"
#include "molgym/so3.hpp"
#include "molgym/vec3.hpp"

namespace molgym {

/// Raised when rejection sampling exceeds its rejection budget, which
/// signals a pathological beta / coefficient combination.
struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DensityVariant { kExpSquared, kSquared };

/// Distribution over unit-sphere directions parameterized by a
/// single-channel covariant coefficient set r-hat:
///   kExpSquared: p(u) = exp(-beta |f(u)|^2 / k) / Z
///   kSquared:    p(u) = |f(u)|^2 / k          (self-normalized)
/// with f(u) = sum_{l,m} r_l^m Y_l^m(u) and k = sum |r_l^m|^2.
/// Z is estimated once on the supplied quadrature grid and cached.
class SphericalDensity {
 public:
  SphericalDensity(cov::CovTensor coeffs, double beta, DensityVariant variant,
                   const so3::QuadratureGrid& grid);

  double density(const Vec3& u) const;
  double log_density(const Vec3& u) const;

  double k() const { return k_; }
  double log_z() const { return log_z_; }
  double beta() const { return beta_; }
  DensityVariant variant() const { return variant_; }
  int l_max() const { return coeffs_.l_max(); }
  const cov::CovTensor& coeffs() const { return coeffs_; }

  /// |f(u)|^2 / k, the shared kernel of both variants.
  double normalized_square(const Vec3& u) const;

 private:
  cov::CovTensor coeffs_;
  double beta_;
  DensityVariant variant_;
  double k_;
  double log_z_;  // 0 for the self-normalized variant
};

/// Stable log of the quadrature estimate of Z = integral exp(-beta g).
/// Shared between the plain density above and the on-tape version so both
/// produce identical values (max-shifted in the same order).
double quadrature_log_z(const std::vector<double>& neg_beta_g,
                        const std::vector<double>& weights);

struct SamplerConfig {
  int envelope_grid = 4096;
  double safety = 1.2;
  long max_rejections = 1000000;
};

struct OrientationSample {
  Vec3 direction;
  double log_prob = 0.0;
};

/// Rejection sampler with uniform proposal q = 1/(4 pi). The envelope
/// constant starts at 4 pi * (max density over a sunflower grid) * safety
/// and doubles whenever an evaluation exceeds it (restarting that draw).
class OrientationSampler {
 public:
  OrientationSampler(const SphericalDensity& density, const SamplerConfig& cfg);

  /// `proposal_count`, when given, accumulates the number of proposals used.
  OrientationSample sample(Rng& rng, long* proposal_count = nullptr) const;

  /// Draws s samples and returns the one with the highest density.
  Vec3 estimate_mode(int s, Rng& rng) const;

  double envelope() const { return m_env_; }

 private:
  const SphericalDensity& density_;
  SamplerConfig cfg_;
  mutable double m_env_;
};

}  // namespace molgym
