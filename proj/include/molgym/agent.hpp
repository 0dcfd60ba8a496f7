#pragma once

#include <memory>
#include <vector>

#include "molgym/covariant.hpp"
#include "molgym/density.hpp"
#include "molgym/env.hpp"
#include "molgym/nn.hpp"

namespace molgym {

struct AgentConfig {
  int l_max = 4;
  int channels_per_element = 4;  // tau_e; total channels tau = tau_e * N_e
  int cg_rounds = 3;
  int mixture_components = 3;  // M
  double d_min = 0.95;
  double d_max = 1.80;
  double beta = 100.0;
  DensityVariant density_variant = DensityVariant::kExpSquared;
  int quadrature_order = 47;
  int mode_samples = 1024;  // S
  double envelope_safety = 1.2;
  int envelope_grid = 4096;
  int rbf_count = 8;
  double rbf_min = 0.6;
  double rbf_max = 3.0;
  double cutoff = 3.0;
  int hidden = 128;
  double distance_clip = 0.001;
  double sigma_init = 0.15;
  double bag_scale = 0.1;
};

enum class ActionMode { kSample, kGreedy };

struct PolicySample {
  int focal = -1;  // atom index; -1 on the empty-canvas step
  int element = 0;  // global element id
  double distance = 0.0;
  Vec3 orientation{0.0, 0.0, 1.0};
  Vec3 position{0.0, 0.0, 0.0};
  double logp_focal = 0.0;
  double logp_element = 0.0;
  double logp_distance = 0.0;
  double logp_orientation = 0.0;
  double value = 0.0;

  double log_prob() const {
    return logp_focal + logp_element + logp_distance + logp_orientation;
  }
};

struct EvalVars {
  ad::Var log_prob;  // sum over heads
  ad::Var entropy;   // categorical heads only
  ad::Var value;
};

/// Per-state head distributions, for symmetry checks.
struct HeadReport {
  std::vector<double> focal_probs;
  std::vector<double> element_probs;
  std::vector<double> mixture_weights;
  std::vector<double> mixture_means;
  std::vector<double> mixture_stds;
};

/// Rotation-covariant actor-critic. The canvas/bag state is embedded into
/// per-atom covariant features (spherical expansion of the neighborhood
/// followed by CG mixing rounds); categorical and distance heads read the
/// invariant projection, and the orientation is drawn from a spherical
/// series density conditioned on the earlier sub-actions.
class PolicyAgent {
 public:
  PolicyAgent(AgentConfig config, std::vector<int> elements,
              std::shared_ptr<const ElementTable> table, std::uint64_t init_seed);

  PolicySample act(const EnvState& state, ActionMode mode, Rng& rng) const;

  /// Recomputes all head log-probabilities of a stored action under the
  /// current parameters (PPO ratio path), plus entropy and value.
  EvalVars evaluate(ad::Tape& t, const nn::BoundParams& p, const EnvState& state,
                    const PolicySample& action) const;

  ad::Var value(ad::Tape& t, const nn::BoundParams& p, const EnvState& state) const;
  double value_plain(const EnvState& state) const;

  /// The orientation density p(. | d, e, f, s) for a given conditioning
  /// prefix; exposed for normalization/symmetry/sampler checks.
  SphericalDensity orientation_density(const EnvState& state, int focal, int element,
                                       double distance) const;

  HeadReport head_report(const EnvState& state, int focal, int element) const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const AgentConfig& config() const { return config_; }
  const std::vector<int>& elements() const { return elements_; }
  const so3::QuadratureGrid& grid() const { return grid_; }

  int element_index(int global_id) const;  // position in the task universe

 private:
  struct Embedded {
    std::vector<cov::CovVar> s_cov;  // per atom, tau channels
    std::vector<ad::Var> s_inv;      // per atom
  };

  Embedded embed(ad::Tape& t, const nn::BoundParams& p, const EnvState& state) const;
  cov::CovTensor initial_features(const EnvState& state, int atom) const;
  ad::Var critic_from_invariants(ad::Tape& t, const nn::BoundParams& p,
                                 const std::vector<ad::Var>& s_inv) const;

  /// Shared actor pipeline; sampling and evaluation differ only in whether
  /// the sub-actions are drawn or given.
  struct ForwardOut {
    ad::Var logp_focal, logp_element, logp_distance, logp_orientation;
    ad::Var entropy;
    ad::Var value;
    PolicySample sample;
  };
  ForwardOut forward(ad::Tape& t, const nn::BoundParams& p, const EnvState& state,
                     const PolicySample* given, ActionMode mode, Rng* rng) const;

  AgentConfig config_;
  std::vector<int> elements_;
  std::shared_ptr<const ElementTable> table_;
  nn::ParamStore params_;
  so3::QuadratureGrid grid_;
  cov::YTable grid_y_;  // harmonics on the grid, [Q x (L+1)^2]
  Tensor grid_weights_;
  nn::Mlp mlp_f_, mlp_e_, mdn_, mlp_phi_, mlp_rho_;
  int tau_ = 0;      // total channels
  int d_inv_ = 0;    // invariant width per atom
  int d_inv_e_ = 0;  // invariant width of the element-sliced block
};

}  // namespace molgym
