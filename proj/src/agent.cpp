#include "molgym/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace molgym {

using ad::Tape;
using ad::Var;
using cov::CovTensor;
using cov::CovVar;

namespace {

std::vector<bool> all_true(std::size_t n) { return std::vector<bool>(n, true); }

}  // namespace

PolicyAgent::PolicyAgent(AgentConfig config, std::vector<int> elements,
                         std::shared_ptr<const ElementTable> table, std::uint64_t init_seed)
    : config_(config), elements_(std::move(elements)), table_(std::move(table)),
      grid_(so3::build_quadrature(config.quadrature_order)) {
  if (elements_.empty()) throw std::invalid_argument("PolicyAgent: element universe empty");
  if (config_.l_max < 1) throw std::invalid_argument("PolicyAgent: l_max >= 1");
  if (!(config_.d_min < config_.d_max)) throw std::invalid_argument("PolicyAgent: d range");
  if (config_.mode_samples < 1) throw std::invalid_argument("PolicyAgent: mode_samples >= 1");

  const int n_e = static_cast<int>(elements_.size());
  const int b = config_.rbf_count;
  tau_ = config_.channels_per_element * n_e;
  d_inv_ = cov::t_inv_size(config_.l_max, tau_);
  d_inv_e_ = cov::t_inv_size(config_.l_max, config_.channels_per_element);

  // Pre-tabulate the harmonics on the normalization grid.
  const int nc = so3::sh_count(config_.l_max);
  auto ytab = std::make_shared<std::vector<so3::Complex>>(
      grid_.size() * static_cast<std::size_t>(nc));
  for (std::size_t q = 0; q < grid_.size(); ++q) {
    so3::sph_harm_all(config_.l_max, grid_.nodes[q],
                      ytab->data() + q * static_cast<std::size_t>(nc));
  }
  grid_y_ = std::move(ytab);
  grid_weights_ = Tensor::from_vector(grid_.weights);

  Rng rng(init_seed);

  // Covariant mixing rounds.
  for (int r = 0; r < config_.cg_rounds; ++r) {
    for (int l = 0; l <= config_.l_max; ++l) {
      const int in_a = (r == 0) ? (n_e * b + (l == 0 ? n_e : 0)) : tau_;
      params_.add("embed.r" + std::to_string(r) + ".wa.l" + std::to_string(l),
                  nn::complex_glorot_init(tau_, in_a, rng));
      params_.add("embed.r" + std::to_string(r) + ".wb.l" + std::to_string(l),
                  nn::complex_glorot_init(tau_, 2 * tau_, rng));
    }
  }
  // Conditioning transform down to a single channel.
  for (int l = 0; l <= config_.l_max; ++l) {
    params_.add("tcov.w.l" + std::to_string(l),
                nn::complex_glorot_init(1, 3 * config_.channels_per_element, rng));
  }

  mlp_f_ = {"mlp_f", {d_inv_, config_.hidden, 1}};
  mlp_e_ = {"mlp_e", {d_inv_, config_.hidden, n_e}};
  mdn_ = {"mdn", {d_inv_e_, config_.hidden, 2 * config_.mixture_components}};
  mlp_phi_ = {"mlp_phi", {d_inv_, config_.hidden, config_.hidden}};
  mlp_rho_ = {"mlp_rho", {config_.hidden, config_.hidden, 1}};
  mlp_f_.register_params(params_, rng);
  mlp_e_.register_params(params_, rng);
  mdn_.register_params(params_, rng);
  mlp_phi_.register_params(params_, rng);
  mlp_rho_.register_params(params_, rng);

  Tensor log_sigma = Tensor::zeros({config_.mixture_components});
  for (long i = 0; i < log_sigma.numel(); ++i) log_sigma[i] = std::log(config_.sigma_init);
  params_.add("sigma.log", log_sigma);
  params_.add("t0.logits", Tensor::zeros({n_e}));
}

int PolicyAgent::element_index(int global_id) const {
  for (std::size_t i = 0; i < elements_.size(); ++i) {
    if (elements_[i] == global_id) return static_cast<int>(i);
  }
  throw std::invalid_argument("PolicyAgent: element not in the task universe");
}

CovTensor PolicyAgent::initial_features(const EnvState& state, int atom) const {
  const int n_e = static_cast<int>(elements_.size());
  const int b = config_.rbf_count;
  const int l_max = config_.l_max;
  std::vector<int> ch(static_cast<std::size_t>(l_max) + 1, n_e * b);
  ch[0] += n_e;
  CovTensor f0 = CovTensor::zeros(l_max, ch);

  const Vec3 center = state.canvas.atoms[static_cast<std::size_t>(atom)].position;
  const double delta = (config_.rbf_max - config_.rbf_min) / (config_.rbf_count - 1);
  const double gamma = 1.0 / (2.0 * delta * delta);
  std::vector<so3::Complex> y(static_cast<std::size_t>(so3::sh_count(l_max)));

  for (std::size_t j = 0; j < state.canvas.size(); ++j) {
    if (static_cast<int>(j) == atom) continue;
    const Vec3 dr = state.canvas.atoms[j].position - center;
    const double r = dr.norm();
    if (r <= 0.0 || r >= config_.cutoff) continue;
    const double sw = 0.5 * (std::cos(M_PI * r / config_.cutoff) + 1.0);
    so3::sph_harm_all(l_max, so3::SphCoord::from_unit_vector(dr * (1.0 / r)), y.data());
    const int ej = element_index(state.canvas.atoms[j].element);
    for (int rb = 0; rb < b; ++rb) {
      const double c_rb = config_.rbf_min + delta * rb;
      const double w = sw * std::exp(-gamma * (r - c_rb) * (r - c_rb));
      if (w == 0.0) continue;
      const int channel = ej * b + rb;
      for (int l = 0; l <= l_max; ++l) {
        Tensor& part = f0.parts[static_cast<std::size_t>(l)];
        for (int m = -l; m <= l; ++m) {
          const so3::Complex yv = y[static_cast<std::size_t>(so3::sh_index(l, m))];
          part.at3(channel, m + l, 0) += w * yv.real();
          part.at3(channel, m + l, 1) += w * yv.imag();
        }
      }
    }
  }

  // Bag counts broadcast into the trailing l = 0 channel block.
  for (int e = 0; e < n_e; ++e) {
    f0.parts[0].at3(n_e * b + e, 0, 0) =
        config_.bag_scale * state.bag.count(elements_[static_cast<std::size_t>(e)]);
  }
  return f0;
}

PolicyAgent::Embedded PolicyAgent::embed(Tape& t, const nn::BoundParams& p,
                                         const EnvState& state) const {
  if (state.canvas.empty()) throw std::logic_error("PolicyAgent::embed: empty canvas");
  Embedded out;
  for (std::size_t i = 0; i < state.canvas.size(); ++i) {
    CovVar h = cov::cov_constant(t, initial_features(state, static_cast<int>(i)));
    for (int r = 0; r < config_.cg_rounds; ++r) {
      std::vector<Var> wa, wb;
      for (int l = 0; l <= config_.l_max; ++l) {
        wa.push_back(p["embed.r" + std::to_string(r) + ".wa.l" + std::to_string(l)]);
        wb.push_back(p["embed.r" + std::to_string(r) + ".wb.l" + std::to_string(l)]);
      }
      const CovVar y = cov::covariant_linear(t, wa, h);
      const CovVar yy = cov::cg_product_channelwise(t, y, y, config_.l_max);
      h = cov::covariant_linear(t, wb, cov::cov_concat(t, y, yy));
    }
    out.s_cov.push_back(h);
    out.s_inv.push_back(cov::t_inv(t, h));
  }
  return out;
}

ad::Var PolicyAgent::critic_from_invariants(Tape& t, const nn::BoundParams& p,
                                            const std::vector<Var>& s_inv) const {
  Var acc = t.constant(Tensor::zeros({config_.hidden}));
  for (Var si : s_inv) acc = ad::add(t, acc, mlp_phi_.apply(t, p, si));
  return mlp_rho_.apply(t, p, acc);
}

PolicyAgent::ForwardOut PolicyAgent::forward(Tape& t, const nn::BoundParams& p,
                                             const EnvState& state, const PolicySample* given,
                                             ActionMode mode, Rng* rng) const {
  const int n_e = static_cast<int>(elements_.size());
  ForwardOut out;
  out.logp_focal = t.constant(Tensor::scalar(0.0));
  out.logp_distance = t.constant(Tensor::scalar(0.0));
  out.logp_orientation = t.constant(Tensor::scalar(0.0));

  std::vector<bool> bag_mask(static_cast<std::size_t>(n_e));
  for (int e = 0; e < n_e; ++e) {
    bag_mask[static_cast<std::size_t>(e)] =
        state.bag.count(elements_[static_cast<std::size_t>(e)]) > 0;
  }

  if (state.canvas.empty()) {
    // First placement: learned categorical over the bag, position at origin.
    Var logp_vec = ad::masked_log_softmax(t, p["t0.logits"], bag_mask);
    int e_local;
    if (given != nullptr) {
      e_local = element_index(given->element);
    } else if (mode == ActionMode::kGreedy) {
      // Highest multiplicity wins; ties resolved by element order.
      e_local = 0;
      int best = -1;
      for (int e = 0; e < n_e; ++e) {
        const int c = state.bag.count(elements_[static_cast<std::size_t>(e)]);
        if (c > best) {
          best = c;
          e_local = e;
        }
      }
    } else {
      std::vector<double> w(static_cast<std::size_t>(n_e), 0.0);
      for (int e = 0; e < n_e; ++e) {
        if (bag_mask[static_cast<std::size_t>(e)]) {
          w[static_cast<std::size_t>(e)] = std::exp(t.val(logp_vec)[e]);
        }
      }
      e_local = rng->categorical(w);
    }
    if (!bag_mask[static_cast<std::size_t>(e_local)]) {
      throw std::invalid_argument("PolicyAgent: chosen element not in bag");
    }
    out.logp_element = ad::index(t, logp_vec, e_local);
    out.entropy = ad::entropy_from_log_probs(t, logp_vec, bag_mask);
    out.value = critic_from_invariants(t, p, {});
    out.sample.focal = -1;
    out.sample.element = elements_[static_cast<std::size_t>(e_local)];
    out.sample.distance = 0.0;
    out.sample.orientation = {0.0, 0.0, 1.0};
    out.sample.position = {0.0, 0.0, 0.0};
    out.sample.logp_element = t.val(out.logp_element)[0];
    out.sample.value = t.val(out.value)[0];
    return out;
  }

  const Embedded emb = embed(t, p, state);
  const int n_atoms = static_cast<int>(state.canvas.size());

  // Focal head: shared MLP logit per atom, masked softmax over the canvas.
  std::vector<Var> logit_scalars;
  for (int i = 0; i < n_atoms; ++i) {
    logit_scalars.push_back(mlp_f_.apply(t, p, emb.s_inv[static_cast<std::size_t>(i)]));
  }
  Var focal_logits = ad::concat(t, logit_scalars);
  const std::vector<bool> focal_mask = all_true(static_cast<std::size_t>(n_atoms));
  Var focal_logp_vec = ad::masked_log_softmax(t, focal_logits, focal_mask);

  int f;
  if (given != nullptr) {
    f = given->focal;
    if (f < 0 || f >= n_atoms) throw std::invalid_argument("PolicyAgent: bad focal index");
  } else if (mode == ActionMode::kGreedy) {
    f = 0;
    for (int i = 1; i < n_atoms; ++i) {
      if (t.val(focal_logits)[i] > t.val(focal_logits)[f]) f = i;
    }
  } else {
    std::vector<double> w(static_cast<std::size_t>(n_atoms));
    for (int i = 0; i < n_atoms; ++i) {
      w[static_cast<std::size_t>(i)] = std::exp(t.val(focal_logp_vec)[i]);
    }
    f = rng->categorical(w);
  }
  out.logp_focal = ad::index(t, focal_logp_vec, f);

  // Element head conditioned on the focal atom.
  Var element_logits = mlp_e_.apply(t, p, emb.s_inv[static_cast<std::size_t>(f)]);
  Var element_logp_vec = ad::masked_log_softmax(t, element_logits, bag_mask);
  int e_local;
  if (given != nullptr) {
    e_local = element_index(given->element);
  } else if (mode == ActionMode::kGreedy) {
    e_local = -1;
    for (int e = 0; e < n_e; ++e) {
      if (!bag_mask[static_cast<std::size_t>(e)]) continue;
      if (e_local < 0 || t.val(element_logits)[e] > t.val(element_logits)[e_local]) e_local = e;
    }
  } else {
    std::vector<double> w(static_cast<std::size_t>(n_e), 0.0);
    for (int e = 0; e < n_e; ++e) {
      if (bag_mask[static_cast<std::size_t>(e)]) {
        w[static_cast<std::size_t>(e)] = std::exp(t.val(element_logp_vec)[e]);
      }
    }
    e_local = rng->categorical(w);
  }
  if (!bag_mask[static_cast<std::size_t>(e_local)]) {
    throw std::invalid_argument("PolicyAgent: chosen element not in bag");
  }
  out.logp_element = ad::index(t, element_logp_vec, e_local);

  // Distance head on the element-sliced invariants.
  const int tau_e = config_.channels_per_element;
  CovVar s_cov_fe = cov::cov_slice_channels(t, emb.s_cov[static_cast<std::size_t>(f)],
                                            e_local * tau_e, (e_local + 1) * tau_e);
  Var s_inv_fe = cov::t_inv(t, s_cov_fe);
  Var mdn_out = mdn_.apply(t, p, s_inv_fe);
  const int m = config_.mixture_components;
  Var pi_logits = ad::slice(t, mdn_out, 0, m);
  Var mu_raw = ad::tanh_op(t, ad::slice(t, mdn_out, m, m));
  // Rescale means from [-1, 1] to [d_min, d_max].
  Var mu = ad::add_const(t, ad::scale(t, mu_raw, 0.5 * (config_.d_max - config_.d_min)),
                         0.5 * (config_.d_max + config_.d_min));
  Var log_sigma = p["sigma.log"];

  double d;
  if (given != nullptr) {
    d = given->distance;
  } else {
    // Componentwise sampling from the mixture; negative draws clip to the
    // configured floor.
    auto draw = [&]() {
      std::vector<double> w(static_cast<std::size_t>(m));
      double mx = -1e300;
      for (int i = 0; i < m; ++i) mx = std::max(mx, t.val(pi_logits)[i]);
      for (int i = 0; i < m; ++i) {
        w[static_cast<std::size_t>(i)] = std::exp(t.val(pi_logits)[i] - mx);
      }
      const int comp = rng->categorical(w);
      const double sigma = std::exp(t.val(log_sigma)[comp]);
      double v = t.val(mu)[comp] + sigma * rng->normal();
      if (v < 0.0) v = config_.distance_clip;
      return v;
    };
    auto mixture_log_density = [&](double x) {
      double zpi = 0.0;
      for (int i = 0; i < m; ++i) zpi += std::exp(t.val(pi_logits)[i]);
      double acc = 0.0;
      for (int i = 0; i < m; ++i) {
        const double sigma = std::exp(t.val(log_sigma)[i]);
        const double z = (x - t.val(mu)[i]) / sigma;
        acc += std::exp(t.val(pi_logits)[i]) / zpi * std::exp(-0.5 * z * z) /
               (sigma * std::sqrt(2.0 * M_PI));
      }
      return std::log(acc);
    };
    if (mode == ActionMode::kGreedy) {
      // Mode estimation by sampling: evaluate the density at S draws and
      // keep the densest one.
      double best_d = 0.0, best_lp = -1e300;
      for (int s = 0; s < config_.mode_samples; ++s) {
        const double cand = draw();
        const double lp = mixture_log_density(cand);
        if (lp > best_lp) {
          best_lp = lp;
          best_d = cand;
        }
      }
      d = best_d;
    } else {
      d = draw();
    }
  }
  out.logp_distance = ad::gmm_log_density(t, d, pi_logits, mu, log_sigma);

  // Orientation head: covariant conditioning then the spherical density.
  std::vector<Var> tcov_w;
  for (int l = 0; l <= config_.l_max; ++l) {
    tcov_w.push_back(p["tcov.w.l" + std::to_string(l)]);
  }
  CovVar rhat = cov::t_cov(t, t.constant(Tensor::scalar(d)), s_cov_fe, tcov_w);
  Var k = cov::cov_sum_sq(t, rhat);

  Var log_z = t.constant(Tensor::scalar(0.0));
  if (config_.density_variant == DensityVariant::kExpSquared) {
    Var f_grid = cov::sph_series_eval(t, rhat, grid_y_, static_cast<int>(grid_.size()));
    Var g_grid = ad::div_scalar(t, ad::complex_abs2(t, f_grid), k);
    Var expo = ad::scale(t, g_grid, -config_.beta);
    double mx = -1e300;
    for (long i = 0; i < t.val(expo).numel(); ++i) mx = std::max(mx, t.val(expo)[i]);
    Var shifted = ad::exp_op(t, ad::add_const(t, expo, -mx));
    log_z = ad::add_const(t, ad::log_op(t, ad::dot_const(t, shifted, grid_weights_)), mx);
  }

  Vec3 x_tilde;
  if (given != nullptr) {
    x_tilde = given->orientation;
  } else {
    const SphericalDensity density(cov::cov_values(t, rhat), config_.beta,
                                   config_.density_variant, grid_);
    SamplerConfig scfg;
    scfg.envelope_grid = config_.envelope_grid;
    scfg.safety = config_.envelope_safety;
    const OrientationSampler sampler(density, scfg);
    x_tilde = (mode == ActionMode::kGreedy)
                  ? sampler.estimate_mode(config_.mode_samples, *rng)
                  : sampler.sample(*rng).direction;
  }

  auto y_x = std::make_shared<std::vector<so3::Complex>>(
      static_cast<std::size_t>(so3::sh_count(config_.l_max)));
  so3::sph_harm_all(config_.l_max, so3::SphCoord::from_unit_vector(x_tilde), y_x->data());
  Var f_x = cov::sph_series_eval(t, rhat, y_x, 1);
  Var g_x = ad::index(t, ad::div_scalar(t, ad::complex_abs2(t, f_x), k), 0);
  if (config_.density_variant == DensityVariant::kExpSquared) {
    out.logp_orientation = ad::sub(t, ad::scale(t, g_x, -config_.beta), log_z);
  } else {
    out.logp_orientation = ad::log_op(t, g_x);
  }

  out.entropy = ad::add(t, ad::entropy_from_log_probs(t, focal_logp_vec, focal_mask),
                        ad::entropy_from_log_probs(t, element_logp_vec, bag_mask));
  out.value = critic_from_invariants(t, p, emb.s_inv);

  out.sample.focal = f;
  out.sample.element = elements_[static_cast<std::size_t>(e_local)];
  out.sample.distance = d;
  out.sample.orientation = x_tilde;
  out.sample.position =
      state.canvas.atoms[static_cast<std::size_t>(f)].position + x_tilde * d;
  out.sample.logp_focal = t.val(out.logp_focal)[0];
  out.sample.logp_element = t.val(out.logp_element)[0];
  out.sample.logp_distance = t.val(out.logp_distance)[0];
  out.sample.logp_orientation = t.val(out.logp_orientation)[0];
  out.sample.value = t.val(out.value)[0];
  return out;
}

PolicySample PolicyAgent::act(const EnvState& state, ActionMode mode, Rng& rng) const {
  if (state.bag.empty()) throw std::invalid_argument("PolicyAgent::act: bag empty");
  Tape t(false);
  const nn::BoundParams p(t, params_);
  return forward(t, p, state, nullptr, mode, &rng).sample;
}

EvalVars PolicyAgent::evaluate(Tape& t, const nn::BoundParams& p, const EnvState& state,
                               const PolicySample& action) const {
  ForwardOut f = forward(t, p, state, &action, ActionMode::kSample, nullptr);
  return EvalVars{ad::add(t, ad::add(t, f.logp_focal, f.logp_element),
                          ad::add(t, f.logp_distance, f.logp_orientation)),
                  f.entropy, f.value};
}

ad::Var PolicyAgent::value(Tape& t, const nn::BoundParams& p, const EnvState& state) const {
  if (state.canvas.empty()) return critic_from_invariants(t, p, {});
  const Embedded emb = embed(t, p, state);
  return critic_from_invariants(t, p, emb.s_inv);
}

double PolicyAgent::value_plain(const EnvState& state) const {
  Tape t(false);
  const nn::BoundParams p(t, params_);
  return t.val(value(t, p, state))[0];
}

SphericalDensity PolicyAgent::orientation_density(const EnvState& state, int focal,
                                                  int element, double distance) const {
  Tape t(false);
  const nn::BoundParams p(t, params_);
  const Embedded emb = embed(t, p, state);
  const int e_local = element_index(element);
  const int tau_e = config_.channels_per_element;
  CovVar s_cov_fe = cov::cov_slice_channels(t, emb.s_cov[static_cast<std::size_t>(focal)],
                                            e_local * tau_e, (e_local + 1) * tau_e);
  std::vector<Var> tcov_w;
  for (int l = 0; l <= config_.l_max; ++l) {
    tcov_w.push_back(p["tcov.w.l" + std::to_string(l)]);
  }
  CovVar rhat = cov::t_cov(t, t.constant(Tensor::scalar(distance)), s_cov_fe, tcov_w);
  return SphericalDensity(cov::cov_values(t, rhat), config_.beta, config_.density_variant,
                          grid_);
}

HeadReport PolicyAgent::head_report(const EnvState& state, int focal, int element) const {
  Tape t(false);
  const nn::BoundParams p(t, params_);
  HeadReport rep;
  const int n_e = static_cast<int>(elements_.size());
  std::vector<bool> bag_mask(static_cast<std::size_t>(n_e));
  for (int e = 0; e < n_e; ++e) {
    bag_mask[static_cast<std::size_t>(e)] =
        state.bag.count(elements_[static_cast<std::size_t>(e)]) > 0;
  }

  if (state.canvas.empty()) {
    Var lp = ad::masked_log_softmax(t, p["t0.logits"], bag_mask);
    for (int e = 0; e < n_e; ++e) {
      rep.element_probs.push_back(
          bag_mask[static_cast<std::size_t>(e)] ? std::exp(t.val(lp)[e]) : 0.0);
    }
    return rep;
  }

  const Embedded emb = embed(t, p, state);
  const int n_atoms = static_cast<int>(state.canvas.size());
  std::vector<Var> logit_scalars;
  for (int i = 0; i < n_atoms; ++i) {
    logit_scalars.push_back(mlp_f_.apply(t, p, emb.s_inv[static_cast<std::size_t>(i)]));
  }
  Var focal_probs = ad::masked_softmax(t, ad::concat(t, logit_scalars),
                                       all_true(static_cast<std::size_t>(n_atoms)));
  for (int i = 0; i < n_atoms; ++i) rep.focal_probs.push_back(t.val(focal_probs)[i]);

  Var element_probs = ad::masked_softmax(
      t, mlp_e_.apply(t, p, emb.s_inv[static_cast<std::size_t>(focal)]), bag_mask);
  for (int e = 0; e < n_e; ++e) rep.element_probs.push_back(t.val(element_probs)[e]);

  const int e_local = element_index(element);
  const int tau_e = config_.channels_per_element;
  CovVar s_cov_fe = cov::cov_slice_channels(t, emb.s_cov[static_cast<std::size_t>(focal)],
                                            e_local * tau_e, (e_local + 1) * tau_e);
  Var mdn_out = mdn_.apply(t, p, cov::t_inv(t, s_cov_fe));
  const int m = config_.mixture_components;
  Var pi = ad::masked_softmax(t, ad::slice(t, mdn_out, 0, m),
                              all_true(static_cast<std::size_t>(m)));
  Var mu_raw = ad::tanh_op(t, ad::slice(t, mdn_out, m, m));
  for (int i = 0; i < m; ++i) {
    rep.mixture_weights.push_back(t.val(pi)[i]);
    rep.mixture_means.push_back(0.5 * (config_.d_max + config_.d_min) +
                                0.5 * (config_.d_max - config_.d_min) * t.val(mu_raw)[i]);
    rep.mixture_stds.push_back(std::exp(params_.get("sigma.log")[i]));
  }
  return rep;
}

}  // namespace molgym
