#include "molgym/nn.hpp"

#include <cmath>

namespace molgym::nn {

Tensor orthogonal_init(int rows, int cols, Rng& rng, double gain) {
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  // Gaussian [big, small], orthonormalize columns by modified Gram-Schmidt.
  std::vector<std::vector<double>> q(static_cast<std::size_t>(big),
                                     std::vector<double>(static_cast<std::size_t>(small)));
  for (auto& row : q)
    for (double& v : row) v = rng.normal();
  for (int j = 0; j < small; ++j) {
    for (int k = 0; k < j; ++k) {
      double d = 0.0;
      for (int i = 0; i < big; ++i)
        d += q[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
             q[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      for (int i = 0; i < big; ++i)
        q[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -=
            d * q[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    double n = 0.0;
    for (int i = 0; i < big; ++i) {
      const double v = q[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      n += v * v;
    }
    n = std::sqrt(std::max(n, 1e-300));
    for (int i = 0; i < big; ++i)
      q[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] /= n;
  }
  Tensor w = Tensor::zeros({rows, cols});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const double v = (rows >= cols)
                           ? q[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                           : q[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
      w.at2(i, j) = gain * v;
    }
  return w;
}

Tensor complex_glorot_init(int rows, int cols, Rng& rng) {
  Tensor w = Tensor::zeros({rows, cols, 2});
  const double std = 1.0 / std::sqrt(2.0 * cols);
  for (long i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
  return w;
}

void Mlp::register_params(ParamStore& store, Rng& rng) const {
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const int in = widths[k], out = widths[k + 1];
    store.add(prefix + ".w" + std::to_string(k), orthogonal_init(out, in, rng));
    store.add(prefix + ".b" + std::to_string(k), Tensor::zeros({out}));
  }
}

ad::Var Mlp::apply(ad::Tape& t, const BoundParams& p, ad::Var x) const {
  ad::Var h = x;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    h = ad::affine(t, p[prefix + ".w" + std::to_string(k)],
                   p[prefix + ".b" + std::to_string(k)], h);
    if (k + 2 < widths.size()) h = ad::relu(t, h);
  }
  return h;
}

void Adam::step(ParamStore& store, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, param] : store.all()) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    Tensor& m = m_.try_emplace(name, Tensor::zeros(param.shape)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor::zeros(param.shape)).first->second;
    for (long i = 0; i < param.numel(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      param[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    (void)name;
    for (long i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads) {
      (void)name;
      for (long i = 0; i < g.numel(); ++i) g[i] *= s;
    }
  }
  return norm;
}

}  // namespace molgym::nn
