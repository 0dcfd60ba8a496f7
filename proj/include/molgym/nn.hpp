#pragma once

#include <map>
#include <string>
#include <vector>

#include "molgym/autodiff.hpp"
#include "molgym/rng.hpp"
#include "molgym/tensor.hpp"

namespace molgym::nn {

/// Named parameter tensors. Ordered by name, which fixes the layout used by
/// checkpoints, the optimizer state, and gradient-norm reductions.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init) {
    auto [it, inserted] = params_.emplace(name, std::move(init));
    if (!inserted) throw std::invalid_argument("ParamStore: duplicate " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParamStore: missing " + name);
    return it->second;
  }
  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParamStore: missing " + name);
    return it->second;
  }

  const std::map<std::string, Tensor>& all() const { return params_; }
  std::map<std::string, Tensor>& all() { return params_; }

 private:
  std::map<std::string, Tensor> params_;
};

/// Parameters leafed onto one tape, keyed by name. Each parameter becomes a
/// single leaf shared by every use in the tape so gradients accumulate
/// across a whole batch.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ParamStore& store) {
    for (const auto& [name, tensor] : store.all()) {
      vars_.emplace(name, tape.leaf(tensor));
    }
  }

  ad::Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::out_of_range("BoundParams: missing " + name);
    return it->second;
  }

  const std::map<std::string, ad::Var>& all() const { return vars_; }

 private:
  std::map<std::string, ad::Var> vars_;
};

/// Semi-orthogonal [rows, cols] matrix (orthonormal rows or columns,
/// whichever fit), Gaussian-seeded with modified Gram-Schmidt.
Tensor orthogonal_init(int rows, int cols, Rng& rng, double gain = 1.0);

/// Complex matrix stored as [rows, cols, 2], entries scaled so a random
/// input keeps its norm in expectation.
Tensor complex_glorot_init(int rows, int cols, Rng& rng);

/// Multi-layer perceptron with ReLU hidden activations and linear output.
/// Parameters are registered as <prefix>.w<k> / <prefix>.b<k>.
struct Mlp {
  std::string prefix;
  std::vector<int> widths;  // e.g. {in, 128, out}

  void register_params(ParamStore& store, Rng& rng) const;
  ad::Var apply(ad::Tape& t, const BoundParams& p, ad::Var x) const;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name.
class Adam {
 public:
  explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store, const std::map<std::string, Tensor>& grads);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

/// Scales gradients so the global L2 norm is at most max_norm; returns the
/// pre-clip norm.
double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm);

}  // namespace molgym::nn
