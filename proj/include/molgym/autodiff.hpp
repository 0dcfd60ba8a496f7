#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "molgym/tensor.hpp"

namespace molgym::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Define-by-run tape of tensor-valued nodes. Appending order is a
/// topological order, so the backward pass is a single reverse sweep that
/// visits each node exactly once and accumulates gradients additively.
/// A tape built with grad_enabled = false records values only, which is the
/// rollout fast path; the same op code serves both modes.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, Var)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var leaf(Tensor value) { return push(std::move(value), grad_enabled_, {}, nullptr); }
  Var constant(Tensor value) { return push(std::move(value), false, {}, nullptr); }

  Var make(Tensor value, std::vector<Var> parents, BackFn back) {
    bool needs = false;
    if (grad_enabled_) {
      for (Var p : parents)
        if (requires_grad(p)) {
          needs = true;
          break;
        }
    }
    return push(std::move(value), needs, std::move(parents), needs ? std::move(back) : nullptr);
  }

  const Tensor& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

  bool requires_grad(Var v) const {
    return nodes_[static_cast<std::size_t>(v.id)].requires_grad;
  }

  /// Gradient buffer (allocated zero on first access). Only meaningful for
  /// requires-grad nodes after backward().
  Tensor& grad(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
  }

  bool has_grad(Var v) const {
    return !nodes_[static_cast<std::size_t>(v.id)].grad.data.empty();
  }

  /// Accumulates g into v's gradient if v participates in differentiation.
  void accum(Var v, const Tensor& g) {
    if (!requires_grad(v)) return;
    Tensor& dst = grad(v);
    for (long i = 0; i < dst.numel(); ++i) dst[i] += g[i];
  }

  void accum_at(Var v, long index, double g) {
    if (!requires_grad(v)) return;
    grad(v)[index] += g;
  }

  /// Backpropagates from a scalar root. Gradients are zeroed first, so a
  /// second call reproduces the same result.
  void backward(Var root) {
    if (!grad_enabled_) throw std::logic_error("backward on a grad-disabled tape");
    if (val(root).numel() != 1) throw std::invalid_argument("backward root must be scalar");
    for (Node& n : nodes_) {
      if (!n.grad.data.empty()) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
    grad(root)[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.data.empty() || !n.back) continue;
      n.back(*this, Var{i});
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Var> parents;
    BackFn back;
    bool requires_grad = false;
  };

  Var push(Tensor value, bool needs, std::vector<Var> parents, BackFn back) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.back = std::move(back);
    n.requires_grad = needs;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// ---- elementwise and reduction primitives ----

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var neg(Tape& t, Var a);
Var scale(Tape& t, Var a, double c);
Var add_const(Tape& t, Var a, double c);
/// Elementwise c - a.
Var rsub_const(Tape& t, double c, Var a);
Var relu(Tape& t, Var a);
Var tanh_op(Tape& t, Var a);
Var exp_op(Tape& t, Var a);
Var log_op(Tape& t, Var a);
Var square(Tape& t, Var a);
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var dot(Tape& t, Var a, Var b);
/// Weighted sum with constant weights (w not differentiated).
Var dot_const(Tape& t, Var a, const Tensor& w);
/// x * s with scalar s broadcast over x.
Var mul_scalar(Tape& t, Var x, Var s);
/// x / s with scalar s broadcast over x.
Var div_scalar(Tape& t, Var x, Var s);
Var concat(Tape& t, std::span<const Var> parts);
Var stack_scalars(Tape& t, std::span<const Var> scalars);
/// Scalar element a[i].
Var index(Tape& t, Var a, long i);
/// Contiguous 1-D slice a[start : start+len].
Var slice(Tape& t, Var a, long start, long len);
/// Per-row squared modulus of a complex [n, 2] tensor -> [n].
Var complex_abs2(Tape& t, Var a);

// ---- dense layers ----

/// W [m, n] * x [n] + b [m].
Var affine(Tape& t, Var w, Var b, Var x);
/// A [m, k] * B [k, n].
Var matmul(Tape& t, Var a, Var b);

// ---- categorical heads ----

/// Probabilities with masked-out entries exactly zero; the rest renormalized.
/// Throws std::domain_error when no entry is valid. Masked-out logits get
/// exactly zero gradient.
Var masked_softmax(Tape& t, Var logits, const std::vector<bool>& mask);

/// Log-probabilities; masked-out entries hold -infinity and are excluded
/// from gradients. Numerically stable shift by the max valid logit.
Var masked_log_softmax(Tape& t, Var logits, const std::vector<bool>& mask);

/// Entropy -sum p log p over valid entries of a masked log-softmax result.
Var entropy_from_log_probs(Tape& t, Var log_probs, const std::vector<bool>& mask);

/// log sum_m exp(v_m), stable (max-shifted).
Var logsumexp(Tape& t, Var v);

/// Log-density of a Gaussian mixture at fixed point x: mixture logits
/// pi_logits [M], means mu [M], and log standard deviations log_sigma [M].
Var gmm_log_density(Tape& t, double x, Var pi_logits, Var mu, Var log_sigma);

}  // namespace molgym::ad
