#include "molgym/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace molgym::ad {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

void check_scalar(const Tensor& a, const char* op) {
  if (a.numel() != 1) throw std::invalid_argument(std::string(op) + ": expected scalar");
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  const Tensor& va = t.val(a);
  check_same_shape(va, t.val(b), "add");
  Tensor out = va;
  const Tensor& vb = t.val(b);
  for (long i = 0; i < out.numel(); ++i) out[i] += vb[i];
  return t.make(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    tp.accum(a, g);
    tp.accum(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& va = t.val(a);
  check_same_shape(va, t.val(b), "sub");
  Tensor out = va;
  const Tensor& vb = t.val(b);
  for (long i = 0; i < out.numel(); ++i) out[i] -= vb[i];
  return t.make(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    tp.accum(a, g);
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (long i = 0; i < gb.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& va = t.val(a);
  check_same_shape(va, t.val(b), "mul");
  Tensor out = va;
  const Tensor& vb = t.val(b);
  for (long i = 0; i < out.numel(); ++i) out[i] *= vb[i];
  return t.make(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& va = tp.val(a);
    const Tensor& vb = tp.val(b);
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (long i = 0; i < ga.numel(); ++i) ga[i] += g[i] * vb[i];
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (long i = 0; i < gb.numel(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var neg(Tape& t, Var a) { return scale(t, a, -1.0); }

Var scale(Tape& t, Var a, double c) {
  Tensor out = t.val(a);
  for (long i = 0; i < out.numel(); ++i) out[i] *= c;
  return t.make(std::move(out), {a}, [a, c](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < ga.numel(); ++i) ga[i] += c * g[i];
  });
}

Var add_const(Tape& t, Var a, double c) {
  Tensor out = t.val(a);
  for (long i = 0; i < out.numel(); ++i) out[i] += c;
  return t.make(std::move(out), {a},
                [a](Tape& tp, Var self) { tp.accum(a, tp.grad(self)); });
}

Var rsub_const(Tape& t, double c, Var a) {
  Tensor out = t.val(a);
  for (long i = 0; i < out.numel(); ++i) out[i] = c - out[i];
  return t.make(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < ga.numel(); ++i) ga[i] -= g[i];
  });
}

Var relu(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (long i = 0; i < out.numel(); ++i) out[i] = std::max(0.0, out[i]);
  return t.make(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& v = tp.val(self);
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < ga.numel(); ++i)
      if (v[i] > 0.0) ga[i] += g[i];
  });
}

Var tanh_op(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (long i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  return t.make(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.val(self);
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < ga.numel(); ++i) ga[i] += (1.0 - y[i] * y[i]) * g[i];
  });
}

Var exp_op(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (long i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  return t.make(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.val(self);
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < ga.numel(); ++i) ga[i] += y[i] * g[i];
  });
}

Var log_op(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (long i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
  return t.make(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& v = tp.val(a);
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < ga.numel(); ++i) ga[i] += g[i] / v[i];
  });
}

Var square(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (long i = 0; i < out.numel(); ++i) out[i] *= out[i];
  return t.make(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& v = tp.val(a);
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < ga.numel(); ++i) ga[i] += 2.0 * v[i] * g[i];
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  const Tensor& v = t.val(a);
  for (long i = 0; i < v.numel(); ++i) s += v[i];
  return t.make(Tensor::scalar(s), {a}, [a](Tape& tp, Var self) {
    const double g = tp.grad(self)[0];
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

Var mean(Tape& t, Var a) {
  const long n = t.val(a).numel();
  return scale(t, sum(t, a), 1.0 / static_cast<double>(n));
}

Var dot(Tape& t, Var a, Var b) {
  const Tensor& va = t.val(a);
  check_same_shape(va, t.val(b), "dot");
  const Tensor& vb = t.val(b);
  double s = 0.0;
  for (long i = 0; i < va.numel(); ++i) s += va[i] * vb[i];
  return t.make(Tensor::scalar(s), {a, b}, [a, b](Tape& tp, Var self) {
    const double g = tp.grad(self)[0];
    const Tensor& va = tp.val(a);
    const Tensor& vb = tp.val(b);
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (long i = 0; i < ga.numel(); ++i) ga[i] += g * vb[i];
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (long i = 0; i < gb.numel(); ++i) gb[i] += g * va[i];
    }
  });
}

Var dot_const(Tape& t, Var a, const Tensor& w) {
  const Tensor& va = t.val(a);
  if (va.numel() != w.numel()) throw std::invalid_argument("dot_const: size mismatch");
  double s = 0.0;
  for (long i = 0; i < va.numel(); ++i) s += va[i] * w[i];
  return t.make(Tensor::scalar(s), {a}, [a, w](Tape& tp, Var self) {
    const double g = tp.grad(self)[0];
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < ga.numel(); ++i) ga[i] += g * w[i];
  });
}

Var mul_scalar(Tape& t, Var x, Var s) {
  check_scalar(t.val(s), "mul_scalar");
  const double sv = t.val(s)[0];
  Tensor out = t.val(x);
  for (long i = 0; i < out.numel(); ++i) out[i] *= sv;
  return t.make(std::move(out), {x, s}, [x, s](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& vx = tp.val(x);
    const double sv = tp.val(s)[0];
    if (tp.requires_grad(x)) {
      Tensor& gx = tp.grad(x);
      for (long i = 0; i < gx.numel(); ++i) gx[i] += sv * g[i];
    }
    if (tp.requires_grad(s)) {
      double acc = 0.0;
      for (long i = 0; i < vx.numel(); ++i) acc += vx[i] * g[i];
      tp.accum_at(s, 0, acc);
    }
  });
}

Var div_scalar(Tape& t, Var x, Var s) {
  check_scalar(t.val(s), "div_scalar");
  const double sv = t.val(s)[0];
  Tensor out = t.val(x);
  for (long i = 0; i < out.numel(); ++i) out[i] /= sv;
  return t.make(std::move(out), {x, s}, [x, s](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.val(self);
    const double sv = tp.val(s)[0];
    if (tp.requires_grad(x)) {
      Tensor& gx = tp.grad(x);
      for (long i = 0; i < gx.numel(); ++i) gx[i] += g[i] / sv;
    }
    if (tp.requires_grad(s)) {
      double acc = 0.0;
      for (long i = 0; i < y.numel(); ++i) acc -= y[i] * g[i] / sv;
      tp.accum_at(s, 0, acc);
    }
  });
}

Var concat(Tape& t, std::span<const Var> parts) {
  long total = 0;
  for (Var p : parts) total += t.val(p).numel();
  Tensor out = Tensor::zeros({static_cast<int>(total)});
  long off = 0;
  for (Var p : parts) {
    const Tensor& v = t.val(p);
    for (long i = 0; i < v.numel(); ++i) out[off + i] = v[i];
    off += v.numel();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return t.make(std::move(out), parents, [parents](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    long off = 0;
    for (Var p : parents) {
      const long n = tp.val(p).numel();
      if (tp.requires_grad(p)) {
        Tensor& gp = tp.grad(p);
        for (long i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var stack_scalars(Tape& t, std::span<const Var> scalars) {
  return concat(t, scalars);
}

Var index(Tape& t, Var a, long i) {
  const Tensor& v = t.val(a);
  if (i < 0 || i >= v.numel()) throw std::out_of_range("index: out of range");
  return t.make(Tensor::scalar(v[i]), {a}, [a, i](Tape& tp, Var self) {
    tp.accum_at(a, i, tp.grad(self)[0]);
  });
}

Var slice(Tape& t, Var a, long start, long len) {
  const Tensor& v = t.val(a);
  if (start < 0 || len < 1 || start + len > v.numel()) {
    throw std::out_of_range("slice: out of range");
  }
  Tensor out = Tensor::zeros({static_cast<int>(len)});
  for (long i = 0; i < len; ++i) out[i] = v[start + i];
  return t.make(std::move(out), {a}, [a, start, len](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (long i = 0; i < len; ++i) ga[start + i] += g[i];
  });
}

Var complex_abs2(Tape& t, Var a) {
  const Tensor& v = t.val(a);
  if (v.ndim() != 2 || v.dim(1) != 2) throw std::invalid_argument("complex_abs2: want [n, 2]");
  const int n = v.dim(0);
  Tensor out = Tensor::zeros({n});
  for (int i = 0; i < n; ++i) {
    out[i] = v.at2(i, 0) * v.at2(i, 0) + v.at2(i, 1) * v.at2(i, 1);
  }
  return t.make(std::move(out), {a}, [a, n](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& v = tp.val(a);
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad(a);
    for (int i = 0; i < n; ++i) {
      ga.at2(i, 0) += 2.0 * v.at2(i, 0) * g[i];
      ga.at2(i, 1) += 2.0 * v.at2(i, 1) * g[i];
    }
  });
}

Var affine(Tape& t, Var w, Var b, Var x) {
  const Tensor& vw = t.val(w);
  const Tensor& vb = t.val(b);
  const Tensor& vx = t.val(x);
  if (vw.ndim() != 2 || vw.dim(1) != vx.numel() || vb.numel() != vw.dim(0)) {
    throw std::invalid_argument("affine: shape mismatch");
  }
  const int m = vw.dim(0), n = vw.dim(1);
  Tensor out = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    double s = vb[i];
    const double* row = vw.data.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) s += row[j] * vx[j];
    out[i] = s;
  }
  return t.make(std::move(out), {w, b, x}, [w, b, x, m, n](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& vw = tp.val(w);
    const Tensor& vx = tp.val(x);
    if (tp.requires_grad(w)) {
      Tensor& gw = tp.grad(w);
      for (int i = 0; i < m; ++i) {
        double* row = gw.data.data() + static_cast<std::size_t>(i) * n;
        const double gi = g[i];
        for (int j = 0; j < n; ++j) row[j] += gi * vx[j];
      }
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (int i = 0; i < m; ++i) gb[i] += g[i];
    }
    if (tp.requires_grad(x)) {
      Tensor& gx = tp.grad(x);
      for (int i = 0; i < m; ++i) {
        const double* row = vw.data.data() + static_cast<std::size_t>(i) * n;
        const double gi = g[i];
        for (int j = 0; j < n; ++j) gx[j] += gi * row[j];
      }
    }
  });
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& va = t.val(a);
  const Tensor& vb = t.val(b);
  if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(0)) {
    throw std::invalid_argument("matmul: shape mismatch");
  }
  const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = va.at2(i, p);
      for (int j = 0; j < n; ++j) out.at2(i, j) += aip * vb.at2(p, j);
    }
  return t.make(std::move(out), {a, b}, [a, b, m, k, n](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& va = tp.val(a);
    const Tensor& vb = tp.val(b);
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += g.at2(i, j) * vb.at2(p, j);
          ga.at2(i, p) += s;
        }
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i) s += va.at2(i, p) * g.at2(i, j);
          gb.at2(p, j) += s;
        }
    }
  });
}

Var masked_softmax(Tape& t, Var logits, const std::vector<bool>& mask) {
  const Tensor& v = t.val(logits);
  if (static_cast<long>(mask.size()) != v.numel()) {
    throw std::invalid_argument("masked_softmax: mask size mismatch");
  }
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (long i = 0; i < v.numel(); ++i)
    if (mask[static_cast<std::size_t>(i)]) {
      any = true;
      mx = std::max(mx, v[i]);
    }
  if (!any) throw std::domain_error("masked_softmax: all entries masked out");
  Tensor out = Tensor::zeros(v.shape);
  double z = 0.0;
  for (long i = 0; i < v.numel(); ++i)
    if (mask[static_cast<std::size_t>(i)]) {
      out[i] = std::exp(v[i] - mx);
      z += out[i];
    }
  for (long i = 0; i < v.numel(); ++i) out[i] /= z;
  return t.make(std::move(out), {logits}, [logits, mask](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& p = tp.val(self);
    if (!tp.requires_grad(logits)) return;
    double gp = 0.0;
    for (long i = 0; i < p.numel(); ++i) gp += g[i] * p[i];
    Tensor& gl = tp.grad(logits);
    for (long i = 0; i < p.numel(); ++i)
      if (mask[static_cast<std::size_t>(i)]) gl[i] += p[i] * (g[i] - gp);
  });
}

Var masked_log_softmax(Tape& t, Var logits, const std::vector<bool>& mask) {
  const Tensor& v = t.val(logits);
  if (static_cast<long>(mask.size()) != v.numel()) {
    throw std::invalid_argument("masked_log_softmax: mask size mismatch");
  }
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (long i = 0; i < v.numel(); ++i)
    if (mask[static_cast<std::size_t>(i)]) {
      any = true;
      mx = std::max(mx, v[i]);
    }
  if (!any) throw std::domain_error("masked_log_softmax: all entries masked out");
  double z = 0.0;
  for (long i = 0; i < v.numel(); ++i)
    if (mask[static_cast<std::size_t>(i)]) z += std::exp(v[i] - mx);
  const double logz = std::log(z) + mx;
  Tensor out = Tensor::zeros(v.shape);
  for (long i = 0; i < v.numel(); ++i) {
    out[i] = mask[static_cast<std::size_t>(i)] ? v[i] - logz
                                               : -std::numeric_limits<double>::infinity();
  }
  return t.make(std::move(out), {logits}, [logits, mask](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& lp = tp.val(self);
    if (!tp.requires_grad(logits)) return;
    double gsum = 0.0;
    for (long i = 0; i < lp.numel(); ++i)
      if (mask[static_cast<std::size_t>(i)]) gsum += g[i];
    Tensor& gl = tp.grad(logits);
    for (long i = 0; i < lp.numel(); ++i)
      if (mask[static_cast<std::size_t>(i)]) gl[i] += g[i] - std::exp(lp[i]) * gsum;
  });
}

Var entropy_from_log_probs(Tape& t, Var log_probs, const std::vector<bool>& mask) {
  const Tensor& lp = t.val(log_probs);
  double h = 0.0;
  for (long i = 0; i < lp.numel(); ++i)
    if (mask[static_cast<std::size_t>(i)]) h -= std::exp(lp[i]) * lp[i];
  return t.make(Tensor::scalar(h), {log_probs}, [log_probs, mask](Tape& tp, Var self) {
    const double g = tp.grad(self)[0];
    const Tensor& lp = tp.val(log_probs);
    if (!tp.requires_grad(log_probs)) return;
    Tensor& gl = tp.grad(log_probs);
    for (long i = 0; i < lp.numel(); ++i)
      if (mask[static_cast<std::size_t>(i)]) gl[i] -= g * std::exp(lp[i]) * (1.0 + lp[i]);
  });
}

Var logsumexp(Tape& t, Var v) {
  const Tensor& x = t.val(v);
  double mx = -std::numeric_limits<double>::infinity();
  for (long i = 0; i < x.numel(); ++i) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (long i = 0; i < x.numel(); ++i) s += std::exp(x[i] - mx);
  const double out = std::log(s) + mx;
  return t.make(Tensor::scalar(out), {v}, [v](Tape& tp, Var self) {
    const double g = tp.grad(self)[0];
    const double lse = tp.val(self)[0];
    const Tensor& x = tp.val(v);
    if (!tp.requires_grad(v)) return;
    Tensor& gv = tp.grad(v);
    for (long i = 0; i < x.numel(); ++i) gv[i] += g * std::exp(x[i] - lse);
  });
}

Var gmm_log_density(Tape& t, double x, Var pi_logits, Var mu, Var log_sigma) {
  const long m = t.val(pi_logits).numel();
  if (t.val(mu).numel() != m || t.val(log_sigma).numel() != m) {
    throw std::invalid_argument("gmm_log_density: component count mismatch");
  }
  const std::vector<bool> all(static_cast<std::size_t>(m), true);
  Var log_pi = masked_log_softmax(t, pi_logits, all);
  // z_i = (x - mu_i) * exp(-log_sigma_i)
  Var z = mul(t, rsub_const(t, x, mu), exp_op(t, neg(t, log_sigma)));
  // log N(x; mu_i, sigma_i) = -0.5 z^2 - log_sigma - 0.5 log(2 pi)
  Var log_norm = add_const(t, sub(t, scale(t, square(t, z), -0.5), log_sigma),
                           -0.5 * std::log(2.0 * M_PI));
  return logsumexp(t, add(t, log_pi, log_norm));
}

}  // namespace molgym::ad
