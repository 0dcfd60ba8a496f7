#include "molgym/covariant.hpp"

#include <cmath>
#include <stdexcept>

namespace molgym::cov {

using ad::Tape;
using ad::Var;

CovTensor CovTensor::zeros(int l_max, const std::vector<int>& channels_per_l) {
  CovTensor x;
  for (int l = 0; l <= l_max; ++l) {
    x.parts.push_back(Tensor::zeros({channels_per_l[static_cast<std::size_t>(l)], 2 * l + 1, 2}));
  }
  return x;
}

CovTensor CovTensor::zeros_uniform(int l_max, int channels) {
  std::vector<int> c(static_cast<std::size_t>(l_max) + 1, channels);
  return zeros(l_max, c);
}

CovVar cov_leaf(Tape& t, const CovTensor& x) {
  CovVar v;
  for (const Tensor& p : x.parts) v.parts.push_back(t.leaf(p));
  return v;
}

CovVar cov_constant(Tape& t, const CovTensor& x) {
  CovVar v;
  for (const Tensor& p : x.parts) v.parts.push_back(t.constant(p));
  return v;
}

CovTensor cov_values(const Tape& t, const CovVar& x) {
  CovTensor out;
  for (Var p : x.parts) out.parts.push_back(t.val(p));
  return out;
}

CovVar covariant_linear(Tape& t, const std::vector<Var>& w, const CovVar& x) {
  if (w.size() != x.parts.size()) {
    throw std::invalid_argument("covariant_linear: weight count != degree count");
  }
  CovVar out;
  for (int l = 0; l <= x.l_max(); ++l) {
    Var wl = w[static_cast<std::size_t>(l)];
    Var xl = x.parts[static_cast<std::size_t>(l)];
    const Tensor& vw = t.val(wl);
    const Tensor& vx = t.val(xl);
    if (vw.ndim() != 3 || vw.dim(2) != 2 || vx.ndim() != 3 || vx.dim(2) != 2 ||
        vw.dim(1) != vx.dim(0)) {
      throw std::invalid_argument("covariant_linear: shape mismatch at l=" + std::to_string(l));
    }
    const int co = vw.dim(0), ci = vw.dim(1), nm = vx.dim(1);
    Tensor res = Tensor::zeros({co, nm, 2});
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < ci; ++i) {
        const double wr = vw.at3(o, i, 0), wi = vw.at3(o, i, 1);
        for (int m = 0; m < nm; ++m) {
          const double xr = vx.at3(i, m, 0), xi = vx.at3(i, m, 1);
          res.at3(o, m, 0) += wr * xr - wi * xi;
          res.at3(o, m, 1) += wr * xi + wi * xr;
        }
      }
    out.parts.push_back(
        t.make(std::move(res), {wl, xl}, [wl, xl, co, ci, nm](Tape& tp, Var self) {
          const Tensor& g = tp.grad(self);
          const Tensor& vw = tp.val(wl);
          const Tensor& vx = tp.val(xl);
          if (tp.requires_grad(wl)) {
            Tensor& gw = tp.grad(wl);
            for (int o = 0; o < co; ++o)
              for (int i = 0; i < ci; ++i) {
                double ar = 0.0, ai = 0.0;
                for (int m = 0; m < nm; ++m) {
                  const double xr = vx.at3(i, m, 0), xi = vx.at3(i, m, 1);
                  const double gr = g.at3(o, m, 0), gi = g.at3(o, m, 1);
                  ar += gr * xr + gi * xi;
                  ai += -gr * xi + gi * xr;
                }
                gw.at3(o, i, 0) += ar;
                gw.at3(o, i, 1) += ai;
              }
          }
          if (tp.requires_grad(xl)) {
            Tensor& gx = tp.grad(xl);
            for (int i = 0; i < ci; ++i)
              for (int m = 0; m < nm; ++m) {
                double ar = 0.0, ai = 0.0;
                for (int o = 0; o < co; ++o) {
                  const double wr = vw.at3(o, i, 0), wi = vw.at3(o, i, 1);
                  const double gr = g.at3(o, m, 0), gi = g.at3(o, m, 1);
                  ar += gr * wr + gi * wi;
                  ai += -gr * wi + gi * wr;
                }
                gx.at3(i, m, 0) += ar;
                gx.at3(i, m, 1) += ai;
              }
          }
        }));
  }
  return out;
}

CovVar cg_product_channelwise(Tape& t, const CovVar& a, const CovVar& b, int l_max_out) {
  const int la = a.l_max(), lb = b.l_max();
  const int channels = t.val(a.parts[0]).dim(0);
  for (int l = 0; l <= la; ++l) {
    if (t.val(a.parts[static_cast<std::size_t>(l)]).dim(0) != channels) {
      throw std::invalid_argument("cg_product_channelwise: ragged channels in a");
    }
  }
  for (int l = 0; l <= lb; ++l) {
    if (t.val(b.parts[static_cast<std::size_t>(l)]).dim(0) != channels) {
      throw std::invalid_argument("cg_product_channelwise: channel mismatch");
    }
  }
  const so3::CgTables& tables = so3::cg_tables(std::max({la, lb, l_max_out}));

  CovVar out;
  for (int l = 0; l <= l_max_out; ++l) {
    Tensor res = Tensor::zeros({channels, 2 * l + 1, 2});
    std::vector<Var> parents;
    // Collect the contributing (l1, l2) pairs in lexicographic order.
    struct PairRef {
      int l1, l2;
    };
    std::vector<PairRef> pairs;
    for (int l1 = 0; l1 <= la; ++l1)
      for (int l2 = 0; l2 <= lb; ++l2)
        if (l >= std::abs(l1 - l2) && l <= l1 + l2) pairs.push_back({l1, l2});

    for (const PairRef& pr : pairs) {
      const Tensor& va = t.val(a.parts[static_cast<std::size_t>(pr.l1)]);
      const Tensor& vb = t.val(b.parts[static_cast<std::size_t>(pr.l2)]);
      for (const so3::CgEntry& e : tables.couplings(pr.l1, pr.l2, l)) {
        const int i1 = e.m1 + pr.l1, i2 = e.m2 + pr.l2, io = e.m + l;
        for (int c = 0; c < channels; ++c) {
          const double ar = va.at3(c, i1, 0), ai = va.at3(c, i1, 1);
          const double br = vb.at3(c, i2, 0), bi = vb.at3(c, i2, 1);
          res.at3(c, io, 0) += e.c * (ar * br - ai * bi);
          res.at3(c, io, 1) += e.c * (ar * bi + ai * br);
        }
      }
    }

    std::vector<Var> all_parents = a.parts;
    all_parents.insert(all_parents.end(), b.parts.begin(), b.parts.end());
    auto aparts = a.parts;
    auto bparts = b.parts;
    out.parts.push_back(t.make(
        std::move(res), all_parents,
        [aparts, bparts, pairs, l, channels, &tables](Tape& tp, Var self) {
          const Tensor& g = tp.grad(self);
          for (const PairRef& pr : pairs) {
            Var av = aparts[static_cast<std::size_t>(pr.l1)];
            Var bv = bparts[static_cast<std::size_t>(pr.l2)];
            const Tensor& va = tp.val(av);
            const Tensor& vb = tp.val(bv);
            const bool need_a = tp.requires_grad(av);
            const bool need_b = tp.requires_grad(bv);
            if (!need_a && !need_b) continue;
            for (const so3::CgEntry& e : tables.couplings(pr.l1, pr.l2, l)) {
              const int i1 = e.m1 + pr.l1, i2 = e.m2 + pr.l2, io = e.m + l;
              for (int c = 0; c < channels; ++c) {
                const double gr = g.at3(c, io, 0), gi = g.at3(c, io, 1);
                const double ar = va.at3(c, i1, 0), ai = va.at3(c, i1, 1);
                const double br = vb.at3(c, i2, 0), bi = vb.at3(c, i2, 1);
                if (need_a) {
                  Tensor& ga = tp.grad(av);
                  ga.at3(c, i1, 0) += e.c * (gr * br + gi * bi);
                  ga.at3(c, i1, 1) += e.c * (-gr * bi + gi * br);
                }
                if (need_b) {
                  Tensor& gb = tp.grad(bv);
                  gb.at3(c, i2, 0) += e.c * (gr * ar + gi * ai);
                  gb.at3(c, i2, 1) += e.c * (-gr * ai + gi * ar);
                }
              }
            }
          }
        }));
  }
  return out;
}

CovVar cov_concat(Tape& t, const CovVar& a, const CovVar& b) {
  if (a.parts.size() != b.parts.size()) {
    throw std::invalid_argument("cov_concat: degree mismatch");
  }
  CovVar out;
  for (int l = 0; l <= a.l_max(); ++l) {
    Var av = a.parts[static_cast<std::size_t>(l)];
    Var bv = b.parts[static_cast<std::size_t>(l)];
    const Tensor& va = t.val(av);
    const Tensor& vb = t.val(bv);
    const int ca = va.dim(0), cb = vb.dim(0), nm = va.dim(1);
    Tensor res = Tensor::zeros({ca + cb, nm, 2});
    std::copy(va.data.begin(), va.data.end(), res.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), res.data.begin() + va.numel());
    out.parts.push_back(t.make(std::move(res), {av, bv}, [av, bv](Tape& tp, Var self) {
      const Tensor& g = tp.grad(self);
      const long na = tp.val(av).numel();
      if (tp.requires_grad(av)) {
        Tensor& ga = tp.grad(av);
        for (long i = 0; i < na; ++i) ga[i] += g[i];
      }
      if (tp.requires_grad(bv)) {
        Tensor& gb = tp.grad(bv);
        for (long i = 0; i < gb.numel(); ++i) gb[i] += g[na + i];
      }
    }));
  }
  return out;
}

CovVar cov_scale(Tape& t, const CovVar& x, Var s) {
  CovVar out;
  for (Var p : x.parts) out.parts.push_back(ad::mul_scalar(t, p, s));
  return out;
}

CovVar cov_slice_channels(Tape& t, const CovVar& x, int c0, int c1) {
  CovVar out;
  for (Var p : x.parts) {
    const Tensor& v = t.val(p);
    const int nm = v.dim(1);
    if (c0 < 0 || c1 > v.dim(0) || c0 >= c1) {
      throw std::invalid_argument("cov_slice_channels: bad range");
    }
    Tensor res = Tensor::zeros({c1 - c0, nm, 2});
    for (int c = c0; c < c1; ++c)
      for (int m = 0; m < nm; ++m)
        for (int r = 0; r < 2; ++r) res.at3(c - c0, m, r) = v.at3(c, m, r);
    out.parts.push_back(t.make(std::move(res), {p}, [p, c0, c1, nm](Tape& tp, Var self) {
      const Tensor& g = tp.grad(self);
      if (!tp.requires_grad(p)) return;
      Tensor& gp = tp.grad(p);
      for (int c = c0; c < c1; ++c)
        for (int m = 0; m < nm; ++m)
          for (int r = 0; r < 2; ++r) gp.at3(c, m, r) += g.at3(c - c0, m, r);
    }));
  }
  return out;
}

int t_inv_size(int l_max, int channels) { return channels * 2 * (l_max + 2); }

ad::Var t_inv(Tape& t, const CovVar& x) {
  const int l_max = x.l_max();
  const int channels = t.val(x.parts[0]).dim(0);
  for (Var p : x.parts) {
    if (t.val(p).dim(0) != channels) throw std::invalid_argument("t_inv: ragged channels");
  }
  const int out_len = t_inv_size(l_max, channels);
  Tensor res = Tensor::zeros({out_len});

  // Layout: [xi1 re+im per channel | per l: xi2 per channel, xi3 per channel]
  const Tensor& v0 = t.val(x.parts[0]);
  for (int c = 0; c < channels; ++c) {
    res[2 * c] = v0.at3(c, 0, 0);
    res[2 * c + 1] = v0.at3(c, 0, 1);
  }
  long off = 2 * channels;
  for (int l = 0; l <= l_max; ++l) {
    const Tensor& v = t.val(x.parts[static_cast<std::size_t>(l)]);
    for (int c = 0; c < channels; ++c) {
      double s2r = 0.0, s2i = 0.0, s3 = 0.0;
      for (int m = -l; m <= l; ++m) {
        const int im = m + l, inm = -m + l;
        const double fr = v.at3(c, im, 0), fi = v.at3(c, im, 1);
        const double gr = v.at3(c, inm, 0), gi = v.at3(c, inm, 1);
        const double sign = (m % 2 == 0) ? 1.0 : -1.0;
        s2r += sign * (fr * gr - fi * gi);
        s2i += sign * (fr * gi + fi * gr);
        s3 += fr * fr + fi * fi;
      }
      res[off + c] = s2r + s2i;
      res[off + channels + c] = s3;
    }
    off += 2 * channels;
  }

  auto parts = x.parts;
  return t.make(std::move(res), parts, [parts, l_max, channels](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    // xi1
    if (tp.requires_grad(parts[0])) {
      Tensor& g0 = tp.grad(parts[0]);
      for (int c = 0; c < channels; ++c) {
        g0.at3(c, 0, 0) += g[2 * c];
        g0.at3(c, 0, 1) += g[2 * c + 1];
      }
    }
    long off = 2 * channels;
    for (int l = 0; l <= l_max; ++l) {
      Var pv = parts[static_cast<std::size_t>(l)];
      if (tp.requires_grad(pv)) {
        const Tensor& v = tp.val(pv);
        Tensor& gp = tp.grad(pv);
        for (int c = 0; c < channels; ++c) {
          const double g2 = g[off + c];
          const double g3 = g[off + channels + c];
          for (int m = -l; m <= l; ++m) {
            const int im = m + l, inm = -m + l;
            const double fr = v.at3(c, im, 0), fi = v.at3(c, im, 1);
            const double hr = v.at3(c, inm, 0), hi = v.at3(c, inm, 1);
            const double sign = (m % 2 == 0) ? 1.0 : -1.0;
            // d(xi2)/df_m: f_m pairs with f_{-m} in both the m- and (-m)-
            // terms of the sum, giving a factor of 2 (exact at m = 0 too,
            // where f_0 enters quadratically).
            gp.at3(c, im, 0) += g2 * 2.0 * sign * (hr + hi);
            gp.at3(c, im, 1) += g2 * 2.0 * sign * (hr - hi);
            gp.at3(c, im, 0) += g3 * 2.0 * fr;
            gp.at3(c, im, 1) += g3 * 2.0 * fi;
          }
        }
      }
      off += 2 * channels;
    }
  });
}

CovVar t_cov(Tape& t, Var d, const CovVar& s, const std::vector<Var>& w) {
  if (t.val(d).numel() != 1) throw std::invalid_argument("t_cov: d must be scalar");
  if (t.val(d)[0] < 0.0) throw std::invalid_argument("t_cov: d must be non-negative");
  CovVar ds = cov_scale(t, s, d);
  CovVar quad = cg_product_channelwise(t, ds, ds, s.l_max());
  CovVar cat = cov_concat(t, cov_concat(t, s, ds), quad);
  return covariant_linear(t, w, cat);
}

CovTensor rotate(const CovTensor& x, const Mat3& rotation) {
  CovTensor out;
  for (int l = 0; l <= x.l_max(); ++l) {
    const so3::ComplexMatrix d = so3::wigner_d(l, rotation);
    const Tensor& v = x.parts[static_cast<std::size_t>(l)];
    const int ch = v.dim(0), nm = 2 * l + 1;
    Tensor res = Tensor::zeros({ch, nm, 2});
    for (int c = 0; c < ch; ++c)
      for (int a = 0; a < nm; ++a) {
        so3::Complex acc = 0.0;
        for (int b = 0; b < nm; ++b) {
          acc += d.at(a, b) * so3::Complex(v.at3(c, b, 0), v.at3(c, b, 1));
        }
        res.at3(c, a, 0) = acc.real();
        res.at3(c, a, 1) = acc.imag();
      }
    out.parts.push_back(std::move(res));
  }
  return out;
}

ad::Var sph_series_eval(Tape& t, const CovVar& x, const YTable& y, int n_dirs) {
  const int l_max = x.l_max();
  const int n_coeff = so3::sh_count(l_max);
  if (!y || static_cast<long>(y->size()) != static_cast<long>(n_dirs) * n_coeff) {
    throw std::invalid_argument("sph_series_eval: Y matrix size mismatch");
  }
  for (Var p : x.parts) {
    if (t.val(p).dim(0) != 1) {
      throw std::invalid_argument("sph_series_eval: expected single channel");
    }
  }
  // f(u) = sum c conj(Y(u)): the pairing that stays invariant when the
  // coefficients rotate by wigner_d (see series_value in density.cpp).
  Tensor res = Tensor::zeros({n_dirs, 2});
  for (int q = 0; q < n_dirs; ++q) {
    const so3::Complex* yq = y->data() + static_cast<std::size_t>(q) * n_coeff;
    double fr = 0.0, fi = 0.0;
    for (int l = 0; l <= l_max; ++l) {
      const Tensor& v = t.val(x.parts[static_cast<std::size_t>(l)]);
      for (int m = -l; m <= l; ++m) {
        const so3::Complex yv = yq[so3::sh_index(l, m)];
        const double rr = v.at3(0, m + l, 0), ri = v.at3(0, m + l, 1);
        fr += rr * yv.real() + ri * yv.imag();
        fi += ri * yv.real() - rr * yv.imag();
      }
    }
    res.at2(q, 0) = fr;
    res.at2(q, 1) = fi;
  }
  auto parts = x.parts;
  return t.make(std::move(res), parts,
                [parts, y, n_dirs, l_max, n_coeff](Tape& tp, Var self) {
                  const Tensor& g = tp.grad(self);
                  for (int l = 0; l <= l_max; ++l) {
                    Var pv = parts[static_cast<std::size_t>(l)];
                    if (!tp.requires_grad(pv)) continue;
                    Tensor& gp = tp.grad(pv);
                    for (int q = 0; q < n_dirs; ++q) {
                      const so3::Complex* yq = y->data() + static_cast<std::size_t>(q) * n_coeff;
                      const double gr = g.at2(q, 0), gi = g.at2(q, 1);
                      for (int m = -l; m <= l; ++m) {
                        const so3::Complex yv = yq[so3::sh_index(l, m)];
                        gp.at3(0, m + l, 0) += gr * yv.real() - gi * yv.imag();
                        gp.at3(0, m + l, 1) += gr * yv.imag() + gi * yv.real();
                      }
                    }
                  }
                });
}

ad::Var cov_sum_sq(Tape& t, const CovVar& x) {
  double k = 0.0;
  for (Var p : x.parts) {
    const Tensor& v = t.val(p);
    for (long i = 0; i < v.numel(); ++i) k += v[i] * v[i];
  }
  auto parts = x.parts;
  return t.make(Tensor::scalar(k), parts, [parts](Tape& tp, Var self) {
    const double g = tp.grad(self)[0];
    for (Var p : parts) {
      if (!tp.requires_grad(p)) continue;
      const Tensor& v = tp.val(p);
      Tensor& gp = tp.grad(p);
      for (long i = 0; i < gp.numel(); ++i) gp[i] += 2.0 * g * v[i];
    }
  });
}

}  // namespace molgym::cov
