#pragma once

#include <memory>
#include <vector>

#include "molgym/autodiff.hpp"
#include "molgym/so3.hpp"
#include "molgym/tensor.hpp"

namespace molgym::cov {

/// Ragged rotation-covariant feature: one complex matrix per degree l,
/// stored as a real tensor [channels_l, 2l+1, 2] with the last axis holding
/// (real, imaginary). Degree keys are contiguous from 0 to l_max.
struct CovTensor {
  std::vector<Tensor> parts;  // parts[l]

  int l_max() const { return static_cast<int>(parts.size()) - 1; }
  int channels(int l) const { return parts[static_cast<std::size_t>(l)].dim(0); }

  static CovTensor zeros(int l_max, const std::vector<int>& channels_per_l);
  static CovTensor zeros_uniform(int l_max, int channels);
};

/// The same structure with each part living on an autodiff tape.
struct CovVar {
  std::vector<ad::Var> parts;

  int l_max() const { return static_cast<int>(parts.size()) - 1; }
};

CovVar cov_leaf(ad::Tape& t, const CovTensor& x);
CovVar cov_constant(ad::Tape& t, const CovTensor& x);
CovTensor cov_values(const ad::Tape& t, const CovVar& x);

/// Per-degree channel mixing: out_l = W_l * x_l with complex W_l of shape
/// [out_channels, in_channels, 2]. The (2l+1) axis is untouched, which is
/// what keeps the map covariant.
CovVar covariant_linear(ad::Tape& t, const std::vector<ad::Var>& w, const CovVar& x);

/// Channel-wise Clebsch-Gordan product: for each channel c and admissible
/// (l1, l2, l <= l_max_out), accumulates the CG-coupled products of
/// a_l1[c] and b_l2[c] into out_l[c]. Inputs must have equal channel counts
/// at every degree.
CovVar cg_product_channelwise(ad::Tape& t, const CovVar& a, const CovVar& b, int l_max_out);

/// Concatenation along the channel axis, degree by degree.
CovVar cov_concat(ad::Tape& t, const CovVar& a, const CovVar& b);

/// Multiplies every part by a scalar variable (e.g. the distance d).
CovVar cov_scale(ad::Tape& t, const CovVar& x, ad::Var s);

/// Channel slice [c0, c1) of every part.
CovVar cov_slice_channels(ad::Tape& t, const CovVar& x, int c0, int c1);

/// Rotation-invariant readout: concatenates
///   xi1 = the l=0 component (real and imaginary parts, per channel),
///   and per degree l the scalars
///   xi2 = Re + Im of sum_m (-1)^m f_l^m f_l^{-m}   (per channel)
///   xi3 = sum_m |f_l^m|^2                          (per channel).
/// Output length is channels * 2 * (l_max + 2) for uniform channel counts.
ad::Var t_inv(ad::Tape& t, const CovVar& x);

/// Invariant-vector length for the given shape.
int t_inv_size(int l_max, int channels);

/// Distance conditioning: out_l = [ s_l (+) d*s_l (+) (d*s x_cg d*s)_l ] W_l
/// with (+) channel concatenation and per-degree complex weights W_l of
/// shape [out_channels, 3*channels, 2]. Differentiable in d, s and W.
CovVar t_cov(ad::Tape& t, ad::Var d, const CovVar& s, const std::vector<ad::Var>& w);

/// Applies a Wigner rotation to every degree block (test and verification
/// helper): out_l[c, :] = D^l(R) * x_l[c, :].
CovTensor rotate(const CovTensor& x, const Mat3& rotation);

/// Evaluates the spherical series f(u) = sum_{l,m} x_l^m Y_l^m(u) for a
/// single-channel tensor on a fixed set of directions. `y` holds the
/// harmonics per direction, y[q * n_coeff + sh_index(l, m)]; output is
/// [n_dirs, 2]. The table is shared because the backward pass reads it
/// after the caller's frame is gone.
using YTable = std::shared_ptr<const std::vector<so3::Complex>>;
ad::Var sph_series_eval(ad::Tape& t, const CovVar& x, const YTable& y, int n_dirs);

/// k = sum_{l,m,c} |x_l^m[c]|^2 as a scalar variable.
ad::Var cov_sum_sq(ad::Tape& t, const CovVar& x);

}  // namespace molgym::cov
