#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_helpers.hpp"
#include "molgym/covariant.hpp"
#include "molgym/rng.hpp"

using namespace molgym;
using ad::Tape;
using ad::Var;
using cov::CovTensor;
using cov::CovVar;

namespace {

CovTensor random_cov(int l_max, int channels, Rng& rng) {
  CovTensor x = CovTensor::zeros_uniform(l_max, channels);
  for (Tensor& p : x.parts)
    for (long i = 0; i < p.numel(); ++i) p[i] = rng.normal();
  return x;
}

std::vector<Var> random_weights(Tape& t, int l_max, int out_ch, int in_ch, Rng& rng) {
  std::vector<Var> w;
  for (int l = 0; l <= l_max; ++l) {
    Tensor wl = Tensor::zeros({out_ch, in_ch, 2});
    for (long i = 0; i < wl.numel(); ++i) wl[i] = rng.normal();
    w.push_back(t.leaf(wl));
  }
  return w;
}

double max_abs_diff(const CovTensor& a, const CovTensor& b) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.parts.size(); ++l) {
    for (long i = 0; i < a.parts[l].numel(); ++i) {
      worst = std::max(worst, std::abs(a.parts[l][i] - b.parts[l][i]));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("cg_product: scalar-only inputs reduce to the elementwise product") {
  Rng rng(1);
  Tape t;
  CovTensor a = random_cov(0, 3, rng);
  CovTensor b = random_cov(0, 3, rng);
  CovVar out = cov::cg_product_channelwise(t, cov::cov_leaf(t, a), cov::cov_leaf(t, b), 0);
  // <00;00|00> = 1, so out = a * b as complex numbers.
  for (int c = 0; c < 3; ++c) {
    const double ar = a.parts[0].at3(c, 0, 0), ai = a.parts[0].at3(c, 0, 1);
    const double br = b.parts[0].at3(c, 0, 0), bi = b.parts[0].at3(c, 0, 1);
    CHECK(t.val(out.parts[0]).at3(c, 0, 0) == doctest::Approx(ar * br - ai * bi).epsilon(1e-13));
    CHECK(t.val(out.parts[0]).at3(c, 0, 1) == doctest::Approx(ar * bi + ai * br).epsilon(1e-13));
  }
}

TEST_CASE("cg_product: l_max_out = 0 keeps only the (1,1)->0 coupling") {
  Rng rng(2);
  Tape t;
  CovTensor a = random_cov(1, 2, rng);
  CovTensor b = random_cov(1, 2, rng);
  CovVar out = cov::cg_product_channelwise(t, cov::cov_leaf(t, a), cov::cov_leaf(t, b), 0);
  REQUIRE(out.parts.size() == 1);
  // Direct evaluation of the (0,0)->0 and (1,1)->0 couplings.
  for (int c = 0; c < 2; ++c) {
    so3::Complex expect = 0.0;
    expect += so3::Complex(a.parts[0].at3(c, 0, 0), a.parts[0].at3(c, 0, 1)) *
              so3::Complex(b.parts[0].at3(c, 0, 0), b.parts[0].at3(c, 0, 1));
    for (int m1 = -1; m1 <= 1; ++m1) {
      const double cg = so3::cg_coeff(1, 1, 0, m1, -m1, 0);
      expect += cg * so3::Complex(a.parts[1].at3(c, m1 + 1, 0), a.parts[1].at3(c, m1 + 1, 1)) *
                so3::Complex(b.parts[1].at3(c, -m1 + 1, 0), b.parts[1].at3(c, -m1 + 1, 1));
    }
    CHECK(t.val(out.parts[0]).at3(c, 0, 0) == doctest::Approx(expect.real()).epsilon(1e-12));
    CHECK(t.val(out.parts[0]).at3(c, 0, 1) == doctest::Approx(expect.imag()).epsilon(1e-12));
  }
}

TEST_CASE("cg_product: channel mismatch rejected") {
  Rng rng(3);
  Tape t;
  CovTensor a = random_cov(1, 2, rng);
  CovTensor b = random_cov(1, 3, rng);
  CHECK_THROWS_AS(
      cov::cg_product_channelwise(t, cov::cov_leaf(t, a), cov::cov_leaf(t, b), 1),
      std::invalid_argument);
}

TEST_CASE("cg_product and covariant_linear commute with rotations") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 r = random_rotation(rng);
    CovTensor a = random_cov(2, 3, rng);
    CovTensor b = random_cov(2, 3, rng);

    // rotate-then-product.
    Tape t1;
    CovVar p1 = cov::cg_product_channelwise(t1, cov::cov_leaf(t1, cov::rotate(a, r)),
                                            cov::cov_leaf(t1, cov::rotate(b, r)), 2);
    // product-then-rotate.
    Tape t2;
    CovVar p2 = cov::cg_product_channelwise(t2, cov::cov_leaf(t2, a), cov::cov_leaf(t2, b), 2);
    CHECK(max_abs_diff(cov::cov_values(t1, p1),
                       cov::rotate(cov::cov_values(t2, p2), r)) < 1e-10);

    // covariant_linear: exact covariance because the m-axis is untouched.
    Tape t3;
    Rng wrng(42);
    std::vector<Var> w3 = random_weights(t3, 2, 4, 3, wrng);
    CovVar l1 = cov::covariant_linear(t3, w3, cov::cov_leaf(t3, cov::rotate(a, r)));
    Tape t4;
    Rng wrng2(42);
    std::vector<Var> w4 = random_weights(t4, 2, 4, 3, wrng2);
    CovVar l2 = cov::covariant_linear(t4, w4, cov::cov_leaf(t4, a));
    CHECK(max_abs_diff(cov::cov_values(t3, l1),
                       cov::rotate(cov::cov_values(t4, l2), r)) < 1e-12);
  }
}

TEST_CASE("covariant_linear: identity and zero weights") {
  Rng rng(5);
  Tape t;
  CovTensor x = random_cov(2, 3, rng);
  std::vector<Var> eye, zero;
  for (int l = 0; l <= 2; ++l) {
    Tensor w = Tensor::zeros({3, 3, 2});
    for (int c = 0; c < 3; ++c) w.at3(c, c, 0) = 1.0;
    eye.push_back(t.leaf(w));
    zero.push_back(t.leaf(Tensor::zeros({3, 3, 2})));
  }
  CovVar same = cov::covariant_linear(t, eye, cov::cov_leaf(t, x));
  CHECK(max_abs_diff(cov::cov_values(t, same), x) == 0.0);
  CovVar nil = cov::covariant_linear(t, zero, cov::cov_leaf(t, x));
  for (const Tensor& p : cov::cov_values(t, nil).parts) {
    for (long i = 0; i < p.numel(); ++i) CHECK(p[i] == 0.0);
  }
}

TEST_CASE("linearity: superposition through linear ops and concatenation") {
  Rng rng(6);
  Tape t;
  CovTensor a = random_cov(2, 2, rng);
  CovTensor b = random_cov(2, 2, rng);
  const double alpha = 0.37, beta = -1.21;
  std::vector<Var> w = random_weights(t, 2, 3, 4, rng);

  // op(alpha a (+) beta b) where (+) is channel concat of scaled tensors:
  // check linear in each slot by comparing against the sum of separate runs.
  CovTensor ab = CovTensor::zeros_uniform(2, 2);
  CovTensor za = CovTensor::zeros_uniform(2, 2);
  for (int l = 0; l <= 2; ++l) {
    for (long i = 0; i < ab.parts[static_cast<std::size_t>(l)].numel(); ++i) {
      ab.parts[static_cast<std::size_t>(l)][i] =
          alpha * a.parts[static_cast<std::size_t>(l)][i] +
          beta * b.parts[static_cast<std::size_t>(l)][i];
    }
  }
  CovVar mixed = cov::covariant_linear(
      t, w, cov::cov_concat(t, cov::cov_leaf(t, ab), cov::cov_leaf(t, za)));
  CovVar ra = cov::covariant_linear(
      t, w, cov::cov_concat(t, cov::cov_leaf(t, a), cov::cov_leaf(t, za)));
  CovVar rb = cov::covariant_linear(
      t, w, cov::cov_concat(t, cov::cov_leaf(t, b), cov::cov_leaf(t, za)));
  for (int l = 0; l <= 2; ++l) {
    const Tensor& vm = t.val(mixed.parts[static_cast<std::size_t>(l)]);
    const Tensor& va = t.val(ra.parts[static_cast<std::size_t>(l)]);
    const Tensor& vb = t.val(rb.parts[static_cast<std::size_t>(l)]);
    for (long i = 0; i < vm.numel(); ++i) {
      CHECK(std::abs(vm[i] - (alpha * va[i] + beta * vb[i])) < 1e-12);
    }
  }
}

TEST_CASE("t_inv: zero tensor, xi1 readout, rotation invariance") {
  Rng rng(7);
  // Zero tensor -> zero vector.
  {
    Tape t;
    CovTensor z = CovTensor::zeros_uniform(3, 2);
    Var v = cov::t_inv(t, cov::cov_leaf(t, z));
    for (long i = 0; i < t.val(v).numel(); ++i) CHECK(t.val(v)[i] == 0.0);
    CHECK(t.val(v).numel() == cov::t_inv_size(3, 2));
  }
  // xi1 block equals the stored l=0 entries.
  {
    Tape t;
    CovTensor x = random_cov(2, 3, rng);
    Var v = cov::t_inv(t, cov::cov_leaf(t, x));
    for (int c = 0; c < 3; ++c) {
      CHECK(t.val(v)[2 * c] == x.parts[0].at3(c, 0, 0));
      CHECK(t.val(v)[2 * c + 1] == x.parts[0].at3(c, 0, 1));
    }
  }
  // Invariance under rotation.
  for (int trial = 0; trial < 10; ++trial) {
    const Mat3 r = random_rotation(rng);
    CovTensor x = random_cov(4, 2, rng);
    Tape t;
    Var v1 = cov::t_inv(t, cov::cov_leaf(t, x));
    Var v2 = cov::t_inv(t, cov::cov_leaf(t, cov::rotate(x, r)));
    for (long i = 0; i < t.val(v1).numel(); ++i) {
      CHECK(std::abs(t.val(v1)[i] - t.val(v2)[i]) < 1e-10);
    }
  }
}

TEST_CASE("t_inv gradient matches finite differences") {
  Rng rng(8);
  CovTensor x = random_cov(2, 2, rng);
  Tensor probe = Tensor::zeros({static_cast<int>(cov::t_inv_size(2, 2))});
  for (long i = 0; i < probe.numel(); ++i) probe[i] = rng.normal();

  auto eval = [&](const std::vector<double>& flat) {
    CovTensor y = x;
    std::size_t off = 0;
    for (Tensor& p : y.parts)
      for (long i = 0; i < p.numel(); ++i) p[i] = flat[off++];
    Tape t(false);
    Var v = cov::t_inv(t, cov::cov_leaf(t, y));
    return t.val(ad::dot_const(t, v, probe))[0];
  };

  std::vector<double> flat;
  for (const Tensor& p : x.parts) flat.insert(flat.end(), p.data.begin(), p.data.end());

  Tape t;
  CovVar xv = cov::cov_leaf(t, x);
  Var v = cov::t_inv(t, xv);
  t.backward(ad::dot_const(t, v, probe));
  std::vector<double> analytic;
  for (Var p : xv.parts) {
    const Tensor& g = t.grad(p);
    analytic.insert(analytic.end(), g.data.begin(), g.data.end());
  }
  CHECK(testing::max_rel_error(analytic, testing::central_fd(eval, flat)) < 1e-4);
}

TEST_CASE("t_cov: d = 0 keeps only the identity block; covariance; d-gradient") {
  Rng rng(9);
  const int l_max = 2, ch = 2;

  // d = 0: r = [s (+) 0 (+) 0] W, i.e. only the first `ch` columns of W act.
  {
    Tape t;
    CovTensor s = random_cov(l_max, ch, rng);
    Rng wrng(55);
    std::vector<Var> w = random_weights(t, l_max, 1, 3 * ch, wrng);
    CovVar out = cov::t_cov(t, t.leaf(Tensor::scalar(0.0)), cov::cov_leaf(t, s), w);
    for (int l = 0; l <= l_max; ++l) {
      const Tensor& vw = t.val(w[static_cast<std::size_t>(l)]);
      const Tensor& vs = s.parts[static_cast<std::size_t>(l)];
      for (int m = 0; m < 2 * l + 1; ++m) {
        so3::Complex expect = 0.0;
        for (int c = 0; c < ch; ++c) {
          expect += so3::Complex(vw.at3(0, c, 0), vw.at3(0, c, 1)) *
                    so3::Complex(vs.at3(c, m, 0), vs.at3(c, m, 1));
        }
        CHECK(t.val(out.parts[static_cast<std::size_t>(l)]).at3(0, m, 0) ==
              doctest::Approx(expect.real()).epsilon(1e-12));
        CHECK(t.val(out.parts[static_cast<std::size_t>(l)]).at3(0, m, 1) ==
              doctest::Approx(expect.imag()).epsilon(1e-12));
      }
    }
  }

  // Rotation covariance of the output.
  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 r = random_rotation(rng);
    CovTensor s = random_cov(l_max, ch, rng);
    const double d = rng.uniform(0.2, 2.0);
    Rng wrng(77);
    Tape t1;
    std::vector<Var> w1 = random_weights(t1, l_max, 1, 3 * ch, wrng);
    CovVar o1 = cov::t_cov(t1, t1.leaf(Tensor::scalar(d)), cov::cov_leaf(t1, cov::rotate(s, r)),
                           w1);
    Rng wrng2(77);
    Tape t2;
    std::vector<Var> w2 = random_weights(t2, l_max, 1, 3 * ch, wrng2);
    CovVar o2 = cov::t_cov(t2, t2.leaf(Tensor::scalar(d)), cov::cov_leaf(t2, s), w2);
    CHECK(max_abs_diff(cov::cov_values(t1, o1),
                       cov::rotate(cov::cov_values(t2, o2), r)) < 1e-10);
  }

  // Gradient of |r|^2 with respect to d matches central FD.
  for (int trial = 0; trial < 5; ++trial) {
    CovTensor s = random_cov(l_max, ch, rng);
    Rng wrng(101 + static_cast<std::uint64_t>(trial));
    const double d0 = rng.uniform(0.3, 1.7);

    auto eval = [&](const std::vector<double>& v) {
      Tape t(false);
      Rng wr(101 + static_cast<std::uint64_t>(trial));
      std::vector<Var> w = random_weights(t, l_max, 1, 3 * ch, wr);
      CovVar out = cov::t_cov(t, t.leaf(Tensor::scalar(v[0])), cov::cov_leaf(t, s), w);
      return t.val(cov::cov_sum_sq(t, out))[0];
    };

    Tape t;
    std::vector<Var> w = random_weights(t, l_max, 1, 3 * ch, wrng);
    Var d = t.leaf(Tensor::scalar(d0));
    CovVar out = cov::t_cov(t, d, cov::cov_leaf(t, s), w);
    t.backward(cov::cov_sum_sq(t, out));
    const std::vector<double> fd = testing::central_fd(eval, {d0});
    CHECK(testing::rel_error(t.grad(d)[0], fd[0]) < 1e-5);
  }
}

TEST_CASE("sph_series_eval and cov_sum_sq: values and gradients") {
  Rng rng(10);
  const int l_max = 3;
  CovTensor x = random_cov(l_max, 1, rng);

  // Value check against a direct complex summation at random directions.
  const int n_dirs = 7;
  std::vector<Vec3> dirs;
  auto y = std::make_shared<std::vector<so3::Complex>>(
      static_cast<std::size_t>(n_dirs * so3::sh_count(l_max)));
  for (int q = 0; q < n_dirs; ++q) {
    dirs.push_back(random_unit_vector(rng));
    so3::sph_harm_all(l_max, so3::SphCoord::from_unit_vector(dirs.back()),
                      y->data() + static_cast<std::size_t>(q) * so3::sh_count(l_max));
  }
  Tape t;
  CovVar xv = cov::cov_leaf(t, x);
  Var f = cov::sph_series_eval(t, xv, y, n_dirs);
  for (int q = 0; q < n_dirs; ++q) {
    so3::Complex expect = 0.0;
    for (int l = 0; l <= l_max; ++l)
      for (int m = -l; m <= l; ++m) {
        expect += so3::Complex(x.parts[static_cast<std::size_t>(l)].at3(0, m + l, 0),
                               x.parts[static_cast<std::size_t>(l)].at3(0, m + l, 1)) *
                  std::conj((*y)[static_cast<std::size_t>(q * so3::sh_count(l_max) +
                                                          so3::sh_index(l, m))]);
      }
    CHECK(t.val(f).at2(q, 0) == doctest::Approx(expect.real()).epsilon(1e-12));
    CHECK(t.val(f).at2(q, 1) == doctest::Approx(expect.imag()).epsilon(1e-12));
  }

  // Gradient of sum(|f|^2)/k through both ops.
  auto eval = [&](const std::vector<double>& flat) {
    CovTensor z = x;
    std::size_t off = 0;
    for (Tensor& p : z.parts)
      for (long i = 0; i < p.numel(); ++i) p[i] = flat[off++];
    Tape tp(false);
    CovVar zv = cov::cov_leaf(tp, z);
    Var fe = cov::sph_series_eval(tp, zv, y, n_dirs);
    Var num = ad::sum(tp, ad::square(tp, fe));
    Var den = cov::cov_sum_sq(tp, zv);
    return t.val(num).numel() ? tp.val(num)[0] / tp.val(den)[0] : 0.0;
  };
  std::vector<double> flat;
  for (const Tensor& p : x.parts) flat.insert(flat.end(), p.data.begin(), p.data.end());

  Var num = ad::sum(t, ad::square(t, f));
  Var den = cov::cov_sum_sq(t, xv);
  Var ratio = ad::div_scalar(t, num, den);
  t.backward(ratio);
  std::vector<double> analytic;
  for (Var p : xv.parts) {
    const Tensor& g = t.grad(p);
    analytic.insert(analytic.end(), g.data.begin(), g.data.end());
  }
  CHECK(testing::max_rel_error(analytic, testing::central_fd(eval, flat)) < 1e-4);
}
