#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

namespace molgym {

/// Dense row-major tensor of doubles. Small and copyable; shapes are
/// explicit so autodiff nodes can carry values and gradients of any rank.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(numel_of(t.shape)), 0.0);
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.shape = {1};
    t.data = {v};
    return t;
  }

  static Tensor from_vector(std::vector<double> v) {
    Tensor t;
    t.shape = {static_cast<int>(v.size())};
    t.data = std::move(v);
    return t;
  }

  static long numel_of(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  long numel() const { return static_cast<long>(data.size()); }

  double& operator[](long i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](long i) const { return data[static_cast<std::size_t>(i)]; }

  double& at2(int i, int j) {
    assert(ndim() == 2);
    return data[static_cast<std::size_t>(i) * dim(1) + j];
  }
  double at2(int i, int j) const {
    assert(ndim() == 2);
    return data[static_cast<std::size_t>(i) * dim(1) + j];
  }
  double& at3(int i, int j, int k) {
    assert(ndim() == 3);
    return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  double at3(int i, int j, int k) const {
    assert(ndim() == 3);
    return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace molgym
