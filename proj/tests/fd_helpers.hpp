#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "molgym/tensor.hpp"

namespace molgym::testing {

/// Central finite difference of a scalar function of flat inputs.
/// `eval` must recompute the scalar from scratch for the given values.
inline std::vector<double> central_fd(
    const std::function<double(const std::vector<double>&)>& eval,
    std::vector<double> x, double step = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = eval(x);
    x[i] = orig - step;
    const double fm = eval(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative mismatch between analytic and FD gradients.
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& fd, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, rel_error(analytic[i], fd[i], floor));
  }
  return worst;
}

}  // namespace molgym::testing
