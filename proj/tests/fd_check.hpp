#pragma once
// Central-difference gradient checking shared by the loss, model, and
// acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace shine::testutil {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;

using ScalarFn = std::function<double(const std::vector<double>&)>;

inline double central_diff(const ScalarFn& f, std::vector<double> x,
                           std::size_t i, double h = kFdStep) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double hi = f(x);
  x[i] = x0 - h;
  const double lo = f(x);
  return (hi - lo) / (2.0 * h);
}

struct FdResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Relative error with a small absolute floor so near-zero pairs do not
// amplify finite-difference noise.
inline FdResult compare_grad(const ScalarFn& f, const std::vector<double>& x,
                             const std::vector<double>& analytic,
                             double h = kFdStep) {
  FdResult r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = central_diff(f, x, i, h);
    const double denom =
        std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    const double rel = std::abs(fd - analytic[i]) / denom;
    if (rel >= r.max_rel_err) {
      r.max_rel_err = rel;
      r.worst_index = i;
      r.analytic = analytic[i];
      r.numeric = fd;
    }
  }
  return r;
}

}  // namespace shine::testutil
