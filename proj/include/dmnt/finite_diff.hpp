#pragma once

// Central finite-difference gradient checking; the universal test oracle.

#include <functional>

#include "dmnt/tensor.hpp"

namespace dmnt {

using ScalarFn = std::function<real(const Tensor&)>;

inline Tensor finite_diff_gradient(const ScalarFn& f, const Tensor& x, real h) {
  Tensor g(x.shape);
  Tensor xp = x;
  for (int64_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    real fp = f(xp);
    xp[i] = x[i] - h;
    real fm = f(xp);
    xp[i] = x[i];
    check(is_finite(fp) && is_finite(fm), "finite_diff: f returned non-finite value");
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

// Max over coordinates of |g_analytic - g_fd| / max(1, |g_fd|).
inline real finite_diff_check(const ScalarFn& f, const Tensor& x,
                              const Tensor& grad_analytic, real h) {
  check(grad_analytic.same_shape(x), "finite_diff_check: gradient shape mismatch");
  Tensor g_fd = finite_diff_gradient(f, x, h);
  real worst = 0;
  for (int64_t i = 0; i < x.size(); ++i) {
    real err = std::abs(grad_analytic[i] - g_fd[i]) / std::max(real(1), std::abs(g_fd[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dmnt
