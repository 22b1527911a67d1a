#pragma once

// Dense multi-dimensional array of reals. Row-major storage.

#include <numeric>

#include "dmnt/core.hpp"

namespace dmnt {

struct Tensor {
  std::vector<int> shape;
  std::vector<real> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, real fill = 0) : shape(std::move(s)) {
    v.assign(size_t(count(shape)), fill);
  }
  static Tensor scalar(real x) {
    Tensor t({1});
    t.v[0] = x;
    return t;
  }
  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
  }
  int64_t size() const { return int64_t(v.size()); }
  real& operator[](int64_t i) { return v[size_t(i)]; }
  const real& operator[](int64_t i) const { return v[size_t(i)]; }

  // 2-D accessors (rows x cols)
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }
  real& at(int r, int c) { return v[size_t(r) * cols() + c]; }
  real at(int r, int c) const { return v[size_t(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (real x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
  void fill(real x) { std::fill(v.begin(), v.end(), x); }
};

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, real lo = -1, real hi = 1) {
  Tensor t(std::move(shape));
  for (auto& x : t.v) x = uniform(rng, lo, hi);
  return t;
}

}  // namespace dmnt
