#pragma once

// Adam with bias correction.

#include "dmnt/tensor.hpp"

namespace dmnt {

struct AdamConfig {
  real lr = real(1e-3);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

struct AdamState {
  Tensor m, v;
  int64_t t = 0;
  AdamConfig cfg;

  AdamState() = default;
  AdamState(const std::vector<int>& shape, AdamConfig c) : m(shape), v(shape), cfg(c) {}
};

inline void adam_step(AdamState& st, Tensor& params, const Tensor& grads) {
  check(params.same_shape(grads) && params.same_shape(st.m), "adam_step: shape mismatch");
  st.t += 1;
  real b1t = std::pow(st.cfg.beta1, real(st.t));
  real b2t = std::pow(st.cfg.beta2, real(st.t));
  for (int64_t i = 0; i < params.size(); ++i) {
    real g = grads[i];
    st.m[i] = st.cfg.beta1 * st.m[i] + (1 - st.cfg.beta1) * g;
    st.v[i] = st.cfg.beta2 * st.v[i] + (1 - st.cfg.beta2) * g * g;
    real mhat = st.m[i] / (1 - b1t);
    real vhat = st.v[i] / (1 - b2t);
    params[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
  }
}

}  // namespace dmnt
