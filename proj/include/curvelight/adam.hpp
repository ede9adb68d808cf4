#pragma once

#include <cmath>
#include <vector>

#include "curvelight/tensor.hpp"

namespace curvelight {

/// ADAM with the conventional defaults (beta1 0.9, beta2 0.999, eps 1e-8) and
/// bias correction.
template <typename T>
struct AdamStateT {
  std::vector<TensorT<T>> m, v;
  int64_t t = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  void init(const std::vector<TensorT<T>*>& params) {
    m.clear();
    v.clear();
    for (const auto* p : params) {
      m.emplace_back(p->shape);
      v.emplace_back(p->shape);
    }
    t = 0;
  }
};

using AdamState = AdamStateT<float>;

template <typename T>
void adam_step(const std::vector<TensorT<T>*>& params,
               const std::vector<const TensorT<T>*>& grads, AdamStateT<T>& state, T lr) {
  require(params.size() == grads.size(), "adam_step: params/grads size mismatch");
  require(params.size() == state.m.size(), "adam_step: state not initialized for these params");
  state.t += 1;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.t));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    TensorT<T>& p = *params[i];
    const TensorT<T>& g = *grads[i];
    require_same_shape(p, g, "adam_step");
    TensorT<T>& m = state.m[i];
    TensorT<T>& v = state.v[i];
    for (size_t j = 0; j < p.data.size(); ++j) {
      const T gj = g.data[j];
      m.data[j] = state.beta1 * m.data[j] + (T(1) - state.beta1) * gj;
      v.data[j] = state.beta2 * v.data[j] + (T(1) - state.beta2) * gj * gj;
      const T mhat = m.data[j] / bc1;
      const T vhat = v.data[j] / bc2;
      p.data[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace curvelight
