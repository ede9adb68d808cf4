#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "curvelight/curve.hpp"
#include "curvelight/losses.hpp"
#include "curvelight/ops.hpp"
#include "curvelight/rng.hpp"
#include "curvelight/tensor.hpp"

// Reverse-mode differentiation at layer granularity: every recorded node is a
// whole op (conv, pool, resize, curve application, loss term) with an analytic
// backward rule, not a scalar expression graph. Nodes are recorded in
// execution order, so inputs always precede their consumers; backward() just
// replays the list in reverse and accumulates gradients, which makes values
// reused by several consumers (skip concatenations) come out right for free.

namespace curvelight {

template <typename T>
class Tape {
 public:
  struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Introduces an input value. Parameters pass requires_grad = true.
  Var leaf(TensorT<T> value, bool requires_grad) {
    return push(std::move(value), requires_grad);
  }

  const TensorT<T>& value(Var v) const { return slots_[idx(v)].value; }

  bool requires_grad(Var v) const { return slots_[idx(v)].wants_grad; }

  /// Gradient accumulator for v, allocated (zero) on first touch.
  TensorT<T>& grad(Var v) {
    Slot& s = slots_[idx(v)];
    if (s.grad.data.empty()) s.grad = TensorT<T>(s.value.shape);
    return s.grad;
  }

  /// Seeds d(root)/d(root) = 1 and replays all nodes in reverse. The root
  /// must be scalar. Afterwards grad(v) holds d(root)/d(v) for every v that
  /// requires a gradient (zero if disconnected).
  void backward(Var root) {
    require(value(root).numel() == 1, "backward: root must be a scalar");
    grad(root).data[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  size_t node_count() const { return nodes_.size(); }

  // --- recording helpers used by the taped ops below ---
  Var push(TensorT<T> value, bool wants_grad) {
    slots_.push_back(Slot{std::move(value), {}, wants_grad});
    return Var{static_cast<int32_t>(slots_.size() - 1)};
  }
  void record(std::function<void()> backprop) { nodes_.push_back(std::move(backprop)); }

 private:
  struct Slot {
    TensorT<T> value;
    TensorT<T> grad;
    bool wants_grad = false;
  };
  static size_t idx(Var v) {
    require(v.valid(), "tape: use of an empty variable");
    return static_cast<size_t>(v.id);
  }

  std::vector<Slot> slots_;
  std::vector<std::function<void()>> nodes_;
};

// ---- taped ops -------------------------------------------------------------

template <typename T>
typename Tape<T>::Var t_conv2d(Tape<T>& t, typename Tape<T>::Var in, typename Tape<T>::Var w,
                               typename Tape<T>::Var b) {
  auto out = t.push(conv2d(t.value(in), t.value(w), t.value(b)),
                    t.requires_grad(in) || t.requires_grad(w) || t.requires_grad(b));
  t.record([&t, in, w, b, out] {
    const TensorT<T>& g = t.grad(out);
    if (t.requires_grad(in))
      add_inplace(t.grad(in),
                  conv2d_grad_input(g, t.value(w), t.value(in).dim(2), t.value(in).dim(3)));
    if (t.requires_grad(w)) add_inplace(t.grad(w), conv2d_grad_weight(t.value(in), g));
    if (t.requires_grad(b)) add_inplace(t.grad(b), grad_bias(g));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_depthwise_conv2d(Tape<T>& t, typename Tape<T>::Var in,
                                         typename Tape<T>::Var w, typename Tape<T>::Var b) {
  auto out = t.push(depthwise_conv2d(t.value(in), t.value(w), t.value(b)),
                    t.requires_grad(in) || t.requires_grad(w) || t.requires_grad(b));
  t.record([&t, in, w, b, out] {
    const TensorT<T>& g = t.grad(out);
    if (t.requires_grad(in)) add_inplace(t.grad(in), depthwise_grad_input(g, t.value(w)));
    if (t.requires_grad(w)) add_inplace(t.grad(w), depthwise_grad_weight(t.value(in), g));
    if (t.requires_grad(b)) add_inplace(t.grad(b), grad_bias(g));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_pointwise_conv2d(Tape<T>& t, typename Tape<T>::Var in,
                                         typename Tape<T>::Var w, typename Tape<T>::Var b) {
  auto out = t.push(pointwise_conv2d(t.value(in), t.value(w), t.value(b)),
                    t.requires_grad(in) || t.requires_grad(w) || t.requires_grad(b));
  t.record([&t, in, w, b, out] {
    const TensorT<T>& g = t.grad(out);
    if (t.requires_grad(in)) add_inplace(t.grad(in), pointwise_grad_input(g, t.value(w)));
    if (t.requires_grad(w)) add_inplace(t.grad(w), pointwise_grad_weight(t.value(in), g));
    if (t.requires_grad(b)) add_inplace(t.grad(b), grad_bias(g));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_relu(Tape<T>& t, typename Tape<T>::Var in) {
  auto out = t.push(relu(t.value(in)), t.requires_grad(in));
  t.record([&t, in, out] {
    if (t.requires_grad(in)) add_inplace(t.grad(in), relu_backward(t.value(in), t.grad(out)));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_tanh(Tape<T>& t, typename Tape<T>::Var in) {
  auto out = t.push(tanh(t.value(in)), t.requires_grad(in));
  t.record([&t, in, out] {
    if (t.requires_grad(in)) add_inplace(t.grad(in), tanh_backward(t.value(out), t.grad(out)));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_concat_channels(Tape<T>& t, typename Tape<T>::Var a,
                                        typename Tape<T>::Var b) {
  auto out = t.push(concat_channels(t.value(a), t.value(b)),
                    t.requires_grad(a) || t.requires_grad(b));
  t.record([&t, a, b, out] {
    const TensorT<T>& g = t.grad(out);
    const int ca = t.value(a).dim(1);
    if (t.requires_grad(a)) add_inplace(t.grad(a), slice_channels(g, 0, ca));
    if (t.requires_grad(b)) add_inplace(t.grad(b), slice_channels(g, ca, g.dim(1)));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_avg_pool(Tape<T>& t, typename Tape<T>::Var in, int k) {
  auto out = t.push(avg_pool(t.value(in), k), t.requires_grad(in));
  t.record([&t, in, out, k] {
    if (t.requires_grad(in))
      add_inplace(t.grad(in),
                  avg_pool_backward(t.grad(out), k, t.value(in).dim(2), t.value(in).dim(3)));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_resize_bilinear(Tape<T>& t, typename Tape<T>::Var in, int out_h,
                                        int out_w) {
  auto out = t.push(resize_bilinear(t.value(in), out_h, out_w), t.requires_grad(in));
  t.record([&t, in, out] {
    if (t.requires_grad(in))
      add_inplace(t.grad(in), resize_bilinear_backward(t.grad(out), t.value(in).dim(2),
                                                       t.value(in).dim(3)));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_mul(Tape<T>& t, typename Tape<T>::Var a, typename Tape<T>::Var b) {
  auto out = t.push(mul(t.value(a), t.value(b)), t.requires_grad(a) || t.requires_grad(b));
  t.record([&t, a, b, out] {
    const TensorT<T>& g = t.grad(out);
    if (t.requires_grad(a)) add_inplace(t.grad(a), mul(g, t.value(b)));
    if (t.requires_grad(b)) add_inplace(t.grad(b), mul(g, t.value(a)));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_add(Tape<T>& t, typename Tape<T>::Var a, typename Tape<T>::Var b) {
  auto out = t.push(add(t.value(a), t.value(b)), t.requires_grad(a) || t.requires_grad(b));
  t.record([&t, a, b, out] {
    const TensorT<T>& g = t.grad(out);
    if (t.requires_grad(a)) add_inplace(t.grad(a), g);
    if (t.requires_grad(b)) add_inplace(t.grad(b), g);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_sum(Tape<T>& t, typename Tape<T>::Var in) {
  auto out = t.push(TensorT<T>({1}, static_cast<T>(sum(t.value(in)))), t.requires_grad(in));
  t.record([&t, in, out] {
    if (t.requires_grad(in)) {
      const T g = t.grad(out).data[0];
      for (T& v : t.grad(in).data) v += g;
    }
  });
  return out;
}

/// Scalar combination sum_i weights[i] * vars[i]; all vars must be scalars.
template <typename T>
typename Tape<T>::Var t_weighted_sum(Tape<T>& t, const std::vector<typename Tape<T>::Var>& vars,
                                     const std::vector<T>& weights) {
  require(vars.size() == weights.size() && !vars.empty(), "t_weighted_sum: size mismatch");
  T acc = 0;
  bool wants_grad = false;
  for (size_t i = 0; i < vars.size(); ++i) {
    require(t.value(vars[i]).numel() == 1, "t_weighted_sum: terms must be scalars");
    acc += weights[i] * t.value(vars[i]).data[0];
    wants_grad = wants_grad || t.requires_grad(vars[i]);
  }
  auto out = t.push(TensorT<T>({1}, acc), wants_grad);
  t.record([&t, vars, weights, out] {
    const T g = t.grad(out).data[0];
    for (size_t i = 0; i < vars.size(); ++i)
      if (t.requires_grad(vars[i])) t.grad(vars[i]).data[0] += g * weights[i];
  });
  return out;
}

/// Iterated curve application with a constant image; gradients flow to the
/// maps only. Forward states are cached for the backward walk.
template <typename T>
typename Tape<T>::Var t_apply_curves(Tape<T>& t, const TensorT<T>& img, typename Tape<T>::Var maps,
                                     int n, bool shared) {
  auto states = std::make_shared<std::vector<TensorT<T>>>(
      detail::curve_states(img, t.value(maps), n, shared));
  auto out = t.push(states->back(), t.requires_grad(maps));
  t.record([&t, states, maps, n, shared, out] {
    if (!t.requires_grad(maps)) return;
    auto [d_img, d_maps] = curve_states_backward(*states, t.value(maps), n, shared, t.grad(out));
    (void)d_img;
    add_inplace(t.grad(maps), d_maps);
  });
  return out;
}

// ---- taped losses ----------------------------------------------------------

template <typename T>
typename Tape<T>::Var t_spatial_consistency(Tape<T>& t, const TensorT<T>& input,
                                            typename Tape<T>::Var enhanced, int region) {
  auto out = t.push(TensorT<T>({1}, spatial_consistency(input, t.value(enhanced), region)),
                    t.requires_grad(enhanced));
  // The reference image is copied into the closure: the tape may outlive it.
  t.record([&t, input, enhanced, region, out] {
    if (t.requires_grad(enhanced))
      add_inplace(t.grad(enhanced), spatial_consistency_backward(input, t.value(enhanced), region,
                                                                 t.grad(out).data[0]));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_exposure_control(Tape<T>& t, typename Tape<T>::Var enhanced, T level,
                                         int region) {
  auto out = t.push(TensorT<T>({1}, exposure_control(t.value(enhanced), level, region)),
                    t.requires_grad(enhanced));
  t.record([&t, enhanced, level, region, out] {
    if (t.requires_grad(enhanced))
      add_inplace(t.grad(enhanced),
                  exposure_control_backward(t.value(enhanced), level, region, t.grad(out).data[0]));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_color_constancy(Tape<T>& t, typename Tape<T>::Var enhanced) {
  auto out =
      t.push(TensorT<T>({1}, color_constancy(t.value(enhanced))), t.requires_grad(enhanced));
  t.record([&t, enhanced, out] {
    if (t.requires_grad(enhanced))
      add_inplace(t.grad(enhanced),
                  color_constancy_backward(t.value(enhanced), t.grad(out).data[0]));
  });
  return out;
}

template <typename T>
typename Tape<T>::Var t_illumination_smoothness(Tape<T>& t, typename Tape<T>::Var maps,
                                                int iterations) {
  auto out = t.push(TensorT<T>({1}, illumination_smoothness(t.value(maps), iterations)),
                    t.requires_grad(maps));
  t.record([&t, maps, iterations, out] {
    if (t.requires_grad(maps))
      add_inplace(t.grad(maps), illumination_smoothness_backward(t.value(maps), iterations,
                                                                 t.grad(out).data[0]));
  });
  return out;
}

// ---- finite-difference verification ----------------------------------------

struct GradCheckResult {
  double max_rel_err = 0;
  int64_t checked = 0;
  int64_t skipped = 0;     // excluded: a kink fell inside the FD interval
  int64_t negligible = 0;  // excluded: both gradients below the FD noise floor
};

/// Compares analytic gradients against central differences
/// (f(p+eps) - f(p-eps)) / (2 eps), coordinate by coordinate, and returns the
/// worst relative error with denominator max(|analytic|, |numeric|, 1e-8).
///
/// The objective is piecewise smooth (ReLU, |.|): a difference taken across a
/// kink measures a subgradient mixture, not the derivative at the point, so
/// those coordinates must be excluded. Crossings are detected by comparing
/// the eps and eps/2 central differences: on a smooth stretch they agree to
/// O(eps^2), across a kink they differ by a slope jump.
///
/// With max_coords_per_tensor > 0 a seeded random subset of coordinates is
/// checked per tensor (finite differences re-evaluate f per coordinate, which
/// is too slow for full parameter sets).
inline GradCheckResult grad_check_detailed(const std::function<double()>& f,
                                           const std::vector<TensorT<double>*>& params,
                                           const std::vector<const TensorT<double>*>& analytic,
                                           double eps, int max_coords_per_tensor = 0,
                                           uint64_t seed = 0x5eed) {
  require(params.size() == analytic.size(), "grad_check: params/analytic size mismatch");
  Rng rng(seed);
  GradCheckResult result;
  // The difference f(p+eps) - f(p-eps) carries cancellation noise of order
  // |f| * eps_machine; gradients within a couple of decades of
  // noise / (2 eps) cannot be measured by finite differences at all.
  const double noise_floor =
      std::max(1e-12, std::abs(f()) * 2.2e-16 / (2.0 * eps) * 3e4);
  for (size_t p = 0; p < params.size(); ++p) {
    TensorT<double>& t = *params[p];
    require(t.shape == analytic[p]->shape, "grad_check: gradient shape mismatch");
    std::vector<int64_t> coords;
    const int64_t n = t.numel();
    if (max_coords_per_tensor <= 0 || n <= max_coords_per_tensor) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int i = 0; i < max_coords_per_tensor; ++i)
        coords.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(n))));
    }
    for (int64_t c : coords) {
      const double saved = t.data[static_cast<size_t>(c)];
      auto eval_at = [&](double x) {
        t.data[static_cast<size_t>(c)] = x;
        return f();
      };
      const double full = (eval_at(saved + eps) - eval_at(saved - eps)) / (2.0 * eps);
      const double exact = analytic[p]->data[static_cast<size_t>(c)];
      if (std::max(std::abs(exact), std::abs(full)) < noise_floor) {
        t.data[static_cast<size_t>(c)] = saved;
        ++result.negligible;
        continue;
      }
      const double half = (eval_at(saved + eps / 2) - eval_at(saved - eps / 2)) / eps;
      t.data[static_cast<size_t>(c)] = saved;
      if (std::abs(full - half) > 1e-4 * std::max({std::abs(full), std::abs(half), 1e-3})) {
        ++result.skipped;
        continue;
      }
      const double denom = std::max({std::abs(exact), std::abs(full), 1e-8});
      result.max_rel_err = std::max(result.max_rel_err, std::abs(exact - full) / denom);
      ++result.checked;
    }
  }
  return result;
}

inline double grad_check(const std::function<double()>& f,
                         const std::vector<TensorT<double>*>& params,
                         const std::vector<const TensorT<double>*>& analytic, double eps,
                         int max_coords_per_tensor = 0, uint64_t seed = 0x5eed) {
  return grad_check_detailed(f, params, analytic, eps, max_coords_per_tensor, seed).max_rel_err;
}

}  // namespace curvelight
