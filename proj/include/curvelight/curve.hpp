#pragma once

#include <vector>

#include "curvelight/tensor.hpp"
#include "curvelight/threads.hpp"

// The quadratic light-enhancement curve family. A single step maps
//   out = I + alpha * I * (1 - I)
// per pixel and per RGB channel, with I in [0,1] and alpha in [-1,1]. That
// range keeps the map monotone on [0,1] (derivative 1 + alpha*(1-2I) >= 0)
// and keeps 0 and 1 fixed, so iterating it n times stays inside [0,1] while
// building up curvature. Per-iteration parameter maps give the general form;
// reusing one 3-channel map for every iteration gives the shared variant.

namespace curvelight {

/// Per-pixel, per-channel curve parameters in [-1,1]. Unshared maps carry
/// 3*n channels (one RGB triple per iteration); shared maps carry 3.
template <typename T>
struct CurveParamMapsT {
  TensorT<T> maps;
  int iterations = 8;
  bool shared = false;

  int expected_channels() const { return shared ? 3 : 3 * iterations; }
};

using CurveParamMaps = CurveParamMapsT<float>;

namespace detail {

template <typename T>
void validate_curve_inputs(const TensorT<T>& img, const TensorT<T>& alpha) {
  for (const T v : img.data)
    require(v >= T(0) && v <= T(1), "curve input image out of [0,1]");
  for (const T v : alpha.data)
    require(v >= T(-1) && v <= T(1), "curve parameter out of [-1,1]");
}

// Clamp guards against <=1-ulp float excursions at the interval ends; the
// exact map never leaves [0,1].
template <typename T>
inline T le_scalar(T img, T alpha) {
  T out = img + alpha * img * (T(1) - img);
  return out < T(0) ? T(0) : (out > T(1) ? T(1) : out);
}

}  // namespace detail

/// One curve application step; img and alpha must have identical shapes.
template <typename T>
TensorT<T> le_step(const TensorT<T>& img, const TensorT<T>& alpha) {
  require_same_shape(img, alpha, "le_step");
#ifndef NDEBUG
  detail::validate_curve_inputs(img, alpha);
#endif
  TensorT<T> out;
  out.shape = img.shape;
  out.data.resize(img.data.size());
  const T* ip = img.ptr();
  const T* ap = alpha.ptr();
  T* op = out.ptr();
  const int64_t n = img.numel();
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) op[i] = detail::le_scalar(ip[i], ap[i]);
  });
  return out;
}

/// Partials of a single step: d out/d img = 1 + alpha*(1-2*img),
/// d out/d alpha = img*(1-img).
template <typename T>
std::pair<TensorT<T>, TensorT<T>> curve_partials(const TensorT<T>& img, const TensorT<T>& alpha) {
  require_same_shape(img, alpha, "curve_partials");
  TensorT<T> d_img, d_alpha;
  d_img.shape = d_alpha.shape = img.shape;
  d_img.data.resize(img.data.size());
  d_alpha.data.resize(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) {
    const T v = img.data[i];
    d_img.data[i] = T(1) + alpha.data[i] * (T(1) - T(2) * v);
    d_alpha.data[i] = v * (T(1) - v);
  }
  return {std::move(d_img), std::move(d_alpha)};
}

namespace detail {

template <typename T>
TensorT<T> iteration_slice(const TensorT<T>& maps, int iter, bool shared) {
  if (shared) return maps;
  const int N = maps.dim(0), H = maps.dim(2), W = maps.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  TensorT<T> out({N, 3, H, W});
  for (int n = 0; n < N; ++n)
    std::copy_n(&maps.at(n, 3 * iter, 0, 0), 3 * plane, &out.at(n, 0, 0, 0));
  return out;
}

// Runs the recursion and keeps every intermediate state (LE_0 .. LE_n);
// the backward pass consumes them in reverse.
template <typename T>
std::vector<TensorT<T>> curve_states(const TensorT<T>& img, const TensorT<T>& maps, int n,
                                     bool shared) {
  require(maps.rank() == 4, "apply_curves: maps must be [N,C,H,W]");
  require(n >= 1, "apply_curves: iteration count must be >= 1");
  const int expect = shared ? 3 : 3 * n;
  require(maps.dim(1) == expect, "apply_curves: expected " + std::to_string(expect) +
                                     " map channels, got " + std::to_string(maps.dim(1)));
  require(img.rank() == 4 && img.dim(1) == 3, "apply_curves: image must be [N,3,H,W]");
  require(img.dim(0) == maps.dim(0) && img.dim(2) == maps.dim(2) && img.dim(3) == maps.dim(3),
          "apply_curves: image/maps size mismatch");

  std::vector<TensorT<T>> states;
  states.reserve(static_cast<size_t>(n) + 1);
  states.push_back(img);
  for (int k = 0; k < n; ++k)
    states.push_back(le_step(states.back(), iteration_slice(maps, k, shared)));
  return states;
}

}  // namespace detail

/// n sequential curve steps, map slice k at iteration k (maps carry 3*n channels).
template <typename T>
TensorT<T> apply_curves(const TensorT<T>& img, const TensorT<T>& maps, int n) {
  return detail::curve_states(img, maps, n, false).back();
}

template <typename T>
TensorT<T> apply_curves(const TensorT<T>& img, const CurveParamMapsT<T>& maps) {
  require(!maps.shared, "apply_curves: maps are shared, use apply_curves_shared");
  return apply_curves(img, maps.maps, maps.iterations);
}

/// The same recursion with a single 3-channel map reused for all n iterations.
template <typename T>
TensorT<T> apply_curves_shared(const TensorT<T>& img, const TensorT<T>& map, int n) {
  return detail::curve_states(img, map, n, true).back();
}

template <typename T>
TensorT<T> apply_curves_shared(const TensorT<T>& img, const CurveParamMapsT<T>& maps) {
  require(maps.shared, "apply_curves_shared: maps are per-iteration");
  return apply_curves_shared(img, maps.maps, maps.iterations);
}

/// Dispatches on maps.shared.
template <typename T>
TensorT<T> enhance_with_maps(const TensorT<T>& img, const CurveParamMapsT<T>& maps) {
  return maps.shared ? apply_curves_shared(img, maps.maps, maps.iterations)
                     : apply_curves(img, maps.maps, maps.iterations);
}

/// Gradients of the iterated application given the saved forward states
/// (LE_0 .. LE_n) and d loss/d LE_n. Walks the chain backwards: at step k,
/// d/d alpha_k = g * LE_{k-1}(1-LE_{k-1}) and
/// g <- g * (1 + alpha_k (1 - 2 LE_{k-1})). For shared maps the per-iteration
/// alpha gradients all sum into the one map. Returns {d img, d maps}.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> curve_states_backward(const std::vector<TensorT<T>>& states,
                                                        const TensorT<T>& maps, int n, bool shared,
                                                        const TensorT<T>& d_out) {
  require_same_shape(states.back(), d_out, "curve_states_backward");
  const TensorT<T>& img = states.front();

  TensorT<T> d_maps(maps.shape);
  TensorT<T> g = d_out;
  const int64_t plane3 = static_cast<int64_t>(img.dim(1)) * img.dim(2) * img.dim(3);
  const int N = img.dim(0);
  for (int k = n - 1; k >= 0; --k) {
    const TensorT<T>& prev = states[static_cast<size_t>(k)];
    const TensorT<T> alpha = detail::iteration_slice(maps, k, shared);
    for (int b = 0; b < N; ++b) {
      const T* pv = &prev.at(b, 0, 0, 0);
      const T* av = &alpha.at(b, 0, 0, 0);
      T* gv = &g.at(b, 0, 0, 0);
      T* dm = shared ? &d_maps.at(b, 0, 0, 0) : &d_maps.at(b, 3 * k, 0, 0);
      for (int64_t i = 0; i < plane3; ++i) {
        const T v = pv[i];
        dm[i] += gv[i] * v * (T(1) - v);
        gv[i] *= T(1) + av[i] * (T(1) - T(2) * v);
      }
    }
  }
  return {std::move(g), std::move(d_maps)};
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> apply_curves_backward(const TensorT<T>& img,
                                                        const TensorT<T>& maps, int n, bool shared,
                                                        const TensorT<T>& d_out) {
  auto states = detail::curve_states(img, maps, n, shared);
  return curve_states_backward(states, maps, n, shared, d_out);
}

}  // namespace curvelight
