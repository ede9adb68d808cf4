#pragma once

#include <vector>

#include "curvelight/autodiff.hpp"
#include "curvelight/losses.hpp"
#include "curvelight/model.hpp"

// The full training objective: estimate curve maps (downsampled when the
// model says so), enhance, and score with the four non-reference losses.
// Instantiated at float for training and at double for the finite-difference
// checks.

namespace curvelight {

template <typename T>
struct ObjectiveResult {
  LossBreakdownT<T> loss;
  std::vector<TensorT<T>> grads;  // d total / d parameter, in parameters() order
};

/// Forward pass only; no tape.
template <typename T>
LossBreakdownT<T> objective_value(const ModelT<T>& model, const TensorT<T>& batch,
                                  const LossConfigT<T>& cfg) {
  const int H = batch.dim(2), W = batch.dim(3);
  const int d = model.downsample;
  CurveParamMapsT<T> maps;
  if (d > 1) {
    require(H / d >= 1 && W / d >= 1, "objective: image smaller than the downsample factor");
    maps = forward(model, resize_bilinear(batch, H / d, W / d));
    maps.maps = resize_bilinear(maps.maps, H, W);
  } else {
    maps = forward(model, batch);
  }
  const TensorT<T> enhanced = enhance_with_maps(batch, maps);
  return total_loss(batch, enhanced, maps.maps, model.shared_maps() ? 1 : model.iterations, cfg);
}

/// Forward + backward; gradients for every parameter tensor.
template <typename T>
ObjectiveResult<T> objective_with_grads(const ModelT<T>& model, const TensorT<T>& batch,
                                        const LossConfigT<T>& cfg) {
  using Var = typename Tape<T>::Var;
  Tape<T> tape;

  auto params = const_cast<ModelT<T>&>(model).parameters();
  std::vector<Var> param_vars;
  param_vars.reserve(params.size());
  for (auto* p : params) param_vars.push_back(tape.leaf(*p, true));

  const Var img = tape.leaf(batch, false);
  const int H = batch.dim(2), W = batch.dim(3);
  const int d = model.downsample;

  Var maps;
  if (d > 1) {
    require(H / d >= 1 && W / d >= 1, "objective: image smaller than the downsample factor");
    Var small = t_resize_bilinear(tape, img, H / d, W / d);
    Var maps_small = forward_taped(model, tape, small, param_vars);
    maps = t_resize_bilinear(tape, maps_small, H, W);
  } else {
    maps = forward_taped(model, tape, img, param_vars);
  }

  const Var enhanced = t_apply_curves(tape, batch, maps, model.iterations, model.shared_maps());
  const int tv_groups = model.shared_maps() ? 1 : model.iterations;

  const Var spa = t_spatial_consistency(tape, batch, enhanced, cfg.spa_region);
  const Var exp = t_exposure_control(tape, enhanced, cfg.exposure_level, cfg.exp_region);
  const Var col = t_color_constancy(tape, enhanced);
  const Var tv = t_illumination_smoothness(tape, maps, tv_groups);
  const Var total =
      t_weighted_sum(tape, {spa, exp, col, tv}, {T(1), T(1), cfg.w_col, cfg.w_tv});

  ObjectiveResult<T> out;
  out.loss.spa = tape.value(spa).data[0];
  out.loss.exp = tape.value(exp).data[0];
  out.loss.col = tape.value(col).data[0];
  out.loss.tv = tape.value(tv).data[0];
  out.loss.total = tape.value(total).data[0];

  tape.backward(total);
  out.grads.reserve(param_vars.size());
  for (const Var v : param_vars) out.grads.push_back(tape.grad(v));
  return out;
}

}  // namespace curvelight
