#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curvelight/autodiff.hpp"
#include "curvelight/curve.hpp"
#include "curvelight/ops.hpp"
#include "curvelight/rng.hpp"
#include "curvelight/tensor.hpp"

// The curve-estimation network: a plain CNN of seven 3x3 convolution layers
// (stride 1, zero padding, no downsampling or normalization layers) with
// symmetric skip concatenations feeding the back half. Layers use ReLU except
// the last, which uses Tanh to bound the curve parameters in (-1,1).
//
//   layer i < m          : input = previous output (layer 0 reads the image)
//   layer i >= m = (l+1)/2: input = concat(out[i-1], out[l-1-i])
//
// The "plain" variant emits 3n maps (one RGB triple per curve iteration); the
// "dsc" variant replaces every convolution by a depthwise 3x3 + pointwise 1x1
// pair, emits a single shared 3-channel map, and by default estimates it on a
// 12x-downsampled input, resizing the maps back up before curve application.

namespace curvelight {

enum class Variant : uint8_t { plain = 0, dsc = 1 };

inline const char* variant_name(Variant v) { return v == Variant::plain ? "plain" : "dsc"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "plain") return Variant::plain;
  if (s == "dsc") return Variant::dsc;
  throw std::invalid_argument("unknown variant '" + s + "' (expected plain or dsc)");
}

/// One layer's parameters. Plain layers use {w, b}; dsc layers use the
/// depthwise pair {dw, db} followed by the pointwise pair {pw, pb}.
template <typename T>
struct LayerT {
  TensorT<T> w, b;          // plain: [K,C,3,3], [K]
  TensorT<T> dw, db, pw, pb;  // dsc: [C,1,3,3], [C], [K,C,1,1], [K]
};

template <typename T>
struct ModelT {
  Variant variant = Variant::plain;
  int iterations = 8;    // curve iterations n
  int downsample = 1;    // estimation downsample factor d
  int features = 32;     // width f of the hidden layers
  std::vector<LayerT<T>> layers;

  int layer_count() const { return static_cast<int>(layers.size()); }
  bool shared_maps() const { return variant == Variant::dsc; }
  int map_channels() const { return shared_maps() ? 3 : 3 * iterations; }

  /// Parameter tensors in a fixed (checkpoint) order.
  std::vector<TensorT<T>*> parameters() {
    std::vector<TensorT<T>*> out;
    for (auto& l : layers) {
      if (variant == Variant::plain) {
        out.push_back(&l.w);
        out.push_back(&l.b);
      } else {
        out.push_back(&l.dw);
        out.push_back(&l.db);
        out.push_back(&l.pw);
        out.push_back(&l.pb);
      }
    }
    return out;
  }
  std::vector<const TensorT<T>*> parameters() const {
    auto mut = const_cast<ModelT*>(this)->parameters();
    return {mut.begin(), mut.end()};
  }

  template <typename U>
  ModelT<U> cast() const {
    ModelT<U> out;
    out.variant = variant;
    out.iterations = iterations;
    out.downsample = downsample;
    out.features = features;
    out.layers.resize(layers.size());
    for (size_t i = 0; i < layers.size(); ++i) {
      out.layers[i].w = layers[i].w.template cast<U>();
      out.layers[i].b = layers[i].b.template cast<U>();
      out.layers[i].dw = layers[i].dw.template cast<U>();
      out.layers[i].db = layers[i].db.template cast<U>();
      out.layers[i].pw = layers[i].pw.template cast<U>();
      out.layers[i].pb = layers[i].pb.template cast<U>();
    }
    return out;
  }
};

using Model = ModelT<float>;

namespace detail {

// Which earlier outputs feed layer i; skip = -1 means no concatenation.
struct LayerInput {
  int prev;  // index of the previous output, -1 = network input
  int skip;
};

inline std::vector<LayerInput> layer_wiring(int l) {
  require(l >= 3 && l % 2 == 1, "layer count must be odd and >= 3");
  std::vector<LayerInput> w(static_cast<size_t>(l));
  const int m = (l + 1) / 2;
  for (int i = 0; i < l; ++i) w[static_cast<size_t>(i)] = {i - 1, i >= m ? l - 1 - i : -1};
  return w;
}

template <typename T>
TensorT<T> gaussian_tensor(std::vector<int> shape, Rng& rng, double stddev) {
  TensorT<T> t(std::move(shape));
  for (T& v : t.data) v = static_cast<T>(rng.gaussian(0.0, stddev));
  return t;
}

}  // namespace detail

/// Builds a model with the given depth l, width f and curve iterations n.
/// Weights are drawn from N(0, 0.02^2) with a seeded generator; biases start
/// at zero. Identical seeds give identical weights.
template <typename T>
ModelT<T> build_model(Variant variant, uint64_t seed, int l = 7, int f = 32, int n = 8,
                      int downsample = 0) {
  require(f >= 1, "feature count must be >= 1");
  require(n >= 1, "iteration count must be >= 1");
  const auto wiring = detail::layer_wiring(l);

  ModelT<T> model;
  model.variant = variant;
  model.iterations = n;
  model.downsample = downsample > 0 ? downsample : (variant == Variant::dsc ? 12 : 1);
  model.features = f;
  model.layers.resize(static_cast<size_t>(l));

  Rng rng(seed);
  const double stddev = 0.02;
  const int out_last = variant == Variant::dsc ? 3 : 3 * n;
  for (int i = 0; i < l; ++i) {
    const int in_ch = (i == 0) ? 3 : (wiring[static_cast<size_t>(i)].skip >= 0 ? 2 * f : f);
    const int out_ch = (i == l - 1) ? out_last : f;
    LayerT<T>& layer = model.layers[static_cast<size_t>(i)];
    if (variant == Variant::plain) {
      layer.w = detail::gaussian_tensor<T>({out_ch, in_ch, 3, 3}, rng, stddev);
      layer.b = TensorT<T>({out_ch});
    } else {
      layer.dw = detail::gaussian_tensor<T>({in_ch, 1, 3, 3}, rng, stddev);
      layer.db = TensorT<T>({in_ch});
      layer.pw = detail::gaussian_tensor<T>({out_ch, in_ch, 1, 1}, rng, stddev);
      layer.pb = TensorT<T>({out_ch});
    }
  }
  return model;
}

template <typename T>
int64_t param_count(const ModelT<T>& model) {
  int64_t total = 0;
  for (const auto* p : model.parameters()) total += p->numel();
  return total;
}

/// Runs the network on img (values in [0,1]) and returns the curve parameter
/// maps, same spatial size as img, all values in (-1,1).
template <typename T>
CurveParamMapsT<T> forward(const ModelT<T>& model, const TensorT<T>& img) {
  detail::check_nchw(img.shape, "forward");
  require(img.dim(1) == 3, "forward: expected a 3-channel image, got " +
                               std::to_string(img.dim(1)) + " channels");
  const int l = model.layer_count();
  const auto wiring = detail::layer_wiring(l);

  // Last consumer of each output, for early release.
  std::vector<int> last_use(static_cast<size_t>(l), 0);
  for (int i = 0; i < l; ++i) {
    if (wiring[static_cast<size_t>(i)].prev >= 0)
      last_use[static_cast<size_t>(wiring[static_cast<size_t>(i)].prev)] = i;
    if (wiring[static_cast<size_t>(i)].skip >= 0)
      last_use[static_cast<size_t>(wiring[static_cast<size_t>(i)].skip)] = i;
  }

  std::vector<TensorT<T>> outs(static_cast<size_t>(l));
  for (int i = 0; i < l; ++i) {
    const auto& wire = wiring[static_cast<size_t>(i)];
    const TensorT<T>& base = wire.prev < 0 ? img : outs[static_cast<size_t>(wire.prev)];
    TensorT<T> in = wire.skip < 0 ? base : concat_channels(base, outs[static_cast<size_t>(wire.skip)]);
    const LayerT<T>& layer = model.layers[static_cast<size_t>(i)];
    TensorT<T> z;
    if (model.variant == Variant::plain) {
      z = conv2d(in, layer.w, layer.b);
    } else {
      z = pointwise_conv2d(depthwise_conv2d(in, layer.dw, layer.db), layer.pw, layer.pb);
    }
    outs[static_cast<size_t>(i)] = (i == l - 1) ? tanh(z) : relu(z);
    for (int j = 0; j < i; ++j)
      if (last_use[static_cast<size_t>(j)] == i) outs[static_cast<size_t>(j)] = TensorT<T>();
  }
  return CurveParamMapsT<T>{std::move(outs.back()), model.iterations, model.shared_maps()};
}

/// Taped forward for training; returns the maps variable. Parameter leaves
/// must already be on the tape, in the order of model.parameters().
template <typename T>
typename Tape<T>::Var forward_taped(const ModelT<T>& model, Tape<T>& tape,
                                    typename Tape<T>::Var img,
                                    const std::vector<typename Tape<T>::Var>& params) {
  const int l = model.layer_count();
  const auto wiring = detail::layer_wiring(l);
  const size_t per_layer = model.variant == Variant::plain ? 2 : 4;
  require(params.size() == per_layer * static_cast<size_t>(l),
          "forward_taped: parameter list does not match the model");

  std::vector<typename Tape<T>::Var> outs(static_cast<size_t>(l));
  for (int i = 0; i < l; ++i) {
    const auto& wire = wiring[static_cast<size_t>(i)];
    auto base = wire.prev < 0 ? img : outs[static_cast<size_t>(wire.prev)];
    auto in = wire.skip < 0 ? base
                            : t_concat_channels(tape, base, outs[static_cast<size_t>(wire.skip)]);
    const size_t p = per_layer * static_cast<size_t>(i);
    typename Tape<T>::Var z;
    if (model.variant == Variant::plain) {
      z = t_conv2d(tape, in, params[p], params[p + 1]);
    } else {
      auto dw = t_depthwise_conv2d(tape, in, params[p], params[p + 1]);
      z = t_pointwise_conv2d(tape, dw, params[p + 2], params[p + 3]);
    }
    outs[static_cast<size_t>(i)] = (i == l - 1) ? t_tanh(tape, z) : t_relu(tape, z);
  }
  return outs.back();
}

/// Full enhancement: estimate maps (on a downsampled copy when the model's
/// factor d > 1), resize them to the input size, then apply the curves at
/// full resolution. Inputs smaller than d x d are rejected.
template <typename T>
TensorT<T> enhance(const ModelT<T>& model, const TensorT<T>& img) {
  detail::check_nchw(img.shape, "enhance");
  const int H = img.dim(2), W = img.dim(3);
  const int d = model.downsample;
  CurveParamMapsT<T> maps;
  if (d > 1) {
    require(H / d >= 1 && W / d >= 1,
            "enhance: input " + std::to_string(W) + "x" + std::to_string(H) +
                " is too small for downsample factor " + std::to_string(d) + "; minimum is " +
                std::to_string(d) + "x" + std::to_string(d));
    maps = forward(model, resize_bilinear(img, H / d, W / d));
    maps.maps = resize_bilinear(maps.maps, H, W);
  } else {
    maps = forward(model, img);
  }
  return enhance_with_maps(img, maps);
}

/// Analytic multiply-accumulate count at the model's operating resolution:
/// convolutions count one MAC per multiply-add with biases excluded, plus the
/// curve application at full resolution (2 MACs per pixel, channel and
/// iteration for out = I + A*I*(1-I)).
template <typename T>
double flops(const ModelT<T>& model, int height, int width) {
  require(height > 0 && width > 0, "flops: dimensions must be positive");
  const int d = model.downsample;
  require(height / d >= 1 && width / d >= 1, "flops: input smaller than the downsample factor");
  const double net_px = static_cast<double>(height / d) * static_cast<double>(width / d);

  double macs = 0.0;
  for (const auto& layer : model.layers) {
    if (model.variant == Variant::plain) {
      macs += static_cast<double>(layer.w.numel()) * net_px;
    } else {
      macs += static_cast<double>(layer.dw.numel() + layer.pw.numel()) * net_px;
    }
  }
  macs += 2.0 * 3.0 * model.iterations * static_cast<double>(height) * static_cast<double>(width);
  return macs;
}

}  // namespace curvelight
