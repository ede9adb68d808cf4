#pragma once

#include <array>
#include <cmath>

#include "curvelight/ops.hpp"
#include "curvelight/tensor.hpp"

// The four non-reference training losses. Spatial terms are normalized as
// means (not raw sums) so the loss weights transfer across resolutions, and
// every loss averages over the batch dimension. Gradients are analytic; the
// |.| kinks use sign(0) = 0.

namespace curvelight {

template <typename T>
struct LossConfigT {
  T exposure_level = T(0.6);  // well-exposedness target E
  T w_col = T(0.5);
  T w_tv = T(20);
  int spa_region = 4;
  int exp_region = 16;

  void validate() const {
    require(exposure_level > T(0) && exposure_level < T(1), "loss config: E must be in (0,1)");
    require(w_col >= T(0) && w_tv >= T(0), "loss config: weights must be >= 0");
    require(spa_region >= 1 && exp_region >= 1, "loss config: region sizes must be >= 1");
  }
};

using LossConfig = LossConfigT<float>;

namespace detail {

template <typename T>
inline T sign(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

// Mean intensity of non-overlapping region x region windows (intensity = mean
// over channels), accumulated in double so a constant image yields its exact
// value back. Trailing partial windows are dropped.
template <typename T>
TensorT<double> region_intensity_means(const TensorT<T>& img, int region) {
  check_nchw(img.shape, "region_intensity_means");
  require(region > 0, "loss region size must be positive");
  const int N = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
  const int Hp = H / region, Wp = W / region;
  require(Hp >= 1 && Wp >= 1, "loss input " + std::to_string(H) + "x" + std::to_string(W) +
                                  " smaller than the " + std::to_string(region) + "x" +
                                  std::to_string(region) + " region");
  TensorT<double> out({N, 1, Hp, Wp});
  const double denom = static_cast<double>(C) * region * region;
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < Hp; ++oy)
      for (int ox = 0; ox < Wp; ++ox) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c)
          for (int dy = 0; dy < region; ++dy) {
            const T* row = &img.at(n, c, oy * region + dy, ox * region);
            for (int dx = 0; dx < region; ++dx) acc += static_cast<double>(row[dx]);
          }
        out.at(n, 0, oy, ox) = acc / denom;
      }
  return out;
}

// Adjoint of region_intensity_means: spreads each region's gradient evenly
// over its pixels and channels.
template <typename T>
TensorT<T> region_means_backward(const TensorT<double>& d_grid, int region, int channels, int H,
                                 int W) {
  const int N = d_grid.dim(0), Hp = d_grid.dim(2), Wp = d_grid.dim(3);
  TensorT<T> out({N, channels, H, W});
  const double denom = static_cast<double>(channels) * region * region;
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < Hp; ++oy)
      for (int ox = 0; ox < Wp; ++ox) {
        const T g = static_cast<T>(d_grid.at(n, 0, oy, ox) / denom);
        for (int c = 0; c < channels; ++c)
          for (int dy = 0; dy < region; ++dy) {
            T* row = &out.at(n, c, oy * region + dy, ox * region);
            for (int dx = 0; dx < region; ++dx) row[dx] += g;
          }
      }
  return out;
}

constexpr std::array<std::array<int, 2>, 4> kNeighborOffsets = {{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

}  // namespace detail

/// Penalizes changes in regional contrast between input and enhanced image:
/// mean over ordered in-bounds neighbor pairs of (|Y_i-Y_j| - |I_i-I_j|)^2,
/// where Y and I are region-mean intensities (out-of-grid neighbors skipped).
template <typename T>
T spatial_consistency(const TensorT<T>& input, const TensorT<T>& enhanced, int region = 4) {
  require_same_shape(input, enhanced, "spatial_consistency");
  const TensorT<double> yg = detail::region_intensity_means(enhanced, region);
  const TensorT<double> ig = detail::region_intensity_means(input, region);
  const int N = yg.dim(0), Hp = yg.dim(2), Wp = yg.dim(3);

  int64_t terms = 0;
  double acc = 0.0;
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < Hp; ++y)
      for (int x = 0; x < Wp; ++x)
        for (const auto& off : detail::kNeighborOffsets) {
          const int ny = y + off[0], nx = x + off[1];
          if (ny < 0 || ny >= Hp || nx < 0 || nx >= Wp) continue;
          const double dy = std::abs(yg.at(n, 0, y, x) - yg.at(n, 0, ny, nx));
          const double di = std::abs(ig.at(n, 0, y, x) - ig.at(n, 0, ny, nx));
          acc += (dy - di) * (dy - di);
          ++terms;
        }
  // terms == per-image terms * N, so this is the batch mean of per-image means.
  if (terms == 0) return T(0);
  return static_cast<T>(acc / static_cast<double>(terms));
}

/// d spatial_consistency / d enhanced, scaled by upstream.
template <typename T>
TensorT<T> spatial_consistency_backward(const TensorT<T>& input, const TensorT<T>& enhanced,
                                        int region, T upstream) {
  const TensorT<double> yg = detail::region_intensity_means(enhanced, region);
  const TensorT<double> ig = detail::region_intensity_means(input, region);
  const int N = yg.dim(0), Hp = yg.dim(2), Wp = yg.dim(3);

  int64_t per_image_terms = 0;
  for (int y = 0; y < Hp; ++y)
    for (int x = 0; x < Wp; ++x)
      for (const auto& off : detail::kNeighborOffsets) {
        const int ny = y + off[0], nx = x + off[1];
        if (ny >= 0 && ny < Hp && nx >= 0 && nx < Wp) ++per_image_terms;
      }

  TensorT<double> d_grid({N, 1, Hp, Wp});
  if (per_image_terms > 0) {
    const double norm =
        static_cast<double>(upstream) / (static_cast<double>(per_image_terms) * N);
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < Hp; ++y)
        for (int x = 0; x < Wp; ++x)
          for (const auto& off : detail::kNeighborOffsets) {
            const int ny = y + off[0], nx = x + off[1];
            if (ny < 0 || ny >= Hp || nx < 0 || nx >= Wp) continue;
            const double ydiff = yg.at(n, 0, y, x) - yg.at(n, 0, ny, nx);
            const double idiff = ig.at(n, 0, y, x) - ig.at(n, 0, ny, nx);
            const double coef =
                2.0 * (std::abs(ydiff) - std::abs(idiff)) * detail::sign(ydiff) * norm;
            d_grid.at(n, 0, y, x) += coef;
            d_grid.at(n, 0, ny, nx) -= coef;
          }
  }
  return detail::region_means_backward<T>(d_grid, region, enhanced.dim(1), enhanced.dim(2),
                                          enhanced.dim(3));
}

/// Mean distance of region-mean intensity from the well-exposedness level E
/// over non-overlapping regions (16x16 by default).
template <typename T>
T exposure_control(const TensorT<T>& enhanced, T exposure_level, int region = 16) {
  const TensorT<double> yg = detail::region_intensity_means(enhanced, region);
  const double level = static_cast<double>(exposure_level);
  double acc = 0.0;
  for (const double v : yg.data) acc += std::abs(v - level);
  return static_cast<T>(acc / static_cast<double>(yg.numel()));
}

template <typename T>
TensorT<T> exposure_control_backward(const TensorT<T>& enhanced, T exposure_level, int region,
                                     T upstream) {
  const TensorT<double> yg = detail::region_intensity_means(enhanced, region);
  const double level = static_cast<double>(exposure_level);
  TensorT<double> d_grid;
  d_grid.shape = yg.shape;
  d_grid.data.resize(yg.data.size());
  const double norm = static_cast<double>(upstream) / static_cast<double>(yg.numel());
  for (size_t i = 0; i < yg.data.size(); ++i)
    d_grid.data[i] = detail::sign(yg.data[i] - level) * norm;
  return detail::region_means_backward<T>(d_grid, region, enhanced.dim(1), enhanced.dim(2),
                                          enhanced.dim(3));
}

/// Gray-world loss: squared pairwise differences of the per-channel global
/// means, over the pairs (R,G), (R,B), (G,B); averaged over the batch.
template <typename T>
T color_constancy(const TensorT<T>& enhanced) {
  detail::check_nchw(enhanced.shape, "color_constancy");
  require(enhanced.dim(1) == 3, "color_constancy: expected 3 channels");
  const int N = enhanced.dim(0);
  const int64_t plane = static_cast<int64_t>(enhanced.dim(2)) * enhanced.dim(3);
  double acc = 0.0;
  for (int n = 0; n < N; ++n) {
    double j[3];
    for (int c = 0; c < 3; ++c) {
      const T* p = &enhanced.at(n, c, 0, 0);
      double s = 0.0;
      for (int64_t i = 0; i < plane; ++i) s += static_cast<double>(p[i]);
      j[c] = s / static_cast<double>(plane);
    }
    acc += (j[0] - j[1]) * (j[0] - j[1]) + (j[0] - j[2]) * (j[0] - j[2]) +
           (j[1] - j[2]) * (j[1] - j[2]);
  }
  return static_cast<T>(acc / static_cast<double>(N));
}

template <typename T>
TensorT<T> color_constancy_backward(const TensorT<T>& enhanced, T upstream) {
  const int N = enhanced.dim(0);
  const int64_t plane = static_cast<int64_t>(enhanced.dim(2)) * enhanced.dim(3);
  TensorT<T> out;
  out.shape = enhanced.shape;
  out.data.resize(enhanced.data.size());
  for (int n = 0; n < N; ++n) {
    double j[3];
    for (int c = 0; c < 3; ++c) {
      const T* p = &enhanced.at(n, c, 0, 0);
      double s = 0.0;
      for (int64_t i = 0; i < plane; ++i) s += static_cast<double>(p[i]);
      j[c] = s / static_cast<double>(plane);
    }
    // d/dJ_p distributes uniformly over the channel's pixels.
    for (int c = 0; c < 3; ++c) {
      double dj = 0.0;
      for (int q = 0; q < 3; ++q)
        if (q != c) dj += 2.0 * (j[c] - j[q]);
      const T per_px =
          static_cast<T>(dj / static_cast<double>(plane) / static_cast<double>(N)) * upstream;
      T* p = &out.at(n, c, 0, 0);
      for (int64_t i = 0; i < plane; ++i) p[i] = per_px;
    }
  }
  return out;
}

/// Total-variation style penalty on the curve parameter maps: per channel,
/// (mean|forward dx| + mean|forward dy|)^2, summed over channels and divided
/// by the iteration count; averaged over the batch. 1x1 maps contribute 0.
template <typename T>
T illumination_smoothness(const TensorT<T>& maps, int iterations) {
  detail::check_nchw(maps.shape, "illumination_smoothness");
  require(iterations >= 1, "illumination_smoothness: iterations must be >= 1");
  const int N = maps.dim(0), C = maps.dim(1), H = maps.dim(2), W = maps.dim(3);
  const int64_t cx = static_cast<int64_t>(H) * (W - 1);
  const int64_t cy = static_cast<int64_t>(H - 1) * W;
  if (cx == 0 && cy == 0) return T(0);

  double acc = 0.0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = &maps.at(n, c, 0, 0);
      double gx = 0.0, gy = 0.0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x + 1 < W; ++x)
          gx += std::abs(static_cast<double>(p[y * W + x + 1] - p[y * W + x]));
      for (int y = 0; y + 1 < H; ++y)
        for (int x = 0; x < W; ++x)
          gy += std::abs(static_cast<double>(p[(y + 1) * W + x] - p[y * W + x]));
      const double mx = cx > 0 ? gx / static_cast<double>(cx) : 0.0;
      const double my = cy > 0 ? gy / static_cast<double>(cy) : 0.0;
      acc += (mx + my) * (mx + my);
    }
  return static_cast<T>(acc / static_cast<double>(iterations) / static_cast<double>(N));
}

template <typename T>
TensorT<T> illumination_smoothness_backward(const TensorT<T>& maps, int iterations, T upstream) {
  const int N = maps.dim(0), C = maps.dim(1), H = maps.dim(2), W = maps.dim(3);
  const int64_t cx = static_cast<int64_t>(H) * (W - 1);
  const int64_t cy = static_cast<int64_t>(H - 1) * W;
  TensorT<T> out(maps.shape);
  if (cx == 0 && cy == 0) return out;

  const T batch_norm = upstream / (static_cast<T>(iterations) * static_cast<T>(N));
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = &maps.at(n, c, 0, 0);
      T* d = &out.at(n, c, 0, 0);
      double gx = 0.0, gy = 0.0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x + 1 < W; ++x)
          gx += std::abs(static_cast<double>(p[y * W + x + 1] - p[y * W + x]));
      for (int y = 0; y + 1 < H; ++y)
        for (int x = 0; x < W; ++x)
          gy += std::abs(static_cast<double>(p[(y + 1) * W + x] - p[y * W + x]));
      const double mx = cx > 0 ? gx / static_cast<double>(cx) : 0.0;
      const double my = cy > 0 ? gy / static_cast<double>(cy) : 0.0;
      const T coef = static_cast<T>(2.0 * (mx + my)) * batch_norm;
      if (cx > 0) {
        const T fx = coef / static_cast<T>(cx);
        for (int y = 0; y < H; ++y)
          for (int x = 0; x + 1 < W; ++x) {
            const T s = detail::sign(p[y * W + x + 1] - p[y * W + x]);
            d[y * W + x + 1] += fx * s;
            d[y * W + x] -= fx * s;
          }
      }
      if (cy > 0) {
        const T fy = coef / static_cast<T>(cy);
        for (int y = 0; y + 1 < H; ++y)
          for (int x = 0; x < W; ++x) {
            const T s = detail::sign(p[(y + 1) * W + x] - p[y * W + x]);
            d[(y + 1) * W + x] += fy * s;
            d[y * W + x] -= fy * s;
          }
      }
    }
  return out;
}

template <typename T>
struct LossBreakdownT {
  T spa = 0, exp = 0, col = 0, tv = 0, total = 0;
};

using LossBreakdown = LossBreakdownT<float>;

/// L_total = L_spa + L_exp + W_col * L_col + W_tv * L_tv.
template <typename T>
LossBreakdownT<T> total_loss(const TensorT<T>& input, const TensorT<T>& enhanced,
                             const TensorT<T>& maps, int iterations, const LossConfigT<T>& cfg) {
  LossBreakdownT<T> out;
  out.spa = spatial_consistency(input, enhanced, cfg.spa_region);
  out.exp = exposure_control(enhanced, cfg.exposure_level, cfg.exp_region);
  out.col = color_constancy(enhanced);
  out.tv = illumination_smoothness(maps, iterations);
  out.total = out.spa + out.exp + cfg.w_col * out.col + cfg.w_tv * out.tv;
  return out;
}

}  // namespace curvelight
