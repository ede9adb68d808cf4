#pragma once

#include <cmath>

#include "curvelight/tensor.hpp"
#include "curvelight/threads.hpp"

// Forward and backward kernels for the fixed op set: 3x3 "same" convolution
// (plain / depthwise / pointwise), ReLU, Tanh, channel concat, non-overlapping
// average pooling and align-corners bilinear resize. All convolutions are
// stride 1 with zero padding 1 so spatial size is preserved. Each output
// element is accumulated in a fixed loop order, so results do not depend on
// the worker count.

namespace curvelight {

namespace detail {

inline void check_nchw(const std::vector<int>& s, const char* what) {
  require(s.size() == 4, std::string(what) + ": expected a 4-D [N,C,H,W] tensor");
}

}  // namespace detail

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias) {
  detail::check_nchw(input.shape, "conv2d input");
  require(weight.rank() == 4 && weight.dim(2) == 3 && weight.dim(3) == 3,
          "conv2d: weight must be [K,C,3,3]");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int K = weight.dim(0);
  require(weight.dim(1) == C, "conv2d: input channels " + std::to_string(C) +
                                  " do not match weight channels " + std::to_string(weight.dim(1)));
  require(bias.rank() == 1 && bias.dim(0) == K, "conv2d: bias must be [K]");

  TensorT<T> out({N, K, H, W});
  parallel_for(static_cast<int64_t>(N) * K, [&](int64_t lo, int64_t hi) {
    for (int64_t nk = lo; nk < hi; ++nk) {
      const int n = static_cast<int>(nk / K);
      const int k = static_cast<int>(nk % K);
      T* op = &out.at(n, k, 0, 0);
      const T bk = bias.data[static_cast<size_t>(k)];
      for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) op[i] = bk;
      for (int c = 0; c < C; ++c) {
        const T* ip = &input.at(n, c, 0, 0);
        const T* wp = &weight.at(k, c, 0, 0);
        for (int ky = 0; ky < 3; ++ky) {
          const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
          for (int kx = 0; kx < 3; ++kx) {
            const T w = wp[ky * 3 + kx];
            const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
            for (int y = y0; y < y1; ++y) {
              T* orow = op + static_cast<int64_t>(y) * W;
              const T* irow = ip + static_cast<int64_t>(y + ky - 1) * W + (kx - 1);
              for (int x = x0; x < x1; ++x) orow[x] += w * irow[x];
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> conv2d_grad_input(const TensorT<T>& dout, const TensorT<T>& weight, int H, int W) {
  const int N = dout.dim(0), K = dout.dim(1);
  const int C = weight.dim(1);
  TensorT<T> din({N, C, H, W});
  parallel_for(static_cast<int64_t>(N) * C, [&](int64_t lo, int64_t hi) {
    for (int64_t nc = lo; nc < hi; ++nc) {
      const int n = static_cast<int>(nc / C);
      const int c = static_cast<int>(nc % C);
      T* dp = &din.at(n, c, 0, 0);
      for (int k = 0; k < K; ++k) {
        const T* gp = &dout.at(n, k, 0, 0);
        const T* wp = &weight.at(k, c, 0, 0);
        for (int ky = 0; ky < 3; ++ky) {
          const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
          for (int kx = 0; kx < 3; ++kx) {
            const T w = wp[ky * 3 + kx];
            const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
            for (int y = y0; y < y1; ++y) {
              T* drow = dp + static_cast<int64_t>(y + ky - 1) * W + (kx - 1);
              const T* grow = gp + static_cast<int64_t>(y) * W;
              for (int x = x0; x < x1; ++x) drow[x] += w * grow[x];
            }
          }
        }
      }
    }
  });
  return din;
}

template <typename T>
TensorT<T> conv2d_grad_weight(const TensorT<T>& input, const TensorT<T>& dout) {
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int K = dout.dim(1);
  TensorT<T> dw({K, C, 3, 3});
  parallel_for(K, [&](int64_t lo, int64_t hi) {
    for (int k = static_cast<int>(lo); k < hi; ++k) {
      for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
          const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
          for (int kx = 0; kx < 3; ++kx) {
            const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
            T acc = 0;
            for (int n = 0; n < N; ++n) {
              const T* ip = &input.at(n, c, 0, 0);
              const T* gp = &dout.at(n, k, 0, 0);
              for (int y = y0; y < y1; ++y) {
                const T* irow = ip + static_cast<int64_t>(y + ky - 1) * W + (kx - 1);
                const T* grow = gp + static_cast<int64_t>(y) * W;
                for (int x = x0; x < x1; ++x) acc += irow[x] * grow[x];
              }
            }
            dw.at(k, c, ky, kx) = acc;
          }
        }
      }
    }
  });
  return dw;
}

template <typename T>
TensorT<T> grad_bias(const TensorT<T>& dout) {
  const int N = dout.dim(0), K = dout.dim(1);
  const int64_t plane = static_cast<int64_t>(dout.dim(2)) * dout.dim(3);
  TensorT<T> db({K});
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      const T* gp = &dout.at(n, k, 0, 0);
      T acc = 0;
      for (int64_t i = 0; i < plane; ++i) acc += gp[i];
      db.data[static_cast<size_t>(k)] += acc;
    }
  return db;
}

/// One 3x3 kernel per channel; channel c of the output depends only on
/// channel c of the input.
template <typename T>
TensorT<T> depthwise_conv2d(const TensorT<T>& input, const TensorT<T>& weight,
                            const TensorT<T>& bias) {
  detail::check_nchw(input.shape, "depthwise_conv2d input");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  require(weight.rank() == 4 && weight.dim(1) == 1 && weight.dim(2) == 3 && weight.dim(3) == 3,
          "depthwise_conv2d: weight must be [C,1,3,3]");
  require(weight.dim(0) == C, "depthwise_conv2d: channel count mismatch");
  require(bias.rank() == 1 && bias.dim(0) == C, "depthwise_conv2d: bias must be [C]");

  TensorT<T> out({N, C, H, W});
  parallel_for(static_cast<int64_t>(N) * C, [&](int64_t lo, int64_t hi) {
    for (int64_t nc = lo; nc < hi; ++nc) {
      const int n = static_cast<int>(nc / C);
      const int c = static_cast<int>(nc % C);
      T* op = &out.at(n, c, 0, 0);
      const T* ip = &input.at(n, c, 0, 0);
      const T* wp = &weight.at(c, 0, 0, 0);
      const T bk = bias.data[static_cast<size_t>(c)];
      for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) op[i] = bk;
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const T w = wp[ky * 3 + kx];
          const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
          for (int y = y0; y < y1; ++y) {
            T* orow = op + static_cast<int64_t>(y) * W;
            const T* irow = ip + static_cast<int64_t>(y + ky - 1) * W + (kx - 1);
            for (int x = x0; x < x1; ++x) orow[x] += w * irow[x];
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> depthwise_grad_input(const TensorT<T>& dout, const TensorT<T>& weight) {
  const int N = dout.dim(0), C = dout.dim(1), H = dout.dim(2), W = dout.dim(3);
  TensorT<T> din({N, C, H, W});
  parallel_for(static_cast<int64_t>(N) * C, [&](int64_t lo, int64_t hi) {
    for (int64_t nc = lo; nc < hi; ++nc) {
      const int n = static_cast<int>(nc / C);
      const int c = static_cast<int>(nc % C);
      T* dp = &din.at(n, c, 0, 0);
      const T* gp = &dout.at(n, c, 0, 0);
      const T* wp = &weight.at(c, 0, 0, 0);
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const T w = wp[ky * 3 + kx];
          const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
          for (int y = y0; y < y1; ++y) {
            T* drow = dp + static_cast<int64_t>(y + ky - 1) * W + (kx - 1);
            const T* grow = gp + static_cast<int64_t>(y) * W;
            for (int x = x0; x < x1; ++x) drow[x] += w * grow[x];
          }
        }
      }
    }
  });
  return din;
}

template <typename T>
TensorT<T> depthwise_grad_weight(const TensorT<T>& input, const TensorT<T>& dout) {
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  TensorT<T> dw({C, 1, 3, 3});
  parallel_for(C, [&](int64_t lo, int64_t hi) {
    for (int c = static_cast<int>(lo); c < hi; ++c) {
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
          T acc = 0;
          for (int n = 0; n < N; ++n) {
            const T* ip = &input.at(n, c, 0, 0);
            const T* gp = &dout.at(n, c, 0, 0);
            for (int y = y0; y < y1; ++y) {
              const T* irow = ip + static_cast<int64_t>(y + ky - 1) * W + (kx - 1);
              const T* grow = gp + static_cast<int64_t>(y) * W;
              for (int x = x0; x < x1; ++x) acc += irow[x] * grow[x];
            }
          }
          dw.at(c, 0, ky, kx) = acc;
        }
      }
    }
  });
  return dw;
}

/// Per-pixel linear map across channels (1x1 kernels, no padding).
template <typename T>
TensorT<T> pointwise_conv2d(const TensorT<T>& input, const TensorT<T>& weight,
                            const TensorT<T>& bias) {
  detail::check_nchw(input.shape, "pointwise_conv2d input");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  require(weight.rank() == 4 && weight.dim(2) == 1 && weight.dim(3) == 1,
          "pointwise_conv2d: weight must be [K,C,1,1]");
  require(weight.dim(1) == C, "pointwise_conv2d: channel count mismatch");
  const int K = weight.dim(0);
  require(bias.rank() == 1 && bias.dim(0) == K, "pointwise_conv2d: bias must be [K]");

  const int64_t plane = static_cast<int64_t>(H) * W;
  TensorT<T> out({N, K, H, W});
  parallel_for(static_cast<int64_t>(N) * K, [&](int64_t lo, int64_t hi) {
    for (int64_t nk = lo; nk < hi; ++nk) {
      const int n = static_cast<int>(nk / K);
      const int k = static_cast<int>(nk % K);
      T* op = &out.at(n, k, 0, 0);
      const T bk = bias.data[static_cast<size_t>(k)];
      for (int64_t i = 0; i < plane; ++i) op[i] = bk;
      for (int c = 0; c < C; ++c) {
        const T w = weight.at(k, c, 0, 0);
        const T* ip = &input.at(n, c, 0, 0);
        for (int64_t i = 0; i < plane; ++i) op[i] += w * ip[i];
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> pointwise_grad_input(const TensorT<T>& dout, const TensorT<T>& weight) {
  const int N = dout.dim(0), K = dout.dim(1), H = dout.dim(2), W = dout.dim(3);
  const int C = weight.dim(1);
  const int64_t plane = static_cast<int64_t>(H) * W;
  TensorT<T> din({N, C, H, W});
  parallel_for(static_cast<int64_t>(N) * C, [&](int64_t lo, int64_t hi) {
    for (int64_t nc = lo; nc < hi; ++nc) {
      const int n = static_cast<int>(nc / C);
      const int c = static_cast<int>(nc % C);
      T* dp = &din.at(n, c, 0, 0);
      for (int k = 0; k < K; ++k) {
        const T w = weight.at(k, c, 0, 0);
        const T* gp = &dout.at(n, k, 0, 0);
        for (int64_t i = 0; i < plane; ++i) dp[i] += w * gp[i];
      }
    }
  });
  return din;
}

template <typename T>
TensorT<T> pointwise_grad_weight(const TensorT<T>& input, const TensorT<T>& dout) {
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int K = dout.dim(1);
  const int64_t plane = static_cast<int64_t>(H) * W;
  TensorT<T> dw({K, C, 1, 1});
  parallel_for(K, [&](int64_t lo, int64_t hi) {
    for (int k = static_cast<int>(lo); k < hi; ++k) {
      for (int c = 0; c < C; ++c) {
        T acc = 0;
        for (int n = 0; n < N; ++n) {
          const T* ip = &input.at(n, c, 0, 0);
          const T* gp = &dout.at(n, k, 0, 0);
          for (int64_t i = 0; i < plane; ++i) acc += ip[i] * gp[i];
        }
        dw.at(k, c, 0, 0) = acc;
      }
    }
  });
  return dw;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> out;
  out.shape = x.shape;
  out.data.resize(x.data.size());
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return out;
}

// Gradient at exactly 0 is defined as 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& dout) {
  TensorT<T> din;
  din.shape = x.shape;
  din.data.resize(x.data.size());
  for (size_t i = 0; i < x.data.size(); ++i)
    din.data[i] = x.data[i] > T(0) ? dout.data[i] : T(0);
  return din;
}

template <typename T>
TensorT<T> tanh(const TensorT<T>& x) {
  TensorT<T> out;
  out.shape = x.shape;
  out.data.resize(x.data.size());
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = std::tanh(x.data[i]);
  return out;
}

// Takes the forward output y; d tanh = 1 - y^2.
template <typename T>
TensorT<T> tanh_backward(const TensorT<T>& y, const TensorT<T>& dout) {
  TensorT<T> din;
  din.shape = y.shape;
  din.data.resize(y.data.size());
  for (size_t i = 0; i < y.data.size(); ++i)
    din.data[i] = dout.data[i] * (T(1) - y.data[i] * y.data[i]);
  return din;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_nchw(a.shape, "concat_channels");
  detail::check_nchw(b.shape, "concat_channels");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: batch/spatial mismatch " + shape_str(a) + " vs " + shape_str(b));
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  TensorT<T> out({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    std::copy_n(&a.at(n, 0, 0, 0), plane * Ca, &out.at(n, 0, 0, 0));
    std::copy_n(&b.at(n, 0, 0, 0), plane * Cb, &out.at(n, Ca, 0, 0));
  }
  return out;
}

/// Channels [c0, c1) of x as a new tensor.
template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x, int c0, int c1) {
  detail::check_nchw(x.shape, "slice_channels");
  require(0 <= c0 && c0 < c1 && c1 <= x.dim(1), "slice_channels: bad channel range");
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  TensorT<T> out({N, c1 - c0, H, W});
  for (int n = 0; n < N; ++n)
    std::copy_n(&x.at(n, c0, 0, 0), plane * (c1 - c0), &out.at(n, 0, 0, 0));
  return out;
}

/// Non-overlapping k x k mean pooling; trailing partial windows are dropped.
template <typename T>
TensorT<T> avg_pool(const TensorT<T>& x, int k) {
  detail::check_nchw(x.shape, "avg_pool");
  require(k > 0, "avg_pool: region size must be positive");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Hp = H / k, Wp = W / k;
  require(Hp >= 1 && Wp >= 1, "avg_pool: input " + std::to_string(H) + "x" + std::to_string(W) +
                                  " smaller than region " + std::to_string(k));
  TensorT<T> out({N, C, Hp, Wp});
  const T inv = T(1) / (T(k) * T(k));
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Hp; ++oy)
        for (int ox = 0; ox < Wp; ++ox) {
          T acc = 0;
          for (int dy = 0; dy < k; ++dy) {
            const T* row = &x.at(n, c, oy * k + dy, ox * k);
            for (int dx = 0; dx < k; ++dx) acc += row[dx];
          }
          out.at(n, c, oy, ox) = acc * inv;
        }
  return out;
}

template <typename T>
TensorT<T> avg_pool_backward(const TensorT<T>& dout, int k, int H, int W) {
  const int N = dout.dim(0), C = dout.dim(1), Hp = dout.dim(2), Wp = dout.dim(3);
  TensorT<T> din({N, C, H, W});
  const T inv = T(1) / (T(k) * T(k));
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Hp; ++oy)
        for (int ox = 0; ox < Wp; ++ox) {
          const T g = dout.at(n, c, oy, ox) * inv;
          for (int dy = 0; dy < k; ++dy) {
            T* row = &din.at(n, c, oy * k + dy, ox * k);
            for (int dx = 0; dx < k; ++dx) row[dx] += g;
          }
        }
  return din;
}

namespace detail {

// Align-corners source coordinate mapping; clamps the top source index so the
// rounded last coordinate never reads past the border.
template <typename T>
struct ResizeAxis {
  std::vector<int> i0, i1;
  std::vector<T> frac;
  ResizeAxis(int in, int out) : i0(out), i1(out), frac(out) {
    const T scale = out > 1 ? T(in - 1) / T(out - 1) : T(0);
    for (int o = 0; o < out; ++o) {
      T s = std::min(T(in - 1), std::max(T(0), T(o) * scale));
      int lo = static_cast<int>(s);
      i0[o] = lo;
      i1[o] = std::min(lo + 1, in - 1);
      frac[o] = s - T(lo);
    }
  }
};

}  // namespace detail

/// Bilinear resize, align-corners convention (corner pixels map exactly).
/// Constant inputs are preserved bit for bit.
template <typename T>
TensorT<T> resize_bilinear(const TensorT<T>& x, int out_h, int out_w) {
  detail::check_nchw(x.shape, "resize_bilinear");
  require(out_h >= 1 && out_w >= 1, "resize_bilinear: target size must be positive");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_h == H && out_w == W) return x;

  detail::ResizeAxis<T> ay(H, out_h), ax(W, out_w);
  TensorT<T> out({N, C, out_h, out_w});
  parallel_for(static_cast<int64_t>(N) * C, [&](int64_t lo, int64_t hi) {
    for (int64_t nc = lo; nc < hi; ++nc) {
      const int n = static_cast<int>(nc / C);
      const int c = static_cast<int>(nc % C);
      const T* ip = &x.at(n, c, 0, 0);
      T* op = &out.at(n, c, 0, 0);
      for (int oy = 0; oy < out_h; ++oy) {
        const T* r0 = ip + static_cast<int64_t>(ay.i0[oy]) * W;
        const T* r1 = ip + static_cast<int64_t>(ay.i1[oy]) * W;
        const T fy = ay.frac[oy];
        T* orow = op + static_cast<int64_t>(oy) * out_w;
        for (int ox = 0; ox < out_w; ++ox) {
          const int x0 = ax.i0[ox], x1 = ax.i1[ox];
          const T fx = ax.frac[ox];
          // Nested lerp keeps constants exact.
          const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
          const T bot = r1[x0] + fx * (r1[x1] - r1[x0]);
          orow[ox] = top + fy * (bot - top);
        }
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> resize_bilinear_backward(const TensorT<T>& dout, int in_h, int in_w) {
  const int N = dout.dim(0), C = dout.dim(1), out_h = dout.dim(2), out_w = dout.dim(3);
  if (out_h == in_h && out_w == in_w) return dout;

  detail::ResizeAxis<T> ay(in_h, out_h), ax(in_w, out_w);
  TensorT<T> din({N, C, in_h, in_w});
  parallel_for(static_cast<int64_t>(N) * C, [&](int64_t lo, int64_t hi) {
    for (int64_t nc = lo; nc < hi; ++nc) {
      const int n = static_cast<int>(nc / C);
      const int c = static_cast<int>(nc % C);
      T* dp = &din.at(n, c, 0, 0);
      const T* gp = &dout.at(n, c, 0, 0);
      for (int oy = 0; oy < out_h; ++oy) {
        T* r0 = dp + static_cast<int64_t>(ay.i0[oy]) * in_w;
        T* r1 = dp + static_cast<int64_t>(ay.i1[oy]) * in_w;
        const T fy = ay.frac[oy];
        const T* grow = gp + static_cast<int64_t>(oy) * out_w;
        for (int ox = 0; ox < out_w; ++ox) {
          const int x0 = ax.i0[ox], x1 = ax.i1[ox];
          const T fx = ax.frac[ox];
          const T g = grow[ox];
          r0[x0] += (T(1) - fy) * (T(1) - fx) * g;
          r0[x1] += (T(1) - fy) * fx * g;
          r1[x0] += fy * (T(1) - fx) * g;
          r1[x1] += fy * fx * g;
        }
      }
    }
  });
  return din;
}

}  // namespace curvelight
