#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "curvelight/ops.hpp"
#include "curvelight/rng.hpp"
#include "testutil.hpp"

using namespace curvelight;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

Tensor identity_kernel_3x3(int channels) {
  Tensor w({channels, channels, 3, 3});
  for (int k = 0; k < channels; ++k) w.at(k, k, 1, 1) = 1.0f;
  return w;
}

}  // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
  Rng rng(1);
  const Tensor x = random_tensor({2, 3, 7, 9}, rng);
  const Tensor y = conv2d(x, identity_kernel_3x3(3), Tensor({3}));
  CHECK(max_abs_diff(x, y) <= 1e-6);
}

TEST_CASE("conv2d single pixel with all-ones kernel sees only the center tap") {
  Tensor x({1, 1, 1, 1}, std::vector<float>{2.0f});
  Tensor w({1, 1, 3, 3}, 1.0f);
  const Tensor y = conv2d(x, w, Tensor({1}));
  CHECK(y.data[0] == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("conv2d shape contract") {
  Rng rng(2);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const Tensor w = random_tensor({32, 3, 3, 3}, rng);
  const Tensor y = conv2d(x, w, Tensor({32}));
  CHECK(y.shape == std::vector<int>{2, 32, 8, 8});
  CHECK(all_finite(y));
}

TEST_CASE("conv2d channel mismatch is a hard error") {
  Rng rng(3);
  const Tensor x = random_tensor({1, 2, 4, 4}, rng);
  const Tensor w = random_tensor({4, 3, 3, 3}, rng);
  CHECK_THROWS_AS(conv2d(x, w, Tensor({4})), std::invalid_argument);
}

TEST_CASE("conv2d hand-checked 3x3 values with zero padding") {
  // 1x1x2x2 input; output at (0,0) only overlaps taps (1,1),(1,2),(2,1),(2,2).
  Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  Tensor w({1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) w.data[static_cast<size_t>(i)] = static_cast<float>(i + 1);
  const Tensor y = conv2d(x, w, Tensor({1}));
  // out(y0,x0) = sum_{ky,kx} x(y0+ky-1, x0+kx-1) * w(ky,kx), zeros off-image
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(1 * 5 + 2 * 6 + 3 * 8 + 4 * 9));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(1 * 4 + 2 * 5 + 3 * 7 + 4 * 8));
  CHECK(y.at(0, 0, 1, 0) == doctest::Approx(1 * 2 + 2 * 3 + 3 * 5 + 4 * 6));
  CHECK(y.at(0, 0, 1, 1) == doctest::Approx(1 * 1 + 2 * 2 + 3 * 4 + 4 * 5));
}

TEST_CASE("depthwise identity kernels reproduce the input") {
  Rng rng(4);
  const Tensor x = random_tensor({1, 4, 5, 6}, rng);
  Tensor w({4, 1, 3, 3});
  for (int c = 0; c < 4; ++c) w.at(c, 0, 1, 1) = 1.0f;
  const Tensor y = depthwise_conv2d(x, w, Tensor({4}));
  CHECK(max_abs_diff(x, y) <= 1e-6);
}

TEST_CASE("depthwise with channel-constant input counts in-bounds taps") {
  Tensor x({1, 2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    x.data[static_cast<size_t>(i)] = 3.0f;      // channel 0 = a
    x.data[static_cast<size_t>(4 + i)] = 5.0f;  // channel 1 = b
  }
  Tensor w({2, 1, 3, 3}, 1.0f);
  const Tensor y = depthwise_conv2d(x, w, Tensor({2}));
  // every output pixel of a 2x2 image under 3x3/pad1 sees exactly 4 in-bounds taps
  for (int i = 0; i < 4; ++i) {
    CHECK(y.data[static_cast<size_t>(i)] == doctest::Approx(4 * 3.0));
    CHECK(y.data[static_cast<size_t>(4 + i)] == doctest::Approx(4 * 5.0));
  }
}

TEST_CASE("depthwise equals conv2d with a block-diagonal kernel") {
  Rng rng(5);
  const Tensor x = random_tensor({1, 3, 5, 5}, rng);
  const Tensor dw = random_tensor({3, 1, 3, 3}, rng);
  const Tensor bias = random_tensor({3}, rng);

  Tensor block({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) block.at(c, c, ky, kx) = dw.at(c, 0, ky, kx);

  const Tensor a = depthwise_conv2d(x, dw, bias);
  const Tensor b = conv2d(x, block, bias);
  CHECK(max_abs_diff(a, b) <= 1e-6);
}

TEST_CASE("pointwise identity matrix reproduces the input") {
  Rng rng(6);
  const Tensor x = random_tensor({1, 4, 3, 3}, rng);
  Tensor w({4, 4, 1, 1});
  for (int k = 0; k < 4; ++k) w.at(k, k, 0, 0) = 1.0f;
  CHECK(max_abs_diff(x, pointwise_conv2d(x, w, Tensor({4}))) == 0.0);
}

TEST_CASE("pointwise is a per-pixel matrix-vector product") {
  Tensor x({1, 2, 1, 1}, std::vector<float>{1.0f, 2.0f});
  Tensor w({2, 2, 1, 1}, std::vector<float>{1, 1, 1, -1});
  const Tensor y = pointwise_conv2d(x, w, Tensor({2}));
  CHECK(y.data[0] == doctest::Approx(3.0));
  CHECK(y.data[1] == doctest::Approx(-1.0));
}

TEST_CASE("pointwise shape contract") {
  Rng rng(7);
  const Tensor x = random_tensor({1, 64, 10, 10}, rng);
  const Tensor w = random_tensor({3, 64, 1, 1}, rng);
  CHECK(pointwise_conv2d(x, w, Tensor({3})).shape == std::vector<int>{1, 3, 10, 10});
}

TEST_CASE("relu and tanh basics") {
  Tensor x({4}, std::vector<float>{-1.5f, 2.0f, 0.0f, -0.1f});
  const Tensor r = relu(x);
  CHECK(r.data[0] == 0.0f);
  CHECK(r.data[1] == 2.0f);
  CHECK(r.data[2] == 0.0f);

  Tensor z({1}, std::vector<float>{0.0f});
  CHECK(curvelight::tanh(z).data[0] == 0.0f);

  Rng rng(8);
  const Tensor t = curvelight::tanh(random_tensor({1, 2, 6, 6}, rng, -5.0f, 5.0f));
  for (const float v : t.data) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("concat_channels layout and slicing") {
  Rng rng(9);
  const Tensor a = random_tensor({1, 32, 4, 5}, rng);
  const Tensor b = random_tensor({1, 32, 4, 5}, rng);
  const Tensor c = concat_channels(a, b);
  CHECK(c.shape == std::vector<int>{1, 64, 4, 5});
  CHECK(max_abs_diff(slice_channels(c, 0, 32), a) == 0.0);
  CHECK(max_abs_diff(slice_channels(c, 32, 64), b) == 0.0);

  const Tensor bad = random_tensor({1, 32, 5, 5}, rng);
  CHECK_THROWS_AS(concat_channels(a, bad), std::invalid_argument);
}

TEST_CASE("avg_pool means, shape and partial-window drop") {
  Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  CHECK(avg_pool(x, 2).data[0] == doctest::Approx(2.5));

  Rng rng(10);
  const Tensor big = random_tensor({1, 3, 512, 512}, rng, 0.0f, 1.0f);
  CHECK(avg_pool(big, 16).shape == std::vector<int>{1, 3, 32, 32});

  const Tensor constant = Tensor({1, 2, 9, 9}, 0.7f);
  const Tensor pooled = avg_pool(constant, 4);  // 9/4 -> 2, trailing row/col dropped
  CHECK(pooled.shape == std::vector<int>{1, 2, 2, 2});
  for (const float v : pooled.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-6));

  CHECK_THROWS_AS(avg_pool(x, 0), std::invalid_argument);
  CHECK_THROWS_AS(avg_pool(x, -2), std::invalid_argument);
}

TEST_CASE("resize_bilinear align-corners hand values") {
  Tensor x({1, 1, 2, 2}, std::vector<float>{0, 1, 0, 1});
  const Tensor y = resize_bilinear(x, 2, 4);
  const float expect[4] = {0.0f, 1.0f / 3.0f, 2.0f / 3.0f, 1.0f};
  for (int i = 0; i < 4; ++i) {
    CHECK(y.at(0, 0, 0, i) == doctest::Approx(expect[i]).epsilon(1e-6));
    CHECK(y.at(0, 0, 1, i) == doctest::Approx(expect[i]).epsilon(1e-6));
  }
}

TEST_CASE("resize_bilinear constants survive a 12x round trip exactly") {
  const Tensor x = Tensor({1, 3, 96, 96}, 0.3f);
  const Tensor down = resize_bilinear(x, 8, 8);
  const Tensor up = resize_bilinear(down, 96, 96);
  CHECK(max_abs_diff(x, up) == 0.0);  // nested-lerp form is exact on constants
}

TEST_CASE("resize_bilinear to the same size is the identity") {
  Rng rng(11);
  const Tensor x = random_tensor({2, 3, 13, 7}, rng);
  CHECK(max_abs_diff(x, resize_bilinear(x, 13, 7)) <= 1e-7);
}

TEST_CASE("resize_bilinear output is a convex combination of inputs") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 2 + static_cast<int>(rng.below(6));
    const int w = 2 + static_cast<int>(rng.below(6));
    const int oh = 1 + static_cast<int>(rng.below(12));
    const int ow = 1 + static_cast<int>(rng.below(12));
    const Tensor x = random_tensor({1, 2, h, w}, rng);
    const Tensor y = resize_bilinear(x, oh, ow);
    const float lo = min_value(x), hi = max_value(x);
    const float slack = 1e-6f * std::max(1.0f, std::max(std::abs(lo), std::abs(hi)));
    CHECK(min_value(y) >= lo - slack);
    CHECK(max_value(y) <= hi + slack);
    CHECK(y.shape == std::vector<int>{1, 2, oh, ow});
  }
}

TEST_CASE("resize_bilinear rejects non-positive targets") {
  Rng rng(13);
  const Tensor x = random_tensor({1, 1, 4, 4}, rng);
  CHECK_THROWS_AS(resize_bilinear(x, 0, 4), std::invalid_argument);
  CHECK_THROWS_AS(resize_bilinear(x, 4, -1), std::invalid_argument);
}

TEST_CASE("output shapes are pure functions of input shapes") {
  // Same shapes in, same shapes out, across random value fills.
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(2));
    const int c = 1 + static_cast<int>(rng.below(4));
    const int k = 1 + static_cast<int>(rng.below(4));
    const int h = 3 + static_cast<int>(rng.below(6));
    const int w = 3 + static_cast<int>(rng.below(6));
    const Tensor x1 = random_tensor({n, c, h, w}, rng);
    const Tensor x2 = random_tensor({n, c, h, w}, rng);
    const Tensor wt = random_tensor({k, c, 3, 3}, rng);
    CHECK(conv2d(x1, wt, Tensor({k})).shape == conv2d(x2, wt, Tensor({k})).shape);
    CHECK(conv2d(x1, wt, Tensor({k})).shape == std::vector<int>{n, k, h, w});
    const int pool = 1 + static_cast<int>(rng.below(3));
    if (h / pool >= 1 && w / pool >= 1)
      CHECK(avg_pool(x1, pool).shape == std::vector<int>{n, c, h / pool, w / pool});
  }
}
