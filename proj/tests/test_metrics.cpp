#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "curvelight/metrics.hpp"
#include "curvelight/rng.hpp"
#include "testutil.hpp"

using namespace curvelight;

namespace {

// Brute-force oracles, written directly from the definitions and kept
// independent of the implementation (no separable filtering).

double oracle_mse_8bit(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = (static_cast<double>(a.data[i]) - b.data[i]) * 255.0;
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

double oracle_mae(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    acc += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  return acc / static_cast<double>(a.numel()) * 255.0;
}

double oracle_ssim(const Tensor& a, const Tensor& b) {
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  double kernel[kWin][kWin];
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double dy = i - (kWin - 1) / 2.0, dx = j - (kWin - 1) / 2.0;
      kernel[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * kSigma * kSigma));
      ksum += kernel[i][j];
    }
  for (auto& row : kernel)
    for (double& v : row) v /= ksum;

  auto px = [&](const Tensor& t, int c, int y, int x) {
    return static_cast<double>(
        t.data[(static_cast<size_t>(c) * H + y) * static_cast<size_t>(W) + x]);
  };

  double total = 0.0;
  int64_t count = 0;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y + kWin <= H; ++y)
      for (int x = 0; x + kWin <= W; ++x) {
        double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            const double va = px(a, c, y + i, x + j);
            const double vb = px(b, c, y + i, x + j);
            const double k = kernel[i][j];
            mx += k * va;
            my += k * vb;
            mxx += k * va * va;
            myy += k * vb * vb;
            mxy += k * va * vb;
          }
        const double var_x = mxx - mx * mx, var_y = myy - my * my, cov = mxy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                 ((mx * mx + my * my + c1) * (var_x + var_y + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

// at() for [C,H,W] tensors used by the oracle
}  // namespace

TEST_CASE("psnr basics") {
  Rng rng(1);
  const Tensor a = testutil::random_unit_tensor({3, 24, 24}, rng);
  CHECK(std::isinf(psnr(a, a)));

  // uniform difference of exactly 1/255 -> MSE_8bit = 1 -> 10*log10(65025)
  Tensor b = a;
  for (float& v : b.data) v = v > 0.5f ? v - 1.0f / 255.0f : v + 1.0f / 255.0f;
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(65025.0)).epsilon(1e-4));
  CHECK(psnr(a, b) == doctest::Approx(48.13).epsilon(1e-3));
  CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)));
}

TEST_CASE("mae basics") {
  Rng rng(2);
  const Tensor a = testutil::random_unit_tensor({3, 16, 16}, rng);
  CHECK(mae(a, a) == 0.0);

  Tensor half({3, 8, 8}, 0.25f);
  Tensor offset({3, 8, 8}, 0.75f);
  CHECK(mae(half, offset) == doctest::Approx(127.5).epsilon(1e-6));

  const Tensor b = testutil::random_unit_tensor({3, 16, 16}, rng);
  CHECK(mae(a, b) >= 0.0);
  CHECK(mae(a, b) <= 255.0);
}

TEST_CASE("psnr and mae agree with the direct oracles") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor a = testutil::random_unit_tensor({3, 20, 17}, rng);
    const Tensor b = testutil::random_unit_tensor({3, 20, 17}, rng);
    CHECK(psnr(a, b) ==
          doctest::Approx(10.0 * std::log10(255.0 * 255.0 / oracle_mse_8bit(a, b)))
              .epsilon(1e-9));
    CHECK(mae(a, b) == doctest::Approx(oracle_mae(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("psnr/mae are invariant to a shared constant shift") {
  Rng rng(4);
  Tensor a = testutil::random_unit_tensor({3, 16, 16}, rng);
  Tensor b = testutil::random_unit_tensor({3, 16, 16}, rng);
  for (float& v : a.data) v *= 0.5f;
  for (float& v : b.data) v *= 0.5f;
  Tensor a2 = a, b2 = b;
  for (float& v : a2.data) v += 0.25f;
  for (float& v : b2.data) v += 0.25f;
  // loose epsilon: the float additions themselves re-round the inputs
  CHECK(psnr(a, b) == doctest::Approx(psnr(a2, b2)).epsilon(1e-4));
  CHECK(mae(a, b) == doctest::Approx(mae(a2, b2)).epsilon(1e-4));
}

TEST_CASE("ssim of an image with itself is exactly 1") {
  Rng rng(5);
  const Tensor a = testutil::random_unit_tensor({3, 16, 19}, rng);
  CHECK(ssim(a, a) == 1.0);
}

TEST_CASE("ssim is symmetric and bounded") {
  Rng rng(6);
  const Tensor a = testutil::random_unit_tensor({3, 16, 16}, rng);
  const Tensor b = testutil::random_unit_tensor({3, 16, 16}, rng);
  const double s = ssim(a, b);
  CHECK(s == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
}

TEST_CASE("ssim agrees with the brute-force windowed oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor a = testutil::random_unit_tensor({3, 18, 15}, rng);
    const Tensor b = testutil::random_unit_tensor({3, 18, 15}, rng);
    CHECK(std::abs(ssim(a, b) - oracle_ssim(a, b)) <= 1e-6);
  }
  // structured natural images, not just noise
  const Tensor s1 = testutil::synth_image(100, 32, 0.3);
  const Tensor s2 = testutil::synth_image(101, 32, 0.6);
  CHECK(std::abs(ssim(s1, s2) - oracle_ssim(s1, s2)) <= 1e-6);
}

TEST_CASE("ssim rejects images smaller than the window") {
  const Tensor small({3, 10, 16}, 0.5f);
  CHECK_THROWS_AS(ssim(small, small), std::invalid_argument);
}

TEST_CASE("metric pairs must have matching shapes") {
  const Tensor a({3, 16, 16}, 0.5f);
  const Tensor b({3, 16, 17}, 0.5f);
  CHECK_THROWS_AS(psnr(a, b), std::invalid_argument);
  CHECK_THROWS_AS(mae(a, b), std::invalid_argument);
  CHECK_THROWS_AS(ssim(a, b), std::invalid_argument);
}

TEST_CASE("report CSV carries per-image rows plus the mean row") {
  MetricReport report;
  report.rows.push_back({"a.png", 30.0, 0.9, 10.0});
  report.rows.push_back({"b.png", 20.0, 0.7, 30.0});
  const MetricRow mean = report.mean_row();
  CHECK(mean.psnr == doctest::Approx(25.0));
  CHECK(mean.ssim == doctest::Approx(0.8));
  CHECK(mean.mae == doctest::Approx(20.0));

  const std::string csv = report.to_csv();
  CHECK(csv.find("filename,psnr,ssim,mae\n") == 0);
  CHECK(csv.find("a.png,30.000000,0.900000,10.000000\n") != std::string::npos);
  CHECK(csv.find("mean,25.000000,0.800000,20.000000\n") != std::string::npos);

  MetricReport with_inf;
  with_inf.rows.push_back({"same.png", std::numeric_limits<double>::infinity(), 1.0, 0.0});
  CHECK(with_inf.to_csv().find("same.png,inf,1.000000,0.000000") != std::string::npos);
}
