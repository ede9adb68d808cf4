#include "curvelight/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace curvelight {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  require(a.rank() == 3, std::string(what) + ": expected [C,H,W] images");
  require_same_shape(a, b, what);
}

const std::vector<double>& gauss_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> v(kWindow);
    double total = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - (kWindow - 1) / 2.0;
      v[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      total += v[static_cast<size_t>(i)];
    }
    for (double& x : v) x /= total;
    return v;
  }();
  return k;
}

// Separable Gaussian filter, valid positions only: [H,W] -> [H-10,W-10].
std::vector<double> gauss_valid(const std::vector<double>& img, int h, int w) {
  const auto& k = gauss_kernel();
  const int wv = w - kWindow + 1;
  const int hv = h - kWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * wv);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wv; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[static_cast<size_t>(i)] * img[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * wv + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(hv) * wv);
  for (int y = 0; y < hv; ++y)
    for (int x = 0; x < wv; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * wv + x];
      out[static_cast<size_t>(y) * wv + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "psnr");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = (static_cast<double>(a.data[i]) - b.data[i]) * 255.0;
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double mae(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "mae");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    acc += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  return acc / static_cast<double>(a.numel()) * 255.0;
}

double ssim(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "ssim");
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  require(H >= kWindow && W >= kWindow,
          "ssim: image smaller than the 11x11 window (" + std::to_string(W) + "x" +
              std::to_string(H) + ")");
  const int64_t plane = static_cast<int64_t>(H) * W;

  double total = 0.0;
  int64_t count = 0;
  std::vector<double> x(static_cast<size_t>(plane)), y(static_cast<size_t>(plane)),
      xx(static_cast<size_t>(plane)), yy(static_cast<size_t>(plane)), xy(static_cast<size_t>(plane));
  for (int c = 0; c < C; ++c) {
    const float* pa = a.ptr() + c * plane;
    const float* pb = b.ptr() + c * plane;
    for (int64_t i = 0; i < plane; ++i) {
      x[static_cast<size_t>(i)] = pa[i];
      y[static_cast<size_t>(i)] = pb[i];
      xx[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
      yy[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
      xy[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
    }
    const auto mu_x = gauss_valid(x, H, W);
    const auto mu_y = gauss_valid(y, H, W);
    const auto m_xx = gauss_valid(xx, H, W);
    const auto m_yy = gauss_valid(yy, H, W);
    const auto m_xy = gauss_valid(xy, H, W);
    for (size_t i = 0; i < mu_x.size(); ++i) {
      const double mx = mu_x[i], my = mu_y[i];
      const double var_x = m_xx[i] - mx * mx;
      const double var_y = m_yy[i] - my * my;
      const double cov = m_xy[i] - mx * my;
      const double score = ((2.0 * mx * my + kC1) * (2.0 * cov + kC2)) /
                           ((mx * mx + my * my + kC1) * (var_x + var_y + kC2));
      total += score;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

MetricRow MetricReport::mean_row() const {
  MetricRow m{"mean", 0, 0, 0};
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.mae += r.mae;
  }
  const double n = static_cast<double>(rows.size());
  m.psnr /= n;
  m.ssim /= n;
  m.mae /= n;
  return m;
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "filename,psnr,ssim,mae\n";
  auto emit = [&out](const MetricRow& r) {
    out << r.name << ",";
    if (std::isinf(r.psnr))
      out << "inf";
    else
      out << r.psnr;
    out << "," << r.ssim << "," << r.mae << "\n";
  };
  for (const auto& r : rows) emit(r);
  emit(mean_row());
  return out.str();
}

}  // namespace curvelight
