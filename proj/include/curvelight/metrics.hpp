#pragma once

#include <string>
#include <vector>

#include "curvelight/tensor.hpp"

// Full-reference quality metrics on [3,H,W] images with values in [0,1].
// PSNR and MAE report on the 8-bit scale (images scaled by 255); SSIM is the
// standard single-scale formulation with an 11x11 Gaussian window
// (sigma 1.5), stabilizers C1=(0.01)^2 and C2=(0.03)^2 on the [0,1] range,
// computed per channel over fully-overlapping window positions and averaged.

namespace curvelight {

/// 10*log10(255^2 / MSE_8bit); identical images report +infinity.
double psnr(const Tensor& a, const Tensor& b);

/// Mean absolute error times 255.
double mae(const Tensor& a, const Tensor& b);

/// Mean SSIM; requires both dimensions >= 11.
double ssim(const Tensor& a, const Tensor& b);

struct MetricRow {
  std::string name;
  double psnr = 0, ssim = 0, mae = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricRow mean_row() const;

  /// CSV: one `filename,psnr,ssim,mae` line per image plus a final mean row.
  std::string to_csv() const;
};

}  // namespace curvelight
