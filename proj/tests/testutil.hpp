#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "curvelight/image_io.hpp"
#include "curvelight/rng.hpp"
#include "curvelight/tensor.hpp"

// Shared helpers for the test binaries: deterministic synthetic scenes with a
// controllable exposure level, and scratch directories.

namespace testutil {

using curvelight::Rng;
using curvelight::Tensor;

/// Smooth "natural" scene: gradient background plus soft color blobs, then an
/// exposure (power) adjustment so the mean intensity lands on target_mean.
inline Tensor synth_image(uint64_t seed, int size, double target_mean) {
  Rng rng(seed);
  Tensor img({3, size, size});

  const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
  struct Blob {
    double cx, cy, radius, amp, tint[3];
  };
  std::vector<Blob> blobs;
  const int blob_count = 4 + static_cast<int>(rng.below(4));
  for (int i = 0; i < blob_count; ++i) {
    Blob b;
    b.cx = rng.uniform(0.0, 1.0);
    b.cy = rng.uniform(0.0, 1.0);
    b.radius = rng.uniform(0.08, 0.35);
    b.amp = rng.uniform(0.3, 1.0);
    for (double& t : b.tint) t = rng.uniform(0.4, 1.0);
    blobs.push_back(b);
  }

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / (size - 1);
      const double v = static_cast<double>(y) / (size - 1);
      const double base = 0.5 + 0.25 * (gx * (u - 0.5) + gy * (v - 0.5));
      double px[3] = {base, base, base};
      for (const Blob& b : blobs) {
        const double d2 = (u - b.cx) * (u - b.cx) + (v - b.cy) * (v - b.cy);
        const double g = b.amp * std::exp(-d2 / (2.0 * b.radius * b.radius));
        for (int c = 0; c < 3; ++c) px[c] += g * (b.tint[c] - 0.5);
      }
      for (int c = 0; c < 3; ++c) {
        const double clamped = std::min(1.0, std::max(0.0, px[c]));
        img.data[(static_cast<size_t>(c) * size + y) * size + x] = static_cast<float>(clamped);
      }
    }

  // Bisect the exposure exponent so mean(img^g) == target_mean.
  double lo = 0.05, hi = 20.0;
  for (int iter = 0; iter < 40; ++iter) {
    const double g = 0.5 * (lo + hi);
    double m = 0.0;
    for (const float v : img.data) m += std::pow(static_cast<double>(v), g);
    m /= static_cast<double>(img.numel());
    (m > target_mean ? lo : hi) = g;
  }
  const double g = 0.5 * (lo + hi);
  for (float& v : img.data) v = static_cast<float>(std::pow(static_cast<double>(v), g));
  return img;
}

inline std::string fresh_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  static uint64_t counter = 0;
  const fs::path dir =
      fs::temp_directory_path() / ("curvelight_test_" + tag + "_" + std::to_string(::getpid()) +
                                   "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

/// Writes a mixed-exposure dataset: `count` scenes with mean intensities
/// spread over [0.08, 0.85] (half dark, half bright), as PPM files.
inline std::vector<double> write_mixed_dataset(const std::string& dir, int count, int size,
                                               uint64_t seed) {
  std::vector<double> means;
  for (int i = 0; i < count; ++i) {
    const double target = (i % 2 == 0) ? 0.08 + 0.04 * (i % 7) : 0.55 + 0.05 * (i % 7);
    Tensor img = synth_image(seed + static_cast<uint64_t>(i), size, target);
    char name[32];
    std::snprintf(name, sizeof name, "img_%03d.ppm", i);
    curvelight::save_image(img, (std::filesystem::path(dir) / name).string());
    means.push_back(target);
  }
  return means;
}

inline Tensor random_unit_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = static_cast<float>(rng.uniform());
  return t;
}

}  // namespace testutil
