#pragma once

#include <stdexcept>
#include <string>

#include "curvelight/tensor.hpp"

// Raster decode/encode. Every image leaving this module is a [3,H,W] tensor
// with values in [0,1]: 8-bit samples divided by 255, 16-bit PNG by 65535,
// grayscale replicated to three channels, alpha dropped. Supported formats:
// PNG (8/16-bit gray/gray+alpha/RGB/RGBA/palette) read, 8-bit PNG write, and
// binary PPM (P6, maxval 255) both ways.

namespace curvelight {

class ImageError : public std::runtime_error {
 public:
  enum class Kind { unsupported_format, corrupt_stream, io };

  ImageError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Decodes path into a [3,H,W] tensor in [0,1]. The format is sniffed from
/// the file's magic bytes, not the extension.
Tensor load_image(const std::string& path);

/// Decodes an in-memory stream (same guarantees as load_image).
Tensor decode_image(const unsigned char* bytes, size_t size);

/// Writes img ([3,H,W] or [1,H,W] for grayscale) to path; the extension picks
/// the format (.png or .ppm). Values are clamped to [0,1] and quantized with
/// round-half-up: byte = floor(v * 255 + 0.5).
void save_image(const Tensor& img, const std::string& path);

/// Quantization helper shared with the tests.
unsigned char quantize_8bit(float v);

/// Adds a batch dimension: [3,H,W] -> [1,3,H,W].
Tensor add_batch(const Tensor& img);

/// Drops the batch dimension of a single-image batch.
Tensor drop_batch(const Tensor& batch);

}  // namespace curvelight
