#include "curvelight/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace curvelight {

namespace {

struct MemReader {
  const unsigned char* bytes;
  size_t size;
  size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->pos + n > r->size) png_error(png, "read past end of stream");
  std::memcpy(out, r->bytes + r->pos, n);
  r->pos += n;
}

void png_throw_error(png_structp png, png_const_charp msg) {
  (void)msg;
  longjmp(png_jmpbuf(png), 1);
}

void png_ignore_warning(png_structp, png_const_charp) {}

Tensor decode_png(const unsigned char* bytes, size_t size) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw_error, png_ignore_warning);
  if (!png) throw ImageError(ImageError::Kind::io, "png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageError(ImageError::Kind::io, "png: allocation failure");
  }

  std::vector<png_byte> storage;
  std::vector<png_bytep> rows;
  MemReader reader{bytes, size, 0};

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(ImageError::Kind::corrupt_stream, "png: corrupt stream");
  }

  png_set_read_fn(png, &reader, png_mem_read);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  if (channels != 3 || (out_depth != 8 && out_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(ImageError::Kind::unsupported_format,
                     "png: unsupported channel/depth combination");
  }

  const size_t row_bytes = png_get_rowbytes(png, info);
  storage.resize(row_bytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = storage.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor img({3, static_cast<int>(h), static_cast<int>(w)});
  const int64_t plane = static_cast<int64_t>(h) * w;
  float* r = img.ptr();
  float* g = r + plane;
  float* b = g + plane;
  if (out_depth == 8) {
    for (png_uint_32 y = 0; y < h; ++y) {
      const png_byte* row = rows[y];
      for (png_uint_32 x = 0; x < w; ++x) {
        const int64_t i = static_cast<int64_t>(y) * w + x;
        r[i] = row[3 * x + 0] / 255.0f;
        g[i] = row[3 * x + 1] / 255.0f;
        b[i] = row[3 * x + 2] / 255.0f;
      }
    }
  } else {
    // PNG stores 16-bit samples big-endian.
    for (png_uint_32 y = 0; y < h; ++y) {
      const png_byte* row = rows[y];
      for (png_uint_32 x = 0; x < w; ++x) {
        const int64_t i = static_cast<int64_t>(y) * w + x;
        for (int c = 0; c < 3; ++c) {
          const unsigned v = static_cast<unsigned>(row[6 * x + 2 * c]) << 8 | row[6 * x + 2 * c + 1];
          (c == 0 ? r : c == 1 ? g : b)[i] = v / 65535.0f;
        }
      }
    }
  }
  return img;
}

// Binary PPM, maxval 255. Header tokens may be separated by whitespace and
// '#' comments.
Tensor decode_ppm(const unsigned char* bytes, size_t size) {
  size_t pos = 2;  // past "P6"
  auto next_token = [&]() -> long {
    while (pos < size) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < size && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    if (pos >= size || !std::isdigit(bytes[pos]))
      throw ImageError(ImageError::Kind::corrupt_stream, "ppm: malformed header");
    long v = 0;
    while (pos < size && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 24) throw ImageError(ImageError::Kind::corrupt_stream, "ppm: value overflow");
      ++pos;
    }
    return v;
  };

  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (w < 1 || h < 1) throw ImageError(ImageError::Kind::corrupt_stream, "ppm: bad dimensions");
  if (maxval != 255)
    throw ImageError(ImageError::Kind::unsupported_format,
                     "ppm: only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= size || !std::isspace(bytes[pos]))
    throw ImageError(ImageError::Kind::corrupt_stream, "ppm: missing header terminator");
  ++pos;  // single whitespace byte before the raster

  const size_t need = static_cast<size_t>(w) * static_cast<size_t>(h) * 3;
  if (size - pos < need)
    throw ImageError(ImageError::Kind::corrupt_stream, "ppm: truncated pixel data");

  Tensor img({3, static_cast<int>(h), static_cast<int>(w)});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      img.data[static_cast<size_t>(c * plane + i)] = bytes[pos + 3 * i + c] / 255.0f;
  return img;
}

std::string lower_ext(const std::string& path) {
  const size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

void save_png(const Tensor& img, const std::string& path) {
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const int64_t plane = static_cast<int64_t>(H) * W;

  std::vector<png_byte> row(static_cast<size_t>(W) * static_cast<size_t>(C));
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ImageError(ImageError::Kind::io, "cannot open " + path + " for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw_error, png_ignore_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw ImageError(ImageError::Kind::io, "png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw ImageError(ImageError::Kind::io, "png: write failed for " + path);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               C == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c)
        row[static_cast<size_t>(x) * C + c] =
            quantize_8bit(img.data[static_cast<size_t>(c * plane + y * W + x)]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(f) != 0) throw ImageError(ImageError::Kind::io, "png: close failed for " + path);
}

void save_ppm(const Tensor& img, const std::string& path) {
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const int64_t plane = static_cast<int64_t>(H) * W;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError(ImageError::Kind::io, "cannot open " + path + " for writing");
  out << "P6\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> raster(static_cast<size_t>(plane) * 3);
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      raster[static_cast<size_t>(3 * i + c)] =
          quantize_8bit(img.data[static_cast<size_t>((C == 1 ? 0 : c) * plane + i)]);
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw ImageError(ImageError::Kind::io, "ppm: write failed for " + path);
}

}  // namespace

unsigned char quantize_8bit(float v) {
  v = std::min(1.0f, std::max(0.0f, v));
  return static_cast<unsigned char>(std::floor(v * 255.0f + 0.5f));
}

Tensor decode_image(const unsigned char* bytes, size_t size) {
  static const unsigned char png_sig[4] = {0x89, 'P', 'N', 'G'};
  if (size >= 4 && std::memcmp(bytes, png_sig, 4) == 0) return decode_png(bytes, size);
  if (size >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, size);
  throw ImageError(ImageError::Kind::unsupported_format,
                   "unsupported image format (expected PNG or binary PPM)");
}

Tensor load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(ImageError::Kind::io, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_image(bytes.data(), bytes.size());
}

void save_image(const Tensor& img, const std::string& path) {
  require(img.rank() == 3 && (img.dim(0) == 3 || img.dim(0) == 1),
          "save_image: expected a [3,H,W] or [1,H,W] tensor, got " + shape_str(img));
  const std::string ext = lower_ext(path);
  if (ext == "png") {
    save_png(img, path);
  } else if (ext == "ppm") {
    save_ppm(img, path);
  } else {
    throw ImageError(ImageError::Kind::unsupported_format,
                     "unsupported output extension '" + ext + "' (use .png or .ppm)");
  }
}

Tensor add_batch(const Tensor& img) {
  require(img.rank() == 3, "add_batch: expected a [C,H,W] tensor");
  Tensor out;
  out.shape = {1, img.dim(0), img.dim(1), img.dim(2)};
  out.data = img.data;
  return out;
}

Tensor drop_batch(const Tensor& batch) {
  require(batch.rank() == 4 && batch.dim(0) == 1, "drop_batch: expected a [1,C,H,W] tensor");
  Tensor out;
  out.shape = {batch.dim(1), batch.dim(2), batch.dim(3)};
  out.data = batch.data;
  return out;
}

}  // namespace curvelight
