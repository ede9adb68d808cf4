#include "curvelight/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace curvelight {

namespace {

constexpr char kMagic[4] = {'Z', 'D', 'C', 'E'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_bytes(std::FILE* f, const void* p, size_t n) {
  if (std::fwrite(p, 1, n, f) != n)
    throw CheckpointError(CheckpointError::Kind::io, "checkpoint: write failed");
}

void put_u32(std::FILE* f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  put_bytes(f, b, 4);
}

void put_u16(std::FILE* f, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  put_bytes(f, b, 2);
}

void put_f32_payload(std::FILE* f, const std::vector<float>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    put_bytes(f, data.data(), data.size() * sizeof(float));
  } else {
    for (float v : data) {
      uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(f, u);
    }
  }
}

void get_bytes(std::FILE* f, void* p, size_t n) {
  if (std::fread(p, 1, n, f) != n)
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint: truncated file");
}

uint32_t get_u32(std::FILE* f) {
  unsigned char b[4];
  get_bytes(f, b, 4);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint16_t get_u16(std::FILE* f) {
  unsigned char b[2];
  get_bytes(f, b, 2);
  return static_cast<uint16_t>(b[0] | b[1] << 8);
}

Tensor get_tensor(std::FILE* f) {
  const uint32_t rank = get_u32(f);
  if (rank == 0 || rank > 4)
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint: tensor rank " + std::to_string(rank) + " out of range");
  std::vector<int> shape(rank);
  int64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint32_t e = get_u32(f);
    if (e == 0 || e > (1u << 24))
      throw CheckpointError(CheckpointError::Kind::inconsistent,
                            "checkpoint: tensor extent out of range");
    shape[i] = static_cast<int>(e);
    numel *= e;
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data.resize(static_cast<size_t>(numel));
  if constexpr (std::endian::native == std::endian::little) {
    get_bytes(f, t.data.data(), t.data.size() * sizeof(float));
  } else {
    for (float& v : t.data) {
      const uint32_t u = get_u32(f);
      std::memcpy(&v, &u, 4);
    }
  }
  return t;
}

void check_shape(const Tensor& t, const std::vector<int>& expect, const char* what) {
  if (t.shape != expect)
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          std::string("checkpoint: ") + what + " has shape " + shape_str(t) +
                              ", expected " + shape_str(Tensor(expect)));
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f)
    throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot open " + path +
                                                         " for writing");
  put_bytes(f.get(), kMagic, 4);
  put_u32(f.get(), kCheckpointVersion);
  const unsigned char variant = static_cast<unsigned char>(model.variant);
  const unsigned char n = static_cast<unsigned char>(model.iterations);
  put_bytes(f.get(), &variant, 1);
  put_bytes(f.get(), &n, 1);
  put_u16(f.get(), static_cast<uint16_t>(model.downsample));
  for (const auto* t : model.parameters()) {
    put_u32(f.get(), static_cast<uint32_t>(t->rank()));
    for (int i = 0; i < t->rank(); ++i) put_u32(f.get(), static_cast<uint32_t>(t->dim(i)));
    put_f32_payload(f.get(), t->data);
  }
  if (std::fflush(f.get()) != 0)
    throw CheckpointError(CheckpointError::Kind::io, "checkpoint: write failed");
}

Model load_checkpoint(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot open " + path);

  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(CheckpointError::Kind::not_a_checkpoint,
                          path + " is not a checkpoint file");
  const uint32_t version = get_u32(f.get());
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::bad_version,
                          "checkpoint: unsupported version " + std::to_string(version));

  unsigned char variant_byte, n_byte;
  get_bytes(f.get(), &variant_byte, 1);
  get_bytes(f.get(), &n_byte, 1);
  const uint16_t downsample = get_u16(f.get());
  if (variant_byte > 1)
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint: unknown variant tag " + std::to_string(variant_byte));
  if (n_byte == 0 || downsample == 0)
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint: iteration count and downsample factor must be positive");

  Model model;
  model.variant = static_cast<Variant>(variant_byte);
  model.iterations = n_byte;
  model.downsample = downsample;

  // Tensor records run until EOF; layer structure is validated afterwards.
  std::vector<Tensor> tensors;
  for (;;) {
    const int probe = std::fgetc(f.get());
    if (probe == EOF) break;
    std::ungetc(probe, f.get());
    tensors.push_back(get_tensor(f.get()));
  }

  const size_t per_layer = model.variant == Variant::plain ? 2 : 4;
  if (tensors.empty() || tensors.size() % per_layer != 0)
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint: tensor count does not match the variant's layer layout");
  const int l = static_cast<int>(tensors.size() / per_layer);
  if (l < 3 || l % 2 == 0)
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint: implausible layer count " + std::to_string(l));

  const Tensor& first = tensors[0];
  if (first.rank() != 4)
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint: first weight tensor must be rank 4");
  const int f_width = model.variant == Variant::plain ? first.dim(0) : tensors[2].dim(0);
  model.features = f_width;

  const auto wiring = detail::layer_wiring(l);
  const int out_last = model.shared_maps() ? 3 : 3 * model.iterations;
  model.layers.resize(static_cast<size_t>(l));
  for (int i = 0; i < l; ++i) {
    const int in_ch =
        (i == 0) ? 3 : (wiring[static_cast<size_t>(i)].skip >= 0 ? 2 * f_width : f_width);
    const int out_ch = (i == l - 1) ? out_last : f_width;
    LayerT<float>& layer = model.layers[static_cast<size_t>(i)];
    const size_t base = per_layer * static_cast<size_t>(i);
    if (model.variant == Variant::plain) {
      check_shape(tensors[base], {out_ch, in_ch, 3, 3}, "conv weight");
      check_shape(tensors[base + 1], {out_ch}, "conv bias");
      layer.w = std::move(tensors[base]);
      layer.b = std::move(tensors[base + 1]);
    } else {
      check_shape(tensors[base], {in_ch, 1, 3, 3}, "depthwise weight");
      check_shape(tensors[base + 1], {in_ch}, "depthwise bias");
      check_shape(tensors[base + 2], {out_ch, in_ch, 1, 1}, "pointwise weight");
      check_shape(tensors[base + 3], {out_ch}, "pointwise bias");
      layer.dw = std::move(tensors[base]);
      layer.db = std::move(tensors[base + 1]);
      layer.pw = std::move(tensors[base + 2]);
      layer.pb = std::move(tensors[base + 3]);
    }
  }
  return model;
}

}  // namespace curvelight
