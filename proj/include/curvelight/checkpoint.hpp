#pragma once

#include <stdexcept>
#include <string>

#include "curvelight/model.hpp"

// Checkpoint file layout (all integers little-endian):
//   magic "ZDCE" (4 bytes)
//   u32 version (currently 1)
//   u8  variant (0 = plain, 1 = dsc)
//   u8  n (curve iterations)
//   u16 downsample factor
//   per layer, in order: for each parameter tensor of that layer,
//     u32 rank, u32 extents[rank], raw little-endian f32 payload.
// Plain layers store (w, b); dsc layers store (dw, db, pw, pb). A round trip
// reproduces the model bit-exactly.

namespace curvelight {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { not_a_checkpoint, bad_version, truncated, inconsistent, io };

  CheckpointError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace curvelight
