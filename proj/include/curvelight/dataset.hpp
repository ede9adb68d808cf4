#pragma once

#include <string>
#include <vector>

#include "curvelight/tensor.hpp"

namespace curvelight {

/// Loads every decodable image under dir (non-recursive), normalized to [0,1]
/// and bilinear-resized to size x size, ordered by filename. Files that fail
/// to decode are reported in *warnings and skipped. An empty result is a hard
/// error.
std::vector<Tensor> load_dataset(const std::string& dir, int size,
                                 std::vector<std::string>* warnings = nullptr);

struct DatasetSplit {
  std::vector<Tensor> train;
  std::vector<Tensor> val;
};

/// Seeded deterministic split; floor(n * val_fraction) images go to the
/// validation set.
DatasetSplit split_dataset(std::vector<Tensor> images, float val_fraction, uint64_t seed);

/// Stacks [3,H,W] images into a [B,3,H,W] batch.
Tensor stack_images(const std::vector<Tensor>& images, size_t begin, size_t end);

}  // namespace curvelight
