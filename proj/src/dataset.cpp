#include "curvelight/dataset.hpp"

#include <algorithm>
#include <filesystem>

#include "curvelight/image_io.hpp"
#include "curvelight/ops.hpp"
#include "curvelight/rng.hpp"

namespace curvelight {

std::vector<Tensor> load_dataset(const std::string& dir, int size,
                                 std::vector<std::string>* warnings) {
  namespace fs = std::filesystem;
  require(size >= 1, "load_dataset: size must be >= 1");
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);

  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());

  std::vector<Tensor> images;
  for (const auto& path : paths) {
    try {
      Tensor img = load_image(path);
      images.push_back(
          drop_batch(resize_bilinear(add_batch(img), size, size)));
    } catch (const ImageError& e) {
      if (warnings) warnings->push_back(path + ": " + e.what());
    }
  }
  if (images.empty()) throw std::runtime_error("no decodable images in " + dir);
  return images;
}

DatasetSplit split_dataset(std::vector<Tensor> images, float val_fraction, uint64_t seed) {
  require(val_fraction >= 0.0f && val_fraction < 1.0f, "val_fraction must be in [0,1)");
  const size_t n = images.size();
  const size_t val_count = static_cast<size_t>(static_cast<double>(n) * val_fraction);

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  DatasetSplit split;
  split.val.reserve(val_count);
  split.train.reserve(n - val_count);
  for (size_t i = 0; i < n; ++i) {
    Tensor& img = images[order[i]];
    (i < val_count ? split.val : split.train).push_back(std::move(img));
  }
  return split;
}

Tensor stack_images(const std::vector<Tensor>& images, size_t begin, size_t end) {
  require(begin < end && end <= images.size(), "stack_images: bad range");
  const Tensor& first = images[begin];
  require(first.rank() == 3, "stack_images: expected [C,H,W] images");
  const int B = static_cast<int>(end - begin);
  Tensor out({B, first.dim(0), first.dim(1), first.dim(2)});
  const int64_t stride = first.numel();
  for (size_t i = begin; i < end; ++i) {
    require(images[i].shape == first.shape, "stack_images: inconsistent image shapes");
    std::copy_n(images[i].ptr(), stride, out.ptr() + (i - begin) * stride);
  }
  return out;
}

}  // namespace curvelight
