#pragma once

#include <string>
#include <vector>

#include "curvelight/adam.hpp"
#include "curvelight/losses.hpp"
#include "curvelight/model.hpp"
#include "curvelight/tensor.hpp"

// Zero-reference training: no target images anywhere, the four non-reference
// losses are the entire supervision signal. Each step runs
// forward -> curve maps -> enhance -> total loss -> backward -> ADAM.
// Fully deterministic for a fixed seed.

namespace curvelight {

struct TrainConfig {
  std::string data_dir;
  int train_size = 512;  // images are resized to train_size x train_size
  int batch = 8;
  float lr = 1e-4f;
  int epochs = 100;
  int max_iters = 0;  // 0 = bounded by epochs only
  uint64_t seed = 1;
  Variant variant = Variant::plain;
  int layers = 7;
  int features = 32;
  int iterations = 8;
  int downsample = 0;  // 0 = variant default (1 plain, 12 dsc)
  LossConfig loss;
  float val_fraction = 0.2f;
  int checkpoint_every = 0;  // epochs between periodic checkpoints, 0 = off
  float grad_clip = 0.0f;    // global-norm clip, 0 = off
  std::string log_path;         // training log, empty = no file
  std::string checkpoint_path;  // final (and periodic) checkpoint, empty = none
  int inject_nan_at_iter = 0;   // test hook for the abort path, 0 = off

  void validate() const {
    require(batch >= 1, "train config: batch must be >= 1");
    require(lr > 0.0f || lr == 0.0f, "train config: lr must be finite");
    require(lr >= 0.0f, "train config: lr must be >= 0");
    require(epochs >= 0, "train config: epochs must be >= 0");
    require(val_fraction >= 0.0f && val_fraction < 1.0f,
            "train config: val_fraction must be in [0,1)");
    require(train_size >= 1, "train config: size must be >= 1");
    loss.validate();
  }
};

struct IterRecord {
  int iter = 0;
  LossBreakdown loss;
};

struct EpochRecord {
  int epoch = 0;
  float val_total = 0;
};

struct TrainResult {
  Model model;
  std::vector<IterRecord> iters;
  std::vector<EpochRecord> epochs;
};

/// Raised when a loss turns NaN/Inf; carries the offending iteration and the
/// component breakdown.
class TrainError : public std::runtime_error {
 public:
  TrainError(int iter, const LossBreakdown& bd, const std::string& msg)
      : std::runtime_error(msg), iter_(iter), breakdown_(bd) {}
  int iter() const { return iter_; }
  const LossBreakdown& breakdown() const { return breakdown_; }

 private:
  int iter_;
  LossBreakdown breakdown_;
};

/// Loads cfg.data_dir, splits train/validation and trains. Decode warnings
/// go to stderr.
TrainResult train(const TrainConfig& cfg);

/// Same, with an already-loaded dataset (split still happens inside).
TrainResult train_on(const TrainConfig& cfg, std::vector<Tensor> images);

struct ValReport {
  LossBreakdown mean;
  int count = 0;
};

/// Mean total loss and component breakdown over a validation set; no weight
/// updates, deterministic. Empty sets are a hard error.
ValReport validate(const Model& model, const std::vector<Tensor>& images, const LossConfig& cfg);

/// Mean of values[end-window, end); used by the loss-decrease checks.
double moving_average(const std::vector<IterRecord>& records, size_t window, size_t end);

/// One optimization step on an explicit batch; exposed for the trainer tests.
LossBreakdown train_step(Model& model, AdamState& state, const Tensor& batch,
                         const LossConfig& loss_cfg, float lr, float grad_clip);

}  // namespace curvelight
