#include "curvelight/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "curvelight/checkpoint.hpp"
#include "curvelight/dataset.hpp"
#include "curvelight/image_io.hpp"
#include "curvelight/objective.hpp"
#include "curvelight/rng.hpp"

namespace curvelight {

namespace {

void clip_gradients(std::vector<Tensor>& grads, float max_norm) {
  if (max_norm <= 0.0f) return;
  double sq = 0.0;
  for (const auto& g : grads)
    for (const float v : g.data) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const float s = static_cast<float>(max_norm / norm);
  for (auto& g : grads)
    for (float& v : g.data) v *= s;
}

bool finite(const LossBreakdown& b) {
  return std::isfinite(b.spa) && std::isfinite(b.exp) && std::isfinite(b.col) &&
         std::isfinite(b.tv) && std::isfinite(b.total);
}

std::string iter_line(const IterRecord& r) {
  std::ostringstream s;
  s << "iter," << r.iter << ",L_spa," << r.loss.spa << ",L_exp," << r.loss.exp << ",L_col,"
    << r.loss.col << ",L_tv," << r.loss.tv << ",total," << r.loss.total;
  return s.str();
}

}  // namespace

LossBreakdown train_step(Model& model, AdamState& state, const Tensor& batch,
                         const LossConfig& loss_cfg, float lr, float grad_clip) {
  ObjectiveResult<float> outcome = objective_with_grads(model, batch, loss_cfg);
  clip_gradients(outcome.grads, grad_clip);
  auto params = model.parameters();
  std::vector<const Tensor*> grad_ptrs;
  grad_ptrs.reserve(outcome.grads.size());
  for (const auto& g : outcome.grads) grad_ptrs.push_back(&g);
  adam_step(params, grad_ptrs, state, lr);
  return outcome.loss;
}

ValReport validate(const Model& model, const std::vector<Tensor>& images,
                   const LossConfig& cfg) {
  require(!images.empty(), "validate: empty validation set");
  ValReport report;
  LossBreakdownT<double> acc;
  for (const Tensor& img : images) {
    const LossBreakdown b = objective_value(model, add_batch(img), cfg);
    acc.spa += b.spa;
    acc.exp += b.exp;
    acc.col += b.col;
    acc.tv += b.tv;
    acc.total += b.total;
  }
  const double n = static_cast<double>(images.size());
  report.mean.spa = static_cast<float>(acc.spa / n);
  report.mean.exp = static_cast<float>(acc.exp / n);
  report.mean.col = static_cast<float>(acc.col / n);
  report.mean.tv = static_cast<float>(acc.tv / n);
  report.mean.total = static_cast<float>(acc.total / n);
  report.count = static_cast<int>(images.size());
  return report;
}

TrainResult train_on(const TrainConfig& cfg, std::vector<Tensor> images) {
  cfg.validate();
  require(!images.empty(), "train: empty dataset");

  // One seeded stream drives everything, consumed in a fixed order: the
  // train/val split first, then the per-epoch shuffles.
  Rng rng(cfg.seed);
  DatasetSplit split = split_dataset(std::move(images), cfg.val_fraction, rng.next_u64());
  require(!split.train.empty(), "train: no training images after the validation split");

  Model model = build_model<float>(cfg.variant, cfg.seed, cfg.layers, cfg.features,
                                   cfg.iterations, cfg.downsample);
  AdamState state;
  auto params = model.parameters();
  state.init(params);

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path);
    if (!log) throw std::runtime_error("cannot open training log " + cfg.log_path);
  }

  TrainResult result;
  std::vector<size_t> order(split.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int iter = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size() && !stop;
         start += static_cast<size_t>(cfg.batch)) {
      const size_t stop_at = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      std::vector<Tensor> batch_imgs;
      batch_imgs.reserve(stop_at - start);
      for (size_t i = start; i < stop_at; ++i) batch_imgs.push_back(split.train[order[i]]);
      const Tensor batch = stack_images(batch_imgs, 0, batch_imgs.size());

      ++iter;
      ObjectiveResult<float> outcome = objective_with_grads(model, batch, cfg.loss);
      if (cfg.inject_nan_at_iter > 0 && iter == cfg.inject_nan_at_iter)
        outcome.loss.total = std::numeric_limits<float>::quiet_NaN();
      if (!finite(outcome.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at iteration " << iter << ": spa=" << outcome.loss.spa
            << " exp=" << outcome.loss.exp << " col=" << outcome.loss.col
            << " tv=" << outcome.loss.tv << " total=" << outcome.loss.total;
        throw TrainError(iter, outcome.loss, msg.str());
      }
      clip_gradients(outcome.grads, cfg.grad_clip);
      std::vector<const Tensor*> grad_ptrs;
      grad_ptrs.reserve(outcome.grads.size());
      for (const auto& g : outcome.grads) grad_ptrs.push_back(&g);
      adam_step(params, grad_ptrs, state, cfg.lr);

      result.iters.push_back(IterRecord{iter, outcome.loss});
      if (log) log << iter_line(result.iters.back()) << "\n";
      if (cfg.max_iters > 0 && iter >= cfg.max_iters) stop = true;
    }

    if (!split.val.empty()) {
      const ValReport vr = validate(model, split.val, cfg.loss);
      result.epochs.push_back(EpochRecord{epoch, vr.mean.total});
      if (log) log << "epoch," << epoch << ",val_total," << vr.mean.total << "\n";
    }
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs && !stop)
      save_checkpoint(model, cfg.checkpoint_path + ".epoch" + std::to_string(epoch));
  }

  if (log) log.flush();
  if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
  result.model = std::move(model);
  return result;
}

TrainResult train(const TrainConfig& cfg) {
  std::vector<std::string> warnings;
  std::vector<Tensor> images = load_dataset(cfg.data_dir, cfg.train_size, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: skipped " << w << "\n";
  return train_on(cfg, std::move(images));
}

double moving_average(const std::vector<IterRecord>& records, size_t window, size_t end) {
  require(end <= records.size() && end >= window && window > 0, "moving_average: bad range");
  double acc = 0.0;
  for (size_t i = end - window; i < end; ++i) acc += records[i].loss.total;
  return acc / static_cast<double>(window);
}

}  // namespace curvelight
