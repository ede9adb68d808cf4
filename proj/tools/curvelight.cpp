// Command-line surface for the zero-reference low-light enhancement pipeline:
// train, enhance, eval, info, gradcheck and ablate. Exit codes: 0 success,
// 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "curvelight/checkpoint.hpp"
#include "curvelight/dataset.hpp"
#include "curvelight/gradcheck.hpp"
#include "curvelight/image_io.hpp"
#include "curvelight/metrics.hpp"
#include "curvelight/model.hpp"
#include "curvelight/trainer.hpp"

namespace fs = std::filesystem;
using namespace curvelight;

namespace {

struct AblateEntry {
  int layers = 7, features = 32, iterations = 8;
  std::string name() const {
    return "l" + std::to_string(layers) + "-f" + std::to_string(features) + "-n" +
           std::to_string(iterations);
  }
};

std::vector<AblateEntry> parse_grid(const std::string& grid) {
  std::vector<AblateEntry> entries;
  std::string::size_type pos = 0;
  while (pos <= grid.size()) {
    const auto next = grid.find(';', pos);
    const std::string item = grid.substr(pos, next == std::string::npos ? next : next - pos);
    AblateEntry e;
    if (std::sscanf(item.c_str(), "%d,%d,%d", &e.layers, &e.features, &e.iterations) != 3)
      throw std::invalid_argument("grid entry '" + item + "' is not of the form l,f,n");
    if (e.layers < 3 || e.layers % 2 == 0 || e.features < 1 || e.iterations < 1)
      throw std::invalid_argument("grid entry '" + item +
                                  "' out of range (odd l >= 3, f >= 1, n >= 1)");
    entries.push_back(e);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (entries.empty()) throw std::invalid_argument("empty grid");
  return entries;
}

std::pair<int, int> parse_size(const std::string& s) {
  int w = 0, h = 0;
  char sep = 0;
  if (std::sscanf(s.c_str(), "%d%c%d", &w, &sep, &h) != 3 || (sep != 'x' && sep != 'X') ||
      w < 1 || h < 1)
    throw std::invalid_argument("size '" + s + "' is not of the form WxH");
  return {w, h};
}

std::vector<std::string> list_files(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

Tensor normalize_map(const Tensor& plane) {
  Tensor out = plane;
  const float lo = min_value(out), hi = max_value(out);
  if (hi > lo)
    for (float& v : out.data) v = (v - lo) / (hi - lo);
  else
    out.fill(0.0f);
  return out;
}

void dump_curve_maps(const CurveParamMaps& maps, const std::string& dir,
                     const std::string& stem) {
  fs::create_directories(dir);
  const char* channel_names[3] = {"r", "g", "b"};
  const int groups = maps.shared ? 1 : maps.iterations;
  const Tensor& m = maps.maps;
  const int H = m.dim(2), W = m.dim(3);
  for (int k = 0; k < groups; ++k)
    for (int c = 0; c < 3; ++c) {
      Tensor plane({1, H, W});
      std::copy_n(&m.at(0, 3 * k + c, 0, 0), static_cast<int64_t>(H) * W, plane.ptr());
      std::string name = stem;
      name += maps.shared ? "_shared" : "_iter" + std::to_string(k + 1);
      name += std::string("_") + channel_names[c] + ".png";
      save_image(normalize_map(plane), (fs::path(dir) / name).string());
    }
}

// Enhance one file; returns false on per-file failure.
bool enhance_file(const Model& model, const std::string& in_path, const std::string& out_path,
                  const std::string& dump_dir) {
  try {
    const Tensor img = add_batch(load_image(in_path));
    const int H = img.dim(2), W = img.dim(3);
    CurveParamMaps maps;
    if (model.downsample > 1) {
      maps = forward(model, resize_bilinear(img, H / model.downsample, W / model.downsample));
      maps.maps = resize_bilinear(maps.maps, H, W);
    } else {
      maps = forward(model, img);
    }
    const Tensor enhanced = enhance_with_maps(img, maps);
    save_image(drop_batch(enhanced), out_path);
    if (!dump_dir.empty())
      dump_curve_maps(maps, dump_dir, fs::path(in_path).stem().string());
    return true;
  } catch (const std::exception& e) {
    std::cerr << "error: " << in_path << ": " << e.what() << "\n";
    return false;
  }
}

int cmd_enhance(const std::string& model_path, const std::string& input,
                const std::string& output, int downsample, const std::string& dump_dir) {
  Model model = load_checkpoint(model_path);
  if (downsample > 0) model.downsample = downsample;

  if (fs::is_directory(input)) {
    fs::create_directories(output);
    int failures = 0, done = 0;
    for (const auto& name : list_files(input)) {
      const std::string in_path = (fs::path(input) / name).string();
      const std::string out_path = (fs::path(output) / name).string();
      if (enhance_file(model, in_path, out_path, dump_dir))
        ++done;
      else
        ++failures;
    }
    std::cout << "enhanced " << done << " file(s), " << failures << " failure(s)\n";
    return failures == 0 ? 0 : 1;
  }

  std::string out_path = output;
  if (fs::is_directory(output))
    out_path = (fs::path(output) / fs::path(input).filename()).string();
  return enhance_file(model, input, out_path, dump_dir) ? 0 : 1;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_path) {
  MetricReport report;
  int warnings = 0;
  for (const auto& name : list_files(pred_dir)) {
    const fs::path gt_path = fs::path(gt_dir) / name;
    if (!fs::exists(gt_path)) {
      std::cerr << "warning: no ground-truth counterpart for " << name << "\n";
      ++warnings;
      continue;
    }
    try {
      const Tensor pred = load_image((fs::path(pred_dir) / name).string());
      const Tensor gt = load_image(gt_path.string());
      MetricRow row;
      row.name = name;
      row.psnr = psnr(pred, gt);
      row.ssim = ssim(pred, gt);
      row.mae = mae(pred, gt);
      report.rows.push_back(row);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << name << ": " << e.what() << "\n";
      ++warnings;
    }
  }
  for (const auto& name : list_files(gt_dir))
    if (!fs::exists(fs::path(pred_dir) / name)) {
      std::cerr << "warning: no prediction for ground-truth file " << name << "\n";
      ++warnings;
    }

  if (report.rows.empty()) {
    std::cerr << "error: no matched image pairs between " << pred_dir << " and " << gt_dir << "\n";
    return 1;
  }
  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "error: cannot write " << out_path << "\n";
    return 1;
  }
  out << report.to_csv();
  const MetricRow m = report.mean_row();
  std::cout << report.rows.size() << " pair(s); mean psnr=" << m.psnr << " ssim=" << m.ssim
            << " mae=" << m.mae << "\n";
  return 0;
}

int cmd_info(const std::string& model_path, const std::string& flops_size) {
  const Model model = load_checkpoint(model_path);
  std::cout << "variant: " << variant_name(model.variant) << "\n"
            << "layers: " << model.layer_count() << "\n"
            << "features: " << model.features << "\n"
            << "iterations: " << model.iterations << "\n"
            << "downsample: " << model.downsample << "\n"
            << "parameters: " << param_count(model) << "\n";
  if (!flops_size.empty()) {
    const auto [w, h] = parse_size(flops_size);
    const double macs = flops(model, h, w);
    std::printf("flops(%dx%d): %.4f GMac (%.0f MACs)\n", w, h, macs / 1e9, macs);
  }
  return 0;
}

int cmd_gradcheck(uint64_t seed, bool inject_fault) {
  const auto components = run_gradcheck_suite(seed, inject_fault);
  for (const auto& c : components)
    std::printf("%-28s max relative error %.3e  (%lld coords, %lld kink-skipped)\n", c.name.c_str(),
                c.max_rel_err, static_cast<long long>(c.checked),
                static_cast<long long>(c.skipped));
  const bool ok = gradcheck_passes(components);
  std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << " (tolerance 1e-4)\n";
  return ok ? 0 : 1;
}

int cmd_ablate(const std::string& grid, const TrainConfig& base, const std::string& out_dir) {
  const auto entries = parse_grid(grid);
  fs::create_directories(out_dir);

  std::vector<std::string> warnings;
  const std::vector<Tensor> images = load_dataset(base.data_dir, base.train_size, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: skipped " << w << "\n";

  std::ofstream table((fs::path(out_dir) / "ablation.csv").string());
  table << "config,parameters,final_train_total,final_val_total\n";
  std::printf("%-14s %10s %18s %16s\n", "config", "params", "final_train_total",
              "final_val_total");
  for (const auto& e : entries) {
    TrainConfig cfg = base;
    cfg.layers = e.layers;
    cfg.features = e.features;
    cfg.iterations = e.iterations;
    cfg.checkpoint_path = (fs::path(out_dir) / (e.name() + ".ckpt")).string();
    const TrainResult result = train_on(cfg, images);
    const double final_train =
        result.iters.empty()
            ? std::nan("")
            : moving_average(result.iters, std::min<size_t>(10, result.iters.size()),
                             result.iters.size());
    const double final_val = result.epochs.empty() ? std::nan("") : result.epochs.back().val_total;
    table << e.name() << "," << param_count(result.model) << "," << final_train << ","
          << final_val << "\n";
    std::printf("%-14s %10lld %18.6f %16.6f\n", e.name().c_str(),
                static_cast<long long>(param_count(result.model)), final_train, final_val);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-reference low-light image enhancement via learned pixel-wise curves"};
  app.require_subcommand(1);

  // train ---------------------------------------------------------------
  TrainConfig train_cfg;
  std::string train_variant = "plain";
  auto* train_cmd = app.add_subcommand("train", "Train a curve-estimation model");
  train_cmd->add_option("--data", train_cfg.data_dir, "Directory of training images")
      ->required();
  train_cmd->add_option("--out", train_cfg.checkpoint_path, "Output checkpoint path")->required();
  train_cmd->add_option("--variant", train_variant, "Network variant")
      ->check(CLI::IsMember({"plain", "dsc"}))
      ->required();
  train_cmd->add_option("--epochs", train_cfg.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--batch", train_cfg.batch, "Batch size")->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--size", train_cfg.train_size, "Training resolution")
      ->capture_default_str();
  train_cmd->add_option("--e", train_cfg.loss.exposure_level, "Well-exposedness level E")
      ->capture_default_str();
  train_cmd->add_option("--wcol", train_cfg.loss.w_col, "Color constancy weight")
      ->capture_default_str();
  train_cmd->add_option("--wtv", train_cfg.loss.w_tv, "Illumination smoothness weight")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_cfg.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--val-fraction", train_cfg.val_fraction, "Validation split fraction")
      ->capture_default_str();
  train_cmd->add_option("--downsample", train_cfg.downsample,
                        "Estimation downsample factor (0 = variant default)");
  train_cmd->add_option("--max-iters", train_cfg.max_iters, "Stop after this many iterations");
  train_cmd->add_option("--grad-clip", train_cfg.grad_clip, "Global-norm gradient clip (0 = off)");
  train_cmd->add_option("--checkpoint-every", train_cfg.checkpoint_every,
                        "Epochs between periodic checkpoints");
  train_cmd->add_option("--log", train_cfg.log_path, "Training log file");
  train_cmd->set_config("--config", "", "Flat key = value config file; flags take precedence");
  // Mixed-exposure training data matters: training on low-light images alone
  // tends to over-enhance already well-lit regions.
  train_cmd->footer(
      "The training set should mix under- and over-exposed images; a low-light-only\n"
      "corpus biases the model toward over-enhancing well-lit regions.");

  // enhance -------------------------------------------------------------
  std::string enh_model, enh_input, enh_output, enh_dump;
  int enh_downsample = 0;
  auto* enh_cmd = app.add_subcommand("enhance", "Enhance an image or a directory of images");
  enh_cmd->add_option("--model", enh_model, "Checkpoint path")->required();
  enh_cmd->add_option("--input", enh_input, "Input image or directory")->required();
  enh_cmd->add_option("--output", enh_output, "Output image or directory")->required();
  enh_cmd->add_option("--downsample", enh_downsample,
                      "Override the checkpoint's estimation downsample factor");
  enh_cmd->add_option("--dump-maps", enh_dump,
                      "Write per-iteration curve parameter maps as normalized grayscale images");

  // eval ----------------------------------------------------------------
  std::string eval_pred, eval_gt, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM/MAE report over matching filenames");
  eval_cmd->add_option("--pred", eval_pred, "Directory of predictions")->required();
  eval_cmd->add_option("--gt", eval_gt, "Directory of ground-truth images")->required();
  eval_cmd->add_option("--out", eval_out, "Output CSV path")->required();

  // info ----------------------------------------------------------------
  std::string info_model, info_flops;
  auto* info_cmd = app.add_subcommand("info", "Describe a checkpoint");
  info_cmd->add_option("--model", info_model, "Checkpoint path")->required();
  info_cmd->add_option("--flops", info_flops, "Report the MAC estimate for a WxH input");

  // gradcheck -----------------------------------------------------------
  uint64_t gc_seed = 7;
  bool gc_fault = false;
  auto* gc_cmd = app.add_subcommand("gradcheck", "64-bit finite-difference gradient audit");
  gc_cmd->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
  gc_cmd->add_flag("--inject-fault", gc_fault, "Flip one analytic gradient (self-test)")
      ->group("");

  // ablate --------------------------------------------------------------
  std::string ab_grid, ab_out;
  TrainConfig ab_cfg;
  ab_cfg.epochs = 20;
  auto* ab_cmd = app.add_subcommand("ablate", "Train an l,f,n configuration grid");
  ab_cmd->add_option("--grid", ab_grid, "Semicolon-separated l,f,n triples, e.g. \"7,32,8;3,32,8\"")
      ->required()
      ->check([](const std::string& g) -> std::string {
        try {
          parse_grid(g);
          return {};
        } catch (const std::exception& e) {
          return e.what();
        }
      });
  ab_cmd->add_option("--data", ab_cfg.data_dir, "Directory of training images")->required();
  ab_cmd->add_option("--out", ab_out, "Output directory for checkpoints and the table")
      ->required();
  ab_cmd->add_option("--epochs", ab_cfg.epochs, "Training epochs per configuration")
      ->capture_default_str();
  ab_cmd->add_option("--batch", ab_cfg.batch, "Batch size")->capture_default_str();
  ab_cmd->add_option("--lr", ab_cfg.lr, "Learning rate")->capture_default_str();
  ab_cmd->add_option("--size", ab_cfg.train_size, "Training resolution")->capture_default_str();
  ab_cmd->add_option("--seed", ab_cfg.seed, "Shared random seed")->capture_default_str();
  ab_cmd->add_option("--max-iters", ab_cfg.max_iters, "Stop after this many iterations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) {
      train_cfg.variant = parse_variant(train_variant);
      const TrainResult result = train(train_cfg);
      std::cout << "trained " << result.iters.size() << " iteration(s); checkpoint written to "
                << train_cfg.checkpoint_path << "\n";
      if (!result.iters.empty())
        std::cout << "final total loss " << result.iters.back().loss.total << "\n";
      return 0;
    }
    if (*enh_cmd) return cmd_enhance(enh_model, enh_input, enh_output, enh_downsample, enh_dump);
    if (*eval_cmd) return cmd_eval(eval_pred, eval_gt, eval_out);
    if (*info_cmd) return cmd_info(info_model, info_flops);
    if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_fault);
    if (*ab_cmd) return cmd_ablate(ab_grid, ab_cfg, ab_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
