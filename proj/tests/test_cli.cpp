#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "curvelight/checkpoint.hpp"
#include "curvelight/image_io.hpp"
#include "curvelight/model.hpp"
#include "testutil.hpp"

// Drives the installed binary the way an operator would: real processes,
// real files, exit codes as the contract (0 success, 1 runtime failure,
// 2 usage error).

using namespace curvelight;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string out_file = testutil::fresh_dir("cliout") + "/out.txt";
  const std::string cmd =
      std::string(CURVELIGHT_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string make_checkpoint(Variant v, const std::string& dir) {
  const std::string path = dir + "/" + variant_name(v) + ".ckpt";
  save_checkpoint(build_model<float>(v, 7), path);
  return path;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run_cli("definitely-not-a-command").exit_code == 2);
  CHECK(run_cli("train --data x").exit_code == 2);  // missing required flags
  const std::string dir = testutil::fresh_dir("cli_usage");
  CHECK(run_cli("train --data " + dir + " --out " + dir + "/m.ckpt --variant weird").exit_code ==
        2);
  CHECK(run_cli("enhance --model a --input b --output c --bogus-flag 1").exit_code == 2);
  CHECK(run_cli("ablate --grid \"7;32\" --data " + dir + " --out " + dir).exit_code == 2);
}

TEST_CASE("help exits 0") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("train --help").exit_code == 0);
}

TEST_CASE("info prints the parameter counts") {
  const std::string dir = testutil::fresh_dir("cli_info");
  const auto plain = run_cli("info --model " + make_checkpoint(Variant::plain, dir));
  CHECK(plain.exit_code == 0);
  CHECK(plain.output.find("variant: plain") != std::string::npos);
  CHECK(plain.output.find("parameters: 79416") != std::string::npos);

  const auto dsc = run_cli("info --model " + make_checkpoint(Variant::dsc, dir));
  CHECK(dsc.exit_code == 0);
  CHECK(dsc.output.find("parameters: 10561") != std::string::npos);
  CHECK(dsc.output.find("downsample: 12") != std::string::npos);

  const auto flops_out =
      run_cli("info --model " + dir + "/plain.ckpt --flops 1200x900");
  CHECK(flops_out.exit_code == 0);
  CHECK(flops_out.output.find("flops(1200x900): 85.5") != std::string::npos);

  CHECK(run_cli("info --model " + dir + "/missing.ckpt").exit_code == 1);
}

TEST_CASE("enhance with a zeroed model reproduces the input within quantization") {
  const std::string dir = testutil::fresh_dir("cli_enh");
  Model m = build_model<float>(Variant::plain, 3);
  m.layers.back().w.fill(0.0f);
  m.layers.back().b.fill(0.0f);
  save_checkpoint(m, dir + "/zero.ckpt");

  const Tensor img = testutil::synth_image(12, 32, 0.3);
  save_image(img, dir + "/in.png");
  const auto r = run_cli("enhance --model " + dir + "/zero.ckpt --input " + dir +
                         "/in.png --output " + dir + "/out.png");
  CHECK(r.exit_code == 0);
  const Tensor out = load_image(dir + "/out.png");
  CHECK(max_abs_diff(load_image(dir + "/in.png"), out) <= 1.0 / 255.0 + 1e-6);
}

TEST_CASE("enhance directory mode preserves filenames and reports failures") {
  const std::string dir = testutil::fresh_dir("cli_enhdir");
  const std::string in_dir = dir + "/in", out_dir = dir + "/out";
  std::filesystem::create_directories(in_dir);
  save_image(testutil::synth_image(1, 48, 0.2), in_dir + "/a.png");
  save_image(testutil::synth_image(2, 48, 0.5), in_dir + "/b.ppm");
  std::ofstream(in_dir + "/broken.png") << "not a png";

  const std::string ckpt = make_checkpoint(Variant::dsc, dir);
  const auto r = run_cli("enhance --model " + ckpt + " --input " + in_dir + " --output " +
                         out_dir + " --downsample 4");
  CHECK(r.exit_code == 1);  // one per-file failure
  CHECK(r.output.find("2 file(s), 1 failure(s)") != std::string::npos);
  CHECK(std::filesystem::exists(out_dir + "/a.png"));
  CHECK(std::filesystem::exists(out_dir + "/b.ppm"));

  const Tensor out = load_image(out_dir + "/a.png");
  CHECK(min_value(out) >= 0.0f);
  CHECK(max_value(out) <= 1.0f);
}

TEST_CASE("enhance supports dumping normalized curve maps") {
  const std::string dir = testutil::fresh_dir("cli_maps");
  const std::string ckpt = make_checkpoint(Variant::plain, dir);
  save_image(testutil::synth_image(5, 24, 0.25), dir + "/in.png");
  const auto r = run_cli("enhance --model " + ckpt + " --input " + dir + "/in.png --output " +
                         dir + "/out.png --dump-maps " + dir + "/maps");
  CHECK(r.exit_code == 0);
  // 8 iterations x RGB
  int count = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir + "/maps"))
    ++count;
  CHECK(count == 24);
  CHECK(std::filesystem::exists(dir + "/maps/in_iter1_r.png"));
  CHECK(std::filesystem::exists(dir + "/maps/in_iter8_b.png"));
  const Tensor map = load_image(dir + "/maps/in_iter1_r.png");
  CHECK(min_value(map) >= 0.0f);
  CHECK(max_value(map) <= 1.0f);
}

TEST_CASE("eval compares directories and emits the CSV report") {
  const std::string dir = testutil::fresh_dir("cli_eval");
  const std::string pred = dir + "/pred", gt = dir + "/gt";
  std::filesystem::create_directories(pred);
  std::filesystem::create_directories(gt);
  for (int i = 0; i < 5; ++i) {
    const Tensor img = testutil::synth_image(static_cast<uint64_t>(i), 32, 0.4);
    char name[16];
    std::snprintf(name, sizeof name, "%d.png", i);
    save_image(img, pred + "/" + name);
    if (i != 3) save_image(img, gt + "/" + name);  // one missing counterpart
  }

  const std::string csv = dir + "/report.csv";
  const auto r = run_cli("eval --pred " + pred + " --gt " + gt + " --out " + csv);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("4 pair(s)") != std::string::npos);
  CHECK(r.output.find("no ground-truth counterpart for 3.png") != std::string::npos);

  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "filename,psnr,ssim,mae");
  int rows = 0;
  bool mean_row = false;
  double mae_sum = 0.0;
  std::string mean_line;
  while (std::getline(in, line)) {
    if (line.rfind("mean,", 0) == 0) {
      mean_row = true;
      mean_line = line;
    } else if (!line.empty()) {
      ++rows;
      mae_sum += std::stod(line.substr(line.rfind(',') + 1));
    }
  }
  CHECK(rows == 4);
  CHECK(mean_row);
  // identical pairs: psnr inf, ssim 1, mae 0
  CHECK(mean_line.find("mean,inf,1.000000,0.000000") == 0);
  CHECK(mae_sum == 0.0);

  // zero matches is a runtime failure
  const std::string empty_gt = dir + "/empty";
  std::filesystem::create_directories(empty_gt);
  CHECK(run_cli("eval --pred " + pred + " --gt " + empty_gt + " --out " + dir + "/r2.csv")
            .exit_code == 1);
}

TEST_CASE("gradcheck subcommand exits by verdict") {
  CHECK(run_cli("gradcheck").exit_code == 0);
  CHECK(run_cli("gradcheck --seed 123").exit_code == 0);
  const auto fault = run_cli("gradcheck --inject-fault");
  CHECK(fault.exit_code == 1);
  CHECK(fault.output.find("gradcheck FAIL") != std::string::npos);
}

TEST_CASE("train runs end to end and honors the config file override order") {
  const std::string dir = testutil::fresh_dir("cli_train");
  const std::string data = dir + "/data";
  std::filesystem::create_directories(data);
  testutil::write_mixed_dataset(data, 6, 48, 2025);

  // config file sets epochs=1; the command line overrides batch
  std::ofstream(dir + "/train.cfg") << "epochs = 1\nbatch = 3\nsize = 48\n";
  const auto r = run_cli("train --data " + data + " --out " + dir +
                         "/m.ckpt --variant dsc --config " + dir +
                         "/train.cfg --batch 2 --seed 5 --log " + dir + "/train.log");
  CHECK(r.exit_code == 0);
  // 6 images, val 0.2 -> 5 train images; batch 2 -> 3 iterations in 1 epoch
  CHECK(r.output.find("trained 3 iteration(s)") != std::string::npos);
  CHECK(std::filesystem::exists(dir + "/m.ckpt"));
  CHECK(load_checkpoint(dir + "/m.ckpt").variant == Variant::dsc);

  // --epochs 0 still writes the freshly initialized checkpoint
  const auto r0 = run_cli("train --data " + data + " --out " + dir +
                          "/m0.ckpt --variant plain --epochs 0 --size 48 --seed 5");
  CHECK(r0.exit_code == 0);
  CHECK(r0.output.find("trained 0 iteration(s)") != std::string::npos);
  CHECK(param_count(load_checkpoint(dir + "/m0.ckpt")) == 79416);

  CHECK(run_cli("train --data " + dir + "/nonexistent --out " + dir +
                "/x.ckpt --variant plain")
            .exit_code == 1);
}

TEST_CASE("ablate trains each grid entry and writes the table") {
  const std::string dir = testutil::fresh_dir("cli_ablate");
  const std::string data = dir + "/data";
  std::filesystem::create_directories(data);
  testutil::write_mixed_dataset(data, 6, 32, 31);

  const auto r = run_cli("ablate --grid \"3,4,2;3,4,8\" --data " + data + " --out " + dir +
                         "/grid --size 32 --epochs 1 --batch 2 --seed 9");
  CHECK(r.exit_code == 0);
  CHECK(std::filesystem::exists(dir + "/grid/l3-f4-n2.ckpt"));
  CHECK(std::filesystem::exists(dir + "/grid/l3-f4-n8.ckpt"));

  std::ifstream table(dir + "/grid/ablation.csv");
  std::string line;
  std::getline(table, line);
  CHECK(line == "config,parameters,final_train_total,final_val_total");
  int rows = 0;
  while (std::getline(table, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);

  const Model n2 = load_checkpoint(dir + "/grid/l3-f4-n2.ckpt");
  CHECK(n2.iterations == 2);
  CHECK(n2.layer_count() == 3);
}
