// Copyright 2026 The vcm-postproc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "oracles.hpp"
#include "test_util.hpp"

#ifndef VCM_CLI_PATH
#error "VCM_CLI_PATH must name the built CLI"
#endif

namespace {

using namespace vcm;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome metric_oracles() {
  std::mt19937_64 rng(2026);
  double worst_ap = 0;
  int compared = 0;
  for (int n = 0; n < 1000; ++n) {
    const auto inst = oracle::random_instance(rng);
    for (int cls = 0; cls < 3; ++cls) {
      std::vector<Detection> d;
      std::vector<GroundTruthObject> g;
      for (const auto& x : inst.detections) if (x.class_id == cls) d.push_back(x);
      for (const auto& x : inst.ground_truth) if (x.class_id == cls) g.push_back(x);
      if (g.empty()) continue;
      worst_ap = std::max(worst_ap, std::abs(*average_precision(d, g, 0.5) - oracle::brute_force_ap(d, g, 0.5)));
      ++compared;
    }
  }
  double worst_iou = 0;
  for (int n = 0; n < 1000; ++n) {
    auto r = [&](int k) { return static_cast<double>(rng() % k); };
    Box a{r(40), r(40), 0, 0}, b{r(40), r(40), 0, 0};
    a.x_max = a.x_min + 1 + r(25), a.y_max = a.y_min + 1 + r(25);
    b.x_max = b.x_min + 1 + r(25), b.y_max = b.y_min + 1 + r(25);
    worst_iou = std::max(worst_iou, std::abs(iou(a, b) - oracle::raster_iou(a, b)));
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d class-instances, max |AP diff| %.2e; max |IoU diff| %.2e", compared,
                worst_ap, worst_iou);
  return {worst_ap <= 1e-9 && worst_iou <= 1e-6, buf};
}

Outcome loss_correctness() {
  ToyBackend be;
  const auto img = testing::random_tensor<double>(3, 1, 16, 16, 1);
  const double self = feature_loss(img, img, be);
  NetConfig cfg;
  cfg.base_width = 4;
  cfg.growth = 2;
  cfg.num_rrdb = 1;
  cfg.dense_layers_per_block = 3;
  cfg.dense_blocks_per_rrdb = 2;
  auto net = build_network<double>(cfg, 5);
  testing::randomize(net, 6, 0.1);
  const auto decoded = testing::random_tensor<double>(3, 1, 16, 16, 7, 0.3, 0.7);
  const auto raw = testing::random_tensor<double>(3, 1, 16, 16, 8, 0.2, 0.8);
  std::vector<double> grads(net.parameter_count());
  loss_and_gradient(net, decoded, raw, be, std::span<double>(grads));
  auto params = net.mutable_parameters();
  // Central-difference step near cbrt(machine epsilon): 1e-6 lets round-off
  // swamp the smallest (~1e-9) gradients, 1e-4 steps across LeakyReLU kinks.
  const double eps = 1e-5;
  double worst = 0;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + eps;
    const double up = feature_loss(raw, forward_batch(net, decoded), be);
    params[i] = keep - eps;
    const double down = feature_loss(raw, forward_batch(net, decoded), be);
    params[i] = keep;
    const double numeric = (up - down) / (2 * eps);
    // Gradients below 1e-9 are compared absolutely: FD noise dominates there.
    const double scale = std::max({std::abs(numeric), std::abs(grads[i]), 1e-9});
    worst = std::max(worst, std::abs(numeric - grads[i]) / scale);
    ++checked;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "loss(I,I) = %g; %zu parameters, max relative FD error %.2e", self, checked,
                worst);
  return {self == 0.0 && worst <= 1e-3, buf};
}

Outcome identity_and_checkpoint() {
  bool identity = true;
  const NetConfig cfg;  // full default width
  const auto net = build_network<float>(cfg, 11);
  for (int s = 0; s < 3; ++s) {
    const Frame x = testing::random_tensor<float>(3, 1, 40 + 13 * s, 37 + 29 * s, 100 + s);
    identity &= forward(net, x) == x;
  }
  testing::TempDir dir("acc3");
  NetConfig small;
  small.base_width = 8;
  small.growth = 4;
  small.num_rrdb = 2;
  auto trained = build_network<float>(small, 3);
  testing::randomize(trained, 4, 0.05);
  OptimizerState<float> opt(trained.parameter_count(), 1e-4);
  opt.step = 17;
  for (std::size_t i = 0; i < opt.first_moments.size(); ++i) {
    opt.first_moments[i] = 1e-3f * static_cast<float>(i % 7);
    opt.second_moments[i] = 1e-6f * static_cast<float>(i % 5);
  }
  save_checkpoint(dir / "a.vcmc", trained, &opt);
  const auto archive = read_checkpoint(dir / "a.vcmc");
  const auto back = network_from_archive<float>(archive);
  const auto opt_back = optimizer_from_archive<float>(archive);
  save_checkpoint(dir / "b.vcmc", back, &*opt_back);
  const bool round_trip = back == trained && opt_back->first_moments == opt.first_moments &&
                          opt_back->second_moments == opt.second_moments && opt_back->step == 17 &&
                          read_file_bytes(dir / "a.vcmc") == read_file_bytes(dir / "b.vcmc");
  return {identity && round_trip, std::string("identity at init ") + (identity ? "bit-exact" : "BROKEN") +
                                      ", checkpoint round trip " + (round_trip ? "bit-exact" : "BROKEN")};
}

Outcome codec_rate_distortion() {
  const Frame img = natural_image(64, 64, 1);
  VideoSequence seq;
  seq.frames = {img};
  double prev_mse = -1;
  std::uint64_t prev_bytes = ~0ull;
  bool monotone = true, lossless = false;
  std::string trace;
  for (int qp : {4, 10, 16, 22, 28, 34, 40, 46}) {
    const auto r = mock_codec(seq, qp);
    double mse = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
      const double d = 255.0 * (r.decoded.frames[0].values()[i] - img.values()[i]);
      mse += d * d;
    }
    mse /= static_cast<double>(img.size());
    const std::uint64_t bytes = r.bitstream.size();
    if (qp == 4) lossless = r.decoded.frames[0] == img;
    monotone &= mse >= prev_mse && bytes <= prev_bytes;
    prev_mse = mse;
    prev_bytes = bytes;
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s%d:%.1f/%llu", trace.empty() ? "" : " ", qp, mse,
                  static_cast<unsigned long long>(bytes));
    trace += buf;
  }
  return {monotone && lossless, "qp:mse/bytes " + trace + (lossless ? "; qp4 lossless" : "; qp4 LOSSY")};
}

double sequence_map(const VideoSequence& video, const RectangleScene& scene, const DetectorBackend& be) {
  std::vector<FrameResults> frames;
  for (int i = 0; i < video.frame_count(); ++i) frames.push_back({detect(be, video.frames[i], 0.0), scene.objects[i]});
  return score_sequence(frames).map_value;
}

Outcome end_to_end() {
  RectangleSceneConfig scene_cfg;  // 200 frames, 64x64
  scene_cfg.seed = 7;
  const auto train_scene = make_rectangle_scene(scene_cfg);
  scene_cfg.seed = 8;
  const auto test_scene = make_rectangle_scene(scene_cfg);
  const auto train_dec = mock_codec(train_scene.video, 40).decoded;
  const auto test_dec = mock_codec(test_scene.video, 40).decoded;
  ToyBackend be;

  TrainConfig tc;
  tc.net = {3, 8, 4, 3, 5, 3, 0.2, 0.2};
  tc.lr = 1e-3;
  tc.batch_size = 4;
  tc.patch_size = 32;
  TrainRun<float> run(build_network<float>(tc.net, 1), tc);

  const auto fixed = make_patch_pairs(train_scene.video, train_dec, tc.patch_size, 16, 999);
  std::vector<Frame> fd, fr;
  for (const auto& p : fixed) {
    fd.push_back(p.decoded_patch);
    fr.push_back(p.raw_patch);
  }
  const auto fixed_dec = stack_batch<float>(fd);
  const auto fixed_raw = stack_batch<float>(fr);
  auto fixed_loss = [&] { return static_cast<double>(feature_loss(fixed_raw, forward_batch(run.net, fixed_dec), be)); };
  const double initial = fixed_loss();
  for (int step = 1; step <= 2000; ++step) {
    const auto batch = make_patch_pairs(train_scene.video, train_dec, tc.patch_size, tc.batch_size, 1000 + step);
    train_step(run, std::span<const PatchPair>(batch), be);
  }
  const double final_loss = fixed_loss();
  const double decoded_map = sequence_map(test_dec, test_scene, be);
  const double post_map = sequence_map(postprocess_sequence(run.net, test_dec), test_scene, be);
  const double ratio = final_loss / initial;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "fixed-batch loss %.3e -> %.3e (%.1f%%); held-out mAP decoded %.2f, "
                "postprocessed %.2f (%+.2f)", initial, final_loss, 100 * ratio, decoded_map, post_map,
                post_map - decoded_map);
  return {ratio <= 0.5 && post_map - decoded_map >= 2.0, buf};
}

std::string run_pipeline(const fs::path& root, std::string& log) {
  const std::string exe = shell_quote(VCM_CLI_PATH);
  auto q = [](const fs::path& p) { return shell_quote(p.string()); };
  const std::vector<std::string> steps{
      "--seed 21 synth --sequences 1 --frames 24 --out " + q(root / "data"),
      "prepare --manifest " + q(root / "data" / "manifest.json") + " --qp 37 42 --out " + q(root / "prep"),
      "--seed 21 train --manifest " + q(root / "prep" / "manifest.json") +
          " --steps 100 --batch 2 --patch 32 --base-width 8 --growth 4 --rrdbs 1 --checkpoint-every 100"
          " --lr 1e-3 --out " + q(root / "run"),
      "postprocess --checkpoint " + q(root / "run" / "checkpoint_000100.vcmc") + " --manifest " +
          q(root / "prep" / "manifest.json") + " --out " + q(root / "post"),
      "evaluate --manifest " + q(root / "post" / "manifest.json") + " --out " + q(root / "eval"),
      "report " + q(root / "eval" / "metrics.csv") + " --out " + q(root / "report"),
  };
  for (const auto& s : steps) {
    const auto r = run_command(exe + " " + s);
    if (r.exit_code != 0) {
      log = "step failed (" + std::to_string(r.exit_code) + "): " + s + "\n" + r.output;
      return {};
    }
  }
  const auto bytes = read_file_bytes(root / "eval" / "metrics.csv");
  return {bytes.begin(), bytes.end()};
}

Outcome pipeline_determinism() {
  testing::TempDir a("acc6a"), b("acc6b");
  std::string log;
  const std::string first = run_pipeline(a.path(), log);
  if (first.empty()) return {false, log};
  const std::string second = run_pipeline(b.path(), log);
  if (second.empty()) return {false, log};
  const auto rows = std::count(first.begin(), first.end(), '\n');
  return {first == second, std::to_string(rows - 1) + " metric rows, " +
                               (first == second ? "byte-identical" : "DIFFERENT") + " across two runs"};
}

Outcome bitrate_and_color() {
  const double kbps = measure_bitrate(1000000, 150, 30.0);
  // Every 16th code value per channel, each color on its own 2x2 block so
  // chroma subsampling averages identical pixels.
  const int n = 16;
  Frame f = make_frame(2 * n, 2 * n * n);
  for (int r = 0; r < n; ++r) {
    for (int g = 0; g < n; ++g) {
      for (int b = 0; b < n; ++b) {
        const float rgb[3] = {from_u8(static_cast<std::uint8_t>(r * 17)), from_u8(static_cast<std::uint8_t>(g * 17)),
                              from_u8(static_cast<std::uint8_t>(b * 17))};
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            for (int c = 0; c < 3; ++c) f(c, 2 * r + dy, 2 * (g * n + b) + dx) = rgb[c];
          }
        }
      }
    }
  }
  const Frame back = yuv420_to_rgb(rgb_to_yuv420(f));
  double worst = 0;
  for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(double(back.values()[i]) - f.values()[i]));
  char buf[120];
  std::snprintf(buf, sizeof(buf), "%.1f kbps; max color round-trip error %.2f/255 over %d colors", kbps, 255 * worst,
                n * n * n);
  return {kbps == 1600.0 && worst <= 2.0 / 255.0 + 1e-7, buf};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracle equivalence", metric_oracles},
      {"loss correctness", loss_correctness},
      {"identity at init and checkpoint round trip", identity_and_checkpoint},
      {"mock codec rate-distortion sanity", codec_rate_distortion},
      {"end-to-end synthetic mAP gain", end_to_end},
      {"pipeline determinism", pipeline_determinism},
      {"bitrate math and color round trip", bitrate_and_color},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %zu %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
