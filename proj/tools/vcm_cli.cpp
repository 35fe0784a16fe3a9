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

// vcm: prepare / train / postprocess / detect / evaluate / report / synth.
// Exit codes: 0 success, 1 internal error, 2 usage or configuration error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vcm.hpp"

namespace {

int exit_code_for(vcm::ErrorKind kind) {
  switch (kind) {
    case vcm::ErrorKind::kInternal:
    case vcm::ErrorKind::kCodec:
      return 1;
    default:
      return 2;
  }
}

std::string default_encoder() {
  const char* env = std::getenv("VCM_ENCODER_CMD");
  return env != nullptr && *env != '\0' ? env : "mock";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-processing of decoded video for machine consumption"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out = "out";
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  app.add_option("--jobs", jobs, "Worker count")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory (or file, where noted)")->capture_default_str();
  app.fallthrough();

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Encode and decode manifest sequences over a QP sweep");
  vcm::PrepareOptions prep;
  std::string manifest;
  prep.encoder_spec = default_encoder();
  std::string encoder_config;
  prepare->add_option("--manifest", manifest, "Sequence manifest (JSON)")->required();
  prepare->add_option("--qp", prep.qps, "QP list (default: per-class preset)");
  prepare->add_option("--encoder-cmd", prep.encoder_spec,
                      "'mock' or a command template with {input} {output} {bitstream} {qp}; env VCM_ENCODER_CMD")
      ->capture_default_str();
  prepare->add_option("--encoder-config", encoder_config, "Encoder configuration file, passed as {config}");
  prepare->add_option("--config-name", prep.config_name, "Configuration label recorded in job logs")
      ->capture_default_str();
  prepare->add_flag("--dry-run", prep.dry_run, "Print the job plan only");

  // train
  auto* train = app.add_subcommand("train", "Train the post-processing network");
  std::string run_config;
  std::string train_backend = "toy";
  std::string resume;
  bool train_dry = false;
  double lr = 1e-5;
  std::optional<int> steps, batch, patch, every, base_width, growth, rrdbs;
  std::vector<int> train_qps;
  train->add_option("--manifest", manifest, "Prepared manifest with decoded sequences")->required();
  train->add_option("--config", run_config, "Run config (JSON); command-line flags take precedence");
  train->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
  train->add_option("--steps", steps, "Training steps");
  train->add_option("--batch", batch, "Batch size");
  train->add_option("--patch", patch, "Patch size");
  train->add_option("--checkpoint-every", every, "Checkpoint interval in steps");
  train->add_option("--base-width", base_width, "Feature width");
  train->add_option("--growth", growth, "Dense growth channels");
  train->add_option("--rrdbs", rrdbs, "Number of RRDBs");
  train->add_option("--qp", train_qps, "Restrict training pairs to these QPs");
  train->add_option("--backend", train_backend, "Feature backend")->capture_default_str();
  train->add_option("--resume", resume, "Checkpoint to resume from");
  train->add_flag("--dry-run", train_dry, "Print the run plan only");

  // postprocess
  auto* post = app.add_subcommand("postprocess", "Run a checkpoint over decoded sequences");
  std::string checkpoint, post_input, post_output;
  post->add_option("--checkpoint", checkpoint, "Network checkpoint")->required();
  auto* post_in = post->add_option("--input", post_input, "Decoded sequence (.y4m or PNG directory)");
  auto* post_manifest = post->add_option("--manifest", manifest, "Prepared manifest; processes every entry");
  post_in->excludes(post_manifest);
  post->add_option("--output", post_output, "Output sequence for --input (.y4m or directory)");

  // detect
  auto* det = app.add_subcommand("detect", "Write per-frame detection dumps");
  std::string det_input, det_backend = "toy";
  double det_conf = 0.25;
  det->add_option("--input", det_input, "Sequence (.y4m or PNG directory)")->required();
  det->add_option("--backend", det_backend, "toy | external:<command with {input} {output}>")->capture_default_str();
  det->add_option("--conf", det_conf, "Confidence threshold")->capture_default_str();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score decoded/postprocessed sequences into a metrics CSV");
  vcm::EvaluateOptions ev;
  eval->add_option("--manifest", manifest, "Manifest with annotations")->required();
  eval->add_option("--backend", ev.backend, "toy | external:<command>")->capture_default_str();
  eval->add_option("--conf", ev.conf, "Confidence threshold for F1")->capture_default_str();
  eval->add_option("--iou", ev.iou, "IoU threshold")->capture_default_str();

  // report
  auto* rep = app.add_subcommand("report", "Plots and gap table from metrics CSVs");
  std::vector<std::string> csvs;
  rep->add_option("csv", csvs, "Metrics CSV files")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Write seeded synthetic rectangle sequences");
  vcm::SynthOptions syn;
  synth->add_option("--sequences", syn.sequences, "Sequence count")->capture_default_str();
  synth->add_option("--frames", syn.scene.frames, "Frames per sequence")->capture_default_str();
  synth->add_option("--width", syn.scene.width, "Frame width")->capture_default_str();
  synth->add_option("--height", syn.scene.height, "Frame height")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*prepare) {
      prep.manifest = manifest;
      prep.out_dir = out;
      prep.jobs = jobs;
      if (!encoder_config.empty()) prep.config_file = encoder_config;
      vcm::cmd_prepare(prep, std::cout);
    } else if (*train) {
      vcm::TrainCommand cmd;
      cmd.manifest = manifest;
      cmd.out_dir = out;
      cmd.backend = train_backend;
      cmd.dry_run = train_dry;
      if (!resume.empty()) cmd.resume = resume;
      vcm::TrainConfig cfg;
      if (!run_config.empty()) cfg = vcm::load_train_config(run_config);
      if (train->count("--lr") || run_config.empty()) cfg.lr = lr;
      if (app.count("--seed")) cfg.seed = seed;
      if (steps) cfg.max_steps = *steps;
      if (batch) cfg.batch_size = *batch;
      if (patch) cfg.patch_size = *patch;
      if (every) cfg.checkpoint_every = *every;
      if (base_width) cfg.net.base_width = *base_width;
      if (growth) cfg.net.growth = *growth;
      if (rrdbs) cfg.net.num_rrdb = *rrdbs;
      if (!train_qps.empty()) cfg.qps = train_qps;
      cfg.validate();
      cmd.config = cfg;
      vcm::cmd_train(cmd, std::cout);
    } else if (*post) {
      if (!manifest.empty()) {
        vcm::cmd_postprocess_manifest(checkpoint, manifest, out, jobs, std::cout);
      } else {
        if (post_input.empty() || post_output.empty()) {
          std::cerr << "postprocess: give --manifest, or --input with --output\n";
          return 2;
        }
        vcm::cmd_postprocess(checkpoint, post_input, post_output, std::cout);
      }
    } else if (*det) {
      vcm::cmd_detect(det_backend, det_input, out, det_conf, std::cout);
    } else if (*eval) {
      ev.manifest = manifest;
      ev.output_csv = std::filesystem::path(out) / "metrics.csv";
      ev.jobs = jobs;
      vcm::cmd_evaluate(ev, std::cout);
    } else if (*rep) {
      std::vector<std::filesystem::path> paths(csvs.begin(), csvs.end());
      vcm::cmd_report(paths, out, std::cout);
    } else if (*synth) {
      syn.out_dir = out;
      syn.scene.seed = seed;
      vcm::cmd_synth(syn, std::cout);
    }
  } catch (const vcm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
