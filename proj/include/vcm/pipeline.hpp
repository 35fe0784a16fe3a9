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

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcm/checksum.hpp"
#include "vcm/codec.hpp"
#include "vcm/data.hpp"
#include "vcm/detector.hpp"
#include "vcm/metrics.hpp"
#include "vcm/net.hpp"
#include "vcm/report.hpp"
#include "vcm/synthetic.hpp"
#include "vcm/training.hpp"

namespace vcm {

namespace fs = std::filesystem;

/// Runs task(i) for i in [0, count) on up to `workers` threads. The first
/// error is rethrown after every worker has stopped.
template <typename Fn>
void parallel_for(int count, int workers, Fn&& task) {
  workers = std::max(1, std::min(workers, count));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return nullptr;
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return nullptr;
  }
}

// ---------------------------------------------------------------------------
// prepare: encode/decode every manifest sequence at every QP

struct PrepareOptions {
  fs::path manifest;
  fs::path out_dir;
  std::vector<int> qps;  // empty: per-class preset
  std::string encoder_spec = "mock";
  std::string config_name = "random-access";
  fs::path config_file;
  int jobs = 1;
  bool dry_run = false;

  void validate() const {
    if (out_dir.empty()) fail(ErrorKind::kUsage, "prepare needs an output directory");
    if (jobs < 1) fail(ErrorKind::kUsage, "--jobs must be >= 1");
    for (int qp : qps) check_qp(qp);
    validate_encoder_template(encoder_spec);
    if (!config_file.empty() && !fs::exists(config_file)) {
      fail(ErrorKind::kIngestion, "encoder config not found: " + config_file.string());
    }
  }
};

struct PrepareResult {
  int jobs_run = 0;
  int jobs_skipped = 0;
  fs::path manifest;
};

inline std::vector<int> qps_for(const ManifestEntry& e, const std::vector<int>& requested) {
  if (!requested.empty()) return requested;
  return e.sequence_class.size() == 1 ? qp_preset(e.sequence_class[0]) : qp_preset('B');
}

/// Encodes each (sequence, QP) job into <out>/<id>/qp<qp>/ and writes
/// <out>/manifest.json with the decoded entries. A job whose recorded source,
/// settings and output checksums all still match is skipped.
inline PrepareResult cmd_prepare(const PrepareOptions& opt, std::ostream& log) {
  opt.validate();
  SequenceManifest manifest = load_manifest(opt.manifest);

  struct Job {
    std::size_t entry;
    int qp;
    fs::path dir;
    std::string source_checksum;
    bool skip = false;
  };
  std::vector<Job> jobs;
  std::map<std::size_t, std::string> source_sums;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    source_sums[i] = path_checksum(e.raw);
    for (int qp : qps_for(e, opt.qps)) {
      check_qp(qp);
      jobs.push_back({i, qp, opt.out_dir / e.id / ("qp" + std::to_string(qp)), source_sums[i]});
    }
  }

  auto settings = [&](const Job& job) {
    return nlohmann::json{{"source_checksum", job.source_checksum},
                          {"qp", job.qp},
                          {"encoder", opt.encoder_spec},
                          {"config", opt.config_name},
                          {"config_file", opt.config_file.empty() ? "" : path_checksum(opt.config_file)}};
  };
  for (auto& job : jobs) {
    const auto stamp = read_json_file(job.dir / "job.json");
    if (stamp.is_object() && stamp.value("settings", nlohmann::json()) == settings(job) &&
        fs::exists(job.dir / "decoded") && fs::exists(job.dir / "bitstream.bin") &&
        stamp.value("decoded_checksum", "") == path_checksum(job.dir / "decoded") &&
        stamp.value("bitstream_checksum", "") == file_checksum(job.dir / "bitstream.bin")) {
      job.skip = true;
    }
  }

  for (const auto& job : jobs) {
    log << (job.skip ? "skip " : (opt.dry_run ? "plan " : "run  ")) << manifest.entries[job.entry].id << " qp "
        << job.qp << " -> " << job.dir.string() << " [" << opt.encoder_spec << "]\n";
  }
  PrepareResult result;
  result.manifest = opt.out_dir / "manifest.json";
  for (const auto& job : jobs) (job.skip ? result.jobs_skipped : result.jobs_run) += 1;
  if (opt.dry_run) return result;

  std::vector<std::size_t> todo;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (!jobs[k].skip) todo.push_back(k);
  }
  // Raw sequences are loaded once and shared read-only by the workers.
  std::map<std::size_t, VideoSequence> sources;
  for (std::size_t k : todo) {
    const auto& e = manifest.entries[jobs[k].entry];
    if (!sources.count(jobs[k].entry)) sources[jobs[k].entry] = load_sequence(e.raw, e.fps);
  }
  parallel_for(static_cast<int>(todo.size()), opt.jobs, [&](int t) {
    const Job& job = jobs[todo[t]];
    fs::remove_all(job.dir);
    fs::create_directories(job.dir);
    CodecJob cj;
    cj.qp = job.qp;
    cj.config_name = opt.config_name;
    cj.encoder_spec = opt.encoder_spec;
    cj.config_file = opt.config_file;
    cj.input = &sources.at(job.entry);
    cj.work_dir = job.dir;
    cj.bitstream_path = job.dir / "bitstream.bin";
    CodecOutput out = encode_decode_external(cj);
    write_png_dir(job.dir / "decoded", out.decoded);
    nlohmann::json stamp = out.log;
    stamp["settings"] = settings(job);
    stamp["decoded_checksum"] = path_checksum(job.dir / "decoded");
    std::ofstream(job.dir / "job.json", std::ios::trunc) << stamp.dump(2) << '\n';
  });

  for (const auto& job : jobs) {
    const auto stamp = read_json_file(job.dir / "job.json");
    auto& entry = manifest.entries[job.entry];
    entry.decoded[job.qp] = {job.dir / "decoded", stamp.at("bitstream_bytes").get<std::uint64_t>()};
  }
  save_manifest(result.manifest, manifest);
  log << "prepared " << result.jobs_run << " job(s), skipped " << result.jobs_skipped << "; manifest "
      << result.manifest.string() << '\n';
  return result;
}

// ---------------------------------------------------------------------------
// train

struct TrainCommand {
  fs::path manifest;
  fs::path out_dir;
  TrainConfig config;
  std::string backend = "toy";
  std::optional<fs::path> resume;
  bool dry_run = false;
};

inline TrainResult cmd_train(const TrainCommand& cmd, std::ostream& log) {
  cmd.config.validate();
  if (cmd.out_dir.empty()) fail(ErrorKind::kUsage, "train needs an output directory");
  const SequenceManifest manifest = load_manifest(cmd.manifest);
  const auto backend = make_backend(cmd.backend);
  if (!backend->differentiable()) {
    fail(ErrorKind::kCapability, "backend '" + cmd.backend + "' cannot be used for training");
  }
  const auto sources = pair_sources(manifest, cmd.config.qps);
  if (sources.empty()) fail(ErrorKind::kIngestion, cmd.manifest.string() + ": no decoded sequences to train on");
  if (cmd.dry_run) {
    log << "train " << cmd.config.max_steps << " steps, batch " << cmd.config.batch_size << ", patch "
        << cmd.config.patch_size << ", lr " << cmd.config.lr << ", " << sources.size() << " pair source(s), "
        << PostProcNet<float>(cmd.config.net).parameter_count() << " parameters -> " << cmd.out_dir.string()
        << '\n';
    for (const auto& s : sources) log << "  " << s.id << " qp " << s.qp << '\n';
    return {};
  }
  fs::create_directories(cmd.out_dir);
  std::ofstream(cmd.out_dir / "run_config.json", std::ios::trunc) << to_json(cmd.config).dump(2) << '\n';
  TrainOptions options;
  options.out_dir = cmd.out_dir;
  options.resume = cmd.resume;
  TrainResult result = train(cmd.config, manifest, *backend, options);
  if (!result.losses.empty()) {
    char line[160];
    std::snprintf(line, sizeof(line), "final loss %.9g at step %lld\n", result.losses.back(),
                  static_cast<long long>(result.final_step));
    log << line;
  }
  log << "checkpoint " << result.final_checkpoint.string() << '\n';
  return result;
}

// ---------------------------------------------------------------------------
// postprocess

inline VideoSequence postprocess_sequence(const PostProcNet<float>& net, const VideoSequence& input) {
  VideoSequence out;
  out.fps = input.fps;
  out.color_space = input.color_space;
  out.frames.reserve(input.frames.size());
  for (const auto& f : input.frames) out.frames.push_back(quantize_u8(forward(net, f)));
  return out;
}

/// Post-processes one decoded sequence into `output` (.y4m or PNG directory).
inline void cmd_postprocess(const fs::path& checkpoint, const fs::path& input, const fs::path& output,
                            std::ostream& log) {
  const auto net = load_network<float>(checkpoint);
  SequenceReader reader(input);
  if (reader.frame_count() == 0) fail(ErrorKind::kIngestion, input.string() + " has no frames");
  const VideoSequence processed = postprocess_sequence(net, reader.read_all());
  write_sequence(output, processed);
  log << "postprocessed " << processed.frame_count() << " frame(s) -> " << output.string() << '\n';
}

/// Post-processes every decoded entry of a manifest into
/// <out>/<id>/qp<qp>/postprocessed and writes <out>/manifest.json.
inline fs::path cmd_postprocess_manifest(const fs::path& checkpoint, const fs::path& manifest_path,
                                         const fs::path& out_dir, int jobs, std::ostream& log) {
  SequenceManifest manifest = load_manifest(manifest_path);
  const auto net = load_network<float>(checkpoint);
  struct Task {
    std::size_t entry;
    int qp;
    fs::path out;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    for (const auto& [qp, d] : manifest.entries[i].decoded) {
      tasks.push_back({i, qp, out_dir / manifest.entries[i].id / ("qp" + std::to_string(qp)) / "postprocessed"});
    }
  }
  parallel_for(static_cast<int>(tasks.size()), jobs, [&](int t) {
    const auto& task = tasks[t];
    const auto& e = manifest.entries[task.entry];
    const VideoSequence decoded = load_sequence(e.decoded.at(task.qp).path, e.fps);
    fs::remove_all(task.out);
    write_png_dir(task.out, postprocess_sequence(net, decoded));
  });
  for (const auto& t : tasks) manifest.entries[t.entry].postprocessed[t.qp] = t.out;
  const auto out_manifest = out_dir / "manifest.json";
  save_manifest(out_manifest, manifest);
  log << "postprocessed " << tasks.size() << " sequence(s); manifest " << out_manifest.string() << '\n';
  return out_manifest;
}

// ---------------------------------------------------------------------------
// detect

/// Writes one detection dump per frame, <out>/<name>_<frame6>.txt.
inline int cmd_detect(const std::string& backend_spec, const fs::path& input, const fs::path& out_dir,
                      double conf, std::ostream& log) {
  if (!(conf >= 0.0 && conf <= 1.0)) fail(ErrorKind::kUsage, "--conf must be in [0,1]");
  const auto backend = make_backend(backend_spec, out_dir);
  if (!backend->supports_detection()) fail(ErrorKind::kCapability, "backend cannot detect objects");
  SequenceReader reader(input);
  fs::create_directories(out_dir);
  const std::string name = input.filename().empty() ? input.parent_path().stem().string() : input.stem().string();
  for (int i = 0; i < reader.frame_count(); ++i) {
    const auto dets = detect(*backend, reader.read(i), conf);
    write_detection_dump(out_dir / annotation_file_name(name, i), dets);
  }
  log << "detected " << reader.frame_count() << " frame(s) -> " << out_dir.string() << '\n';
  return reader.frame_count();
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  fs::path manifest;
  fs::path output_csv;
  std::string backend = "toy";
  double conf = 0.25;
  double iou = 0.5;
  int jobs = 1;

  void validate() const {
    if (output_csv.empty()) fail(ErrorKind::kUsage, "evaluate needs an output CSV path");
    if (!(conf >= 0.0 && conf <= 1.0)) fail(ErrorKind::kUsage, "--conf must be in [0,1]");
    if (!(iou > 0.0 && iou <= 1.0)) fail(ErrorKind::kUsage, "--iou must be in (0,1]");
    if (jobs < 1) fail(ErrorKind::kUsage, "--jobs must be >= 1");
  }
};

/// Scores every decoded and postprocessed sequence of an annotated manifest.
/// Skips all work when the inputs and the previous CSV are unchanged.
inline std::vector<RatePoint> cmd_evaluate(const EvaluateOptions& opt, std::ostream& log) {
  opt.validate();
  const SequenceManifest manifest = load_manifest(opt.manifest);
  struct Task {
    const ManifestEntry* entry;
    std::string label;
    int qp;
    fs::path path;
  };
  std::vector<Task> tasks;
  nlohmann::json inputs = {{"backend", opt.backend}, {"conf", opt.conf}, {"iou", opt.iou}};
  for (const auto& e : manifest.entries) {
    if (!e.annotations) {
      log << "note: " << e.id << " has no annotations, not evaluated\n";
      continue;
    }
    inputs["annotations"][e.id] = path_checksum(*e.annotations);
    for (const auto& [qp, d] : e.decoded) {
      tasks.push_back({&e, kLabelEncoded, qp, d.path});
      inputs["media"][e.id + "/encoded/" + std::to_string(qp)] = path_checksum(d.path);
      if (d.bitstream_bytes) inputs["bytes"][e.id + "/" + std::to_string(qp)] = *d.bitstream_bytes;
    }
    for (const auto& [qp, p] : e.postprocessed) {
      tasks.push_back({&e, kLabelPostprocessed, qp, p});
      inputs["media"][e.id + "/postprocessed/" + std::to_string(qp)] = path_checksum(p);
    }
  }
  if (tasks.empty()) fail(ErrorKind::kIngestion, opt.manifest.string() + ": nothing to evaluate");

  const fs::path stamp_path = fs::path(opt.output_csv).concat(".stamp.json");
  const auto stamp = read_json_file(stamp_path);
  if (stamp.is_object() && stamp.value("inputs", nlohmann::json()) == inputs && fs::exists(opt.output_csv) &&
      stamp.value("csv_checksum", "") == file_checksum(opt.output_csv)) {
    log << "up to date: " << opt.output_csv.string() << '\n';
    return read_metrics_csv(opt.output_csv);
  }

  const auto backend = make_backend(opt.backend, fs::absolute(opt.output_csv).parent_path());
  std::vector<RatePoint> points(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), opt.jobs, [&](int t) {
    const Task& task = tasks[t];
    const ManifestEntry& e = *task.entry;
    SequenceReader reader(task.path, e.fps);
    const int first = e.frame_range ? e.frame_range->first : 0;
    const int count = e.frame_range ? e.frame_range->second - first : reader.frame_count();
    const auto gt = load_sequence_annotations(*e.annotations, e.id, count, {reader.width(), reader.height()}, first);
    std::vector<FrameResults> frames(count);
    for (int i = 0; i < count; ++i) {
      frames[i].detections = detect(*backend, reader.read(first + i), 0.0);
      frames[i].ground_truth = gt[i];
    }
    RatePoint p = score_sequence(frames, opt.conf, opt.iou);
    p.sequence = e.id;
    p.label = task.label;
    p.qp = task.qp;
    const auto d = e.decoded.find(task.qp);
    if (d != e.decoded.end() && d->second.bitstream_bytes) {
      p.bitrate_kbps = measure_bitrate(*d->second.bitstream_bytes, reader.frame_count(), e.fps);
    }
    points[t] = std::move(p);
  });

  if (opt.output_csv.has_parent_path()) fs::create_directories(opt.output_csv.parent_path());
  write_metrics_csv(opt.output_csv, points);
  std::ofstream(stamp_path, std::ios::trunc)
      << nlohmann::json{{"inputs", inputs}, {"csv_checksum", file_checksum(opt.output_csv)}}.dump(2) << '\n';
  log << "evaluated " << tasks.size() << " sequence variant(s) -> " << opt.output_csv.string() << '\n';
  std::stable_sort(points.begin(), points.end(), rate_point_order);
  return points;
}

// ---------------------------------------------------------------------------
// report

inline ReportFiles cmd_report(const std::vector<fs::path>& csvs, const fs::path& out_dir, std::ostream& log) {
  if (csvs.empty()) fail(ErrorKind::kUsage, "report needs at least one metrics CSV");
  std::vector<RatePoint> points;
  for (const auto& csv : csvs) {
    auto more = read_metrics_csv(csv);
    points.insert(points.end(), more.begin(), more.end());
  }
  ReportFiles files = write_report(points, out_dir);
  log << "wrote " << files.plots.size() << " plot(s) and " << files.gap_markdown.string() << '\n';
  return files;
}

// ---------------------------------------------------------------------------
// synth: seeded rectangle sequences with annotations and a manifest

struct SynthOptions {
  fs::path out_dir;
  int sequences = 1;
  RectangleSceneConfig scene;
};

inline fs::path cmd_synth(const SynthOptions& opt, std::ostream& log) {
  if (opt.out_dir.empty()) fail(ErrorKind::kUsage, "synth needs an output directory");
  if (opt.sequences < 1) fail(ErrorKind::kUsage, "--sequences must be >= 1");
  if (opt.scene.width % 2 || opt.scene.height % 2) fail(ErrorKind::kDimension, "synthetic frames need even sizes");
  SequenceManifest manifest;
  for (int s = 0; s < opt.sequences; ++s) {
    char id[32];
    std::snprintf(id, sizeof(id), "rects%02d", s);
    RectangleSceneConfig cfg = opt.scene;
    cfg.seed = opt.scene.seed + static_cast<std::uint64_t>(s);
    const auto scene = make_rectangle_scene(cfg);
    const fs::path raw = opt.out_dir / id / "raw";
    const fs::path ann = opt.out_dir / id / "annotations";
    fs::remove_all(raw);
    fs::remove_all(ann);
    write_rectangle_scene(raw, ann, id, scene);
    ManifestEntry e;
    e.id = id;
    e.raw = raw;
    e.fps = cfg.fps;
    e.frames = cfg.frames;
    e.sequence_class = "B";
    e.annotations = ann;
    manifest.entries.push_back(std::move(e));
  }
  const auto path = opt.out_dir / "manifest.json";
  save_manifest(path, manifest);
  log << "wrote " << opt.sequences << " synthetic sequence(s); manifest " << path.string() << '\n';
  return path;
}

}  // namespace vcm
