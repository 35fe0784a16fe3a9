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

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcm/bounded_queue.hpp"
#include "vcm/checkpoint.hpp"
#include "vcm/data.hpp"
#include "vcm/detector.hpp"
#include "vcm/error.hpp"
#include "vcm/net.hpp"
#include "vcm/optim.hpp"

namespace vcm {

// ---------------------------------------------------------------------------
// Feature loss: mean over the three pyramid levels of the per-level MSE
// between backbone features of the raw and the processed frames.

template <typename T>
void check_loss_inputs(const Tensor<T>& raw, const Tensor<T>& output) {
  if (!raw.same_shape(output)) {
    fail(ErrorKind::kShape, "feature_loss: raw " + raw.shape_string() + " vs output " + output.shape_string());
  }
}

template <typename T>
T pyramid_mse(const FeaturePyramid<T>& a, const FeaturePyramid<T>& b) {
  double total = 0.0;
  for (int k = 0; k < 3; ++k) {
    auto av = a.maps[k].values();
    auto bv = b.maps[k].values();
    double sum = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
      sum += d * d;
    }
    total += sum / static_cast<double>(av.size());
  }
  return static_cast<T>(total / 3.0);
}

template <typename T>
T feature_loss(const Tensor<T>& raw, const Tensor<T>& output, const DetectorBackend& backend) {
  check_loss_inputs(raw, output);
  return pyramid_mse(extract_features(backend, raw), extract_features(backend, output));
}

template <typename T>
struct LossWithGradient {
  T loss = T(0);
  Tensor<T> output_grad;  // d loss / d output
};

/// Loss and its gradient w.r.t. `output`; needs a differentiable backend.
template <typename T>
LossWithGradient<T> feature_loss_with_grad(const Tensor<T>& raw, const Tensor<T>& output,
                                           const DetectorBackend& backend) {
  check_loss_inputs(raw, output);
  if (!backend.differentiable()) {
    fail(ErrorKind::kCapability, "backend '" + backend.name() + "' is not differentiable");
  }
  const auto raw_f = extract_features(backend, raw);
  const auto out_f = extract_features(backend, output);
  FeaturePyramid<T> grad;
  grad.strides = out_f.strides;
  for (int k = 0; k < 3; ++k) {
    grad.maps[k] = out_f.maps[k];
    auto g = grad.maps[k].values();
    auto r = raw_f.maps[k].values();
    const T scale = static_cast<T>(2.0 / (3.0 * static_cast<double>(g.size())));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (g[i] - r[i]);
  }
  return {pyramid_mse(raw_f, out_f), backend.features_vjp(output, grad)};
}

// ---------------------------------------------------------------------------
// Training configuration

struct TrainConfig {
  NetConfig net;
  int batch_size = 8;
  int patch_size = 256;
  int max_steps = 1000;
  int checkpoint_every = 500;
  std::uint64_t seed = 0;
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int prefetch = 2;
  std::vector<int> qps;  // empty: every decoded QP in the manifest

  void validate() const {
    net.validate();
    auto positive = [](int v, const char* field) {
      if (v < 1) fail(ErrorKind::kConfig, std::string(field) + " must be >= 1");
    };
    positive(batch_size, "batch_size");
    positive(patch_size, "patch_size");
    positive(max_steps, "max_steps");
    positive(checkpoint_every, "checkpoint_every");
    positive(prefetch, "prefetch");
    if (!(lr > 0)) fail(ErrorKind::kConfig, "lr must be > 0");
    if (!(beta1 >= 0 && beta1 < 1)) fail(ErrorKind::kConfig, "beta1 must be in [0,1)");
    if (!(beta2 >= 0 && beta2 < 1)) fail(ErrorKind::kConfig, "beta2 must be in [0,1)");
    if (!(epsilon > 0)) fail(ErrorKind::kConfig, "epsilon must be > 0");
    for (int qp : qps) {
      if (qp < 0 || qp > 63) fail(ErrorKind::kConfig, "qps entries must be in [0,63]");
    }
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"net", to_json(c.net)},
          {"batch_size", c.batch_size},
          {"patch_size", c.patch_size},
          {"max_steps", c.max_steps},
          {"checkpoint_every", c.checkpoint_every},
          {"seed", c.seed},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"prefetch", c.prefetch},
          {"qps", c.qps}};
}

/// Overlays a JSON run config onto `base`. Unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "net") base.net = net_config_from_json(value, base.net);
      else if (key == "batch_size") base.batch_size = value.get<int>();
      else if (key == "patch_size") base.patch_size = value.get<int>();
      else if (key == "max_steps") base.max_steps = value.get<int>();
      else if (key == "checkpoint_every") base.checkpoint_every = value.get<int>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "lr") base.lr = value.get<double>();
      else if (key == "beta1") base.beta1 = value.get<double>();
      else if (key == "beta2") base.beta2 = value.get<double>();
      else if (key == "epsilon") base.epsilon = value.get<double>();
      else if (key == "prefetch") base.prefetch = value.get<int>();
      else if (key == "qps") base.qps = value.get<std::vector<int>>();
      else fail(ErrorKind::kConfig, "unknown run config key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::kConfig, "run config key '" + key + "' has the wrong type");
    }
  }
  base.validate();
  return base;
}

inline TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {}) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::kIngestion, "run config not found: " + path.string());
  std::ifstream in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, path.string() + ": invalid JSON: " + e.what());
  }
  return train_config_from_json(j, base);
}

// ---------------------------------------------------------------------------
// Training step

template <typename T>
struct TrainRun {
  PostProcNet<T> net;
  OptimizerState<T> optimizer;
  TrainConfig config;

  TrainRun(PostProcNet<T> network, const TrainConfig& cfg)
      : net(std::move(network)), optimizer(net.parameter_count(), cfg.lr), config(cfg) {
    optimizer.beta1 = cfg.beta1;
    optimizer.beta2 = cfg.beta2;
    optimizer.epsilon = cfg.epsilon;
  }
};

/// Loss and parameter gradient of a batch, without updating anything.
template <typename T>
T loss_and_gradient(const PostProcNet<T>& net, const Tensor<T>& decoded, const Tensor<T>& raw,
                    const DetectorBackend& backend, std::span<T> grads) {
  if (!decoded.same_shape(raw)) {
    fail(ErrorKind::kShape, "decoded " + decoded.shape_string() + " and raw " + raw.shape_string() +
                                " are not aligned");
  }
  ForwardTape<T> tape;
  const Tensor<T> output = forward_batch(net, decoded, &tape);
  const auto lg = feature_loss_with_grad(raw, output, backend);
  std::fill(grads.begin(), grads.end(), T(0));
  backward_batch(net, tape, lg.output_grad, grads);
  return lg.loss;
}

/// One forward/backward/Adam step over a stacked (C, N, H, W) batch.
/// Returns the batch loss before the update. The backend is only read.
template <typename T>
T train_step(TrainRun<T>& run, const Tensor<T>& decoded, const Tensor<T>& raw, const DetectorBackend& backend) {
  if (decoded.batch() < 1 || decoded.size() == 0) fail(ErrorKind::kUsage, "train_step needs a nonempty batch");
  std::vector<T> grads(run.net.parameter_count());
  const T loss = loss_and_gradient(run.net, decoded, raw, backend, std::span<T>(grads));
  adam_update(run.net.mutable_parameters(), std::span<const T>(grads), run.optimizer);
  return loss;
}

inline float train_step(TrainRun<float>& run, std::span<const PatchPair> batch, const DetectorBackend& backend) {
  if (batch.empty()) fail(ErrorKind::kUsage, "train_step needs a nonempty batch");
  std::vector<Frame> decoded;
  std::vector<Frame> raw;
  for (const auto& p : batch) {
    decoded.push_back(p.decoded_patch);
    raw.push_back(p.raw_patch);
  }
  return train_step(run, stack_batch<float>(decoded), stack_batch<float>(raw), backend);
}

// ---------------------------------------------------------------------------
// Training loop over a manifest

/// One (decoded, raw) pair source: a sequence at one QP.
struct PairSource {
  std::string id;
  int qp = 0;
  std::shared_ptr<SequenceReader> raw;
  std::shared_ptr<SequenceReader> decoded;
  int first_frame = 0;
  int frame_count = 0;
};

/// Resolves every (decoded, raw) pair in the manifest, optionally restricted
/// to a QP list.
inline std::vector<PairSource> pair_sources(const SequenceManifest& manifest, const std::vector<int>& qps) {
  std::vector<PairSource> sources;
  for (const auto& e : manifest.entries) {
    auto raw = std::make_shared<SequenceReader>(e.raw, e.fps);
    const int first = e.frame_range ? e.frame_range->first : 0;
    const int count = e.frame_range ? e.frame_range->second - first : raw->frame_count();
    for (const auto& [qp, d] : e.decoded) {
      if (!qps.empty() && std::find(qps.begin(), qps.end(), qp) == qps.end()) continue;
      auto decoded = std::make_shared<SequenceReader>(d.path, e.fps);
      if (decoded->frame_count() != raw->frame_count() || decoded->width() != raw->width() ||
          decoded->height() != raw->height()) {
        fail(ErrorKind::kAlignment, e.id + " qp " + std::to_string(qp) + ": decoded does not match raw");
      }
      sources.push_back({e.id, qp, raw, decoded, first, count});
    }
  }
  return sources;
}

/// Batches are a pure function of (seed, step), so resumed runs see the same
/// data as uninterrupted ones.
class BatchSampler {
 public:
  BatchSampler(std::vector<PairSource> sources, int patch, int batch, std::uint64_t seed)
      : sources_(std::move(sources)), patch_(patch), batch_(batch), seed_(seed) {
    if (sources_.empty()) fail(ErrorKind::kIngestion, "no (decoded, raw) pairs to train on");
    for (const auto& s : sources_) {
      if (patch_ > std::min(s.raw->width(), s.raw->height())) {
        fail(ErrorKind::kConfig, "patch_size " + std::to_string(patch_) + " exceeds " + s.id + " frame size");
      }
      if (s.frame_count < 1) fail(ErrorKind::kIngestion, s.id + " has no frames");
    }
  }

  std::pair<Tensor<float>, Tensor<float>> batch(std::int64_t step) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<Frame> decoded;
    std::vector<Frame> raw;
    for (int b = 0; b < batch_; ++b) {
      const auto& src = sources_[rng() % sources_.size()];
      const auto pos = sample_patch_position(rng, src.frame_count, src.raw->height(), src.raw->width(), patch_);
      const int frame = src.first_frame + pos.frame;
      decoded.push_back(crop(cached(*src.decoded, frame), pos.y, pos.x, patch_, patch_));
      raw.push_back(crop(cached(*src.raw, frame), pos.y, pos.x, patch_, patch_));
    }
    return {stack_batch<float>(decoded), stack_batch<float>(raw)};
  }

 private:
  const Frame& cached(const SequenceReader& reader, int index) {
    const auto key = std::make_pair(reader.path().string(), index);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    if (cache_.size() >= kCacheFrames) {
      cache_.erase(order_.front());
      order_.pop_front();
    }
    order_.push_back(key);
    return cache_.emplace(key, reader.read(index)).first->second;
  }

  static constexpr std::size_t kCacheFrames = 256;
  std::vector<PairSource> sources_;
  int patch_;
  int batch_;
  std::uint64_t seed_;
  std::map<std::pair<std::string, int>, Frame> cache_;
  std::list<std::pair<std::string, int>> order_;
};

inline std::string checkpoint_name(std::int64_t step) {
  char name[40];
  std::snprintf(name, sizeof(name), "checkpoint_%06lld.vcmc", static_cast<long long>(step));
  return name;
}

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<double> losses;  // per step run in this invocation
  std::int64_t final_step = 0;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  std::function<void(std::int64_t step, double loss)> on_step;  // optional progress hook
};

/// Trains on every (decoded, raw) pair of the manifest. Writes
/// checkpoint_<step>.vcmc every checkpoint_every steps and at the end (once),
/// and appends `step,loss,seconds` rows to train_log.csv.
inline TrainResult train(const TrainConfig& config, const SequenceManifest& manifest,
                         const DetectorBackend& backend, const TrainOptions& options) {
  config.validate();
  if (!backend.differentiable()) {
    fail(ErrorKind::kCapability, "training needs a differentiable backend, got '" + backend.name() + "'");
  }
  namespace fs = std::filesystem;
  fs::create_directories(options.out_dir);
  BatchSampler sampler(pair_sources(manifest, config.qps), config.patch_size, config.batch_size, config.seed);

  std::unique_ptr<TrainRun<float>> run;
  if (options.resume) {
    const auto archive = read_checkpoint(*options.resume);
    auto net = network_from_archive<float>(archive, options.resume->string());
    run = std::make_unique<TrainRun<float>>(std::move(net), config);
    if (auto state = optimizer_from_archive<float>(archive)) {
      state->lr = config.lr;
      run->optimizer = std::move(*state);
    }
  } else {
    run = std::make_unique<TrainRun<float>>(build_network<float>(config.net, config.seed), config);
  }

  const auto log_path = options.out_dir / "train_log.csv";
  const bool fresh_log = !options.resume || !fs::exists(log_path);
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) fail(ErrorKind::kIngestion, "cannot write " + log_path.string());
  if (fresh_log) log << "step,loss,seconds\n";

  TrainResult result;
  const std::int64_t start = run->optimizer.step;
  const nlohmann::json meta = {{"run", to_json(config)}};
  auto save = [&](std::int64_t step) {
    const auto path = options.out_dir / checkpoint_name(step);
    save_checkpoint(path, run->net, &run->optimizer, meta);
    result.checkpoints.push_back(path);
    result.final_checkpoint = path;
  };

  BoundedQueue<std::pair<Tensor<float>, Tensor<float>>> queue(static_cast<std::size_t>(config.prefetch));
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      for (std::int64_t step = start + 1; step <= config.max_steps; ++step) {
        if (!queue.push(sampler.batch(step))) break;
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });

  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t last_saved = -1;
  try {
    for (std::int64_t step = start + 1; step <= config.max_steps; ++step) {
      auto batch = queue.pop();
      if (!batch) break;
      const float loss = train_step(*run, batch->first, batch->second, backend);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char row[96];
      std::snprintf(row, sizeof(row), "%lld,%.9g,%.3f\n", static_cast<long long>(step), loss, seconds);
      log << row;
      result.losses.push_back(loss);
      if (options.on_step) options.on_step(step, loss);
      if (step % config.checkpoint_every == 0) {
        save(step);
        last_saved = step;
      }
    }
  } catch (...) {
    queue.close();
    producer.join();
    throw;
  }
  queue.close();
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);
  result.final_step = run->optimizer.step;
  if (last_saved != result.final_step) save(result.final_step);
  return result;
}

}  // namespace vcm
