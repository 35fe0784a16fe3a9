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
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vcm/error.hpp"
#include "vcm/image_io.hpp"
#include "vcm/process.hpp"
#include "vcm/tensor.hpp"

namespace vcm {

/// Exactly three backbone feature maps at strictly increasing strides.
template <typename T>
struct FeaturePyramid {
  std::array<Tensor<T>, 3> maps;
  std::array<int, 3> strides{8, 16, 32};
};

/// Axis-aligned box in pixel coordinates, corners on pixel edges.
struct Box {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
  int class_id = 0;
  Box box;
  double confidence = 0;
  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Annotated object; frame indices are zero-based.
struct GroundTruthObject {
  int frame_index = 0;
  int class_id = 0;
  Box box;
  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

/// Order used for every detection list: confidence desc, then x_min, y_min.
inline bool detection_order(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.box.x_min != b.box.x_min) return a.box.x_min < b.box.x_min;
  if (a.box.y_min != b.box.y_min) return a.box.y_min < b.box.y_min;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  if (a.box.x_max != b.box.x_max) return a.box.x_max < b.box.x_max;
  return a.box.y_max < b.box.y_max;
}

/// A detector that can supply backbone features (for the training loss)
/// and/or thresholded detections (for evaluation).
///
/// Implementations must be deterministic and read-only after construction.
class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;

  virtual std::string name() const = 0;
  virtual bool supports_features() const { return false; }
  virtual bool supports_detection() const { return false; }
  virtual bool differentiable() const { return false; }
  virtual std::array<int, 3> strides() const { return {8, 16, 32}; }

  /// Frozen backend weights; training never writes through this.
  virtual std::span<const double> parameters() const { return {}; }

  // Feature extraction over a (C, N, H, W) batch. The *_vjp overloads map a
  // pyramid-shaped gradient back to the input.
  virtual FeaturePyramid<float> features(const Tensor<float>&) const { no_features(); }
  virtual FeaturePyramid<double> features(const Tensor<double>&) const { no_features(); }
  virtual Tensor<float> features_vjp(const Tensor<float>&, const FeaturePyramid<float>&) const {
    no_gradients();
  }
  virtual Tensor<double> features_vjp(const Tensor<double>&, const FeaturePyramid<double>&) const {
    no_gradients();
  }

  /// Raw detections for one frame; callers go through vcm::detect.
  virtual std::vector<Detection> detect_raw(const Frame&) const {
    fail(ErrorKind::kCapability, "backend '" + name() + "' cannot detect objects");
  }

 protected:
  [[noreturn]] void no_features() const {
    fail(ErrorKind::kCapability, "backend '" + name() + "' does not expose features");
  }
  [[noreturn]] void no_gradients() const {
    fail(ErrorKind::kCapability, "backend '" + name() + "' is not differentiable");
  }
};

template <typename T>
FeaturePyramid<T> extract_features(const DetectorBackend& backend, const Tensor<T>& frames) {
  if (!backend.supports_features()) {
    fail(ErrorKind::kCapability, "backend '" + backend.name() + "' does not expose features");
  }
  if (frames.height() < 1 || frames.width() < 1 || frames.batch() < 1) {
    fail(ErrorKind::kShape, "empty input " + frames.shape_string());
  }
  return backend.features(frames);
}

/// Thresholded, deterministically ordered detections.
inline std::vector<Detection> detect(const DetectorBackend& backend, const Frame& frame,
                                     double conf_threshold) {
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) {
    fail(ErrorKind::kUsage, "confidence threshold must be in [0,1]");
  }
  if (!backend.supports_detection()) {
    fail(ErrorKind::kCapability, "backend '" + backend.name() + "' cannot detect objects");
  }
  std::vector<Detection> dets = backend.detect_raw(frame);
  std::erase_if(dets, [&](const Detection& d) { return d.confidence < conf_threshold; });
  std::sort(dets.begin(), dets.end(), detection_order);
  return dets;
}

// ---------------------------------------------------------------------------
// Toy backbone + detector

/// Per-component statistics consumed by the toy confidence rule.
struct ComponentStats {
  double saturation_sum = 0;
  long pixel_count = 0;
};

/// Mean channel saturation of a component, clipped to [0,1].
inline double toy_detector_confidence(const ComponentStats& stats) {
  if (stats.pixel_count < 1) fail(ErrorKind::kUsage, "component has no pixels");
  return std::clamp(stats.saturation_sum / static_cast<double>(stats.pixel_count), 0.0, 1.0);
}

/// Deterministic, differentiable stand-in for a detector backbone plus a
/// connected-component color detector.
///
/// Features: for every input channel, the stack [intensity, horizontal
/// gradient, vertical gradient, 3x3 local mean] (replicate padding), average
/// pooled at each stride. Detection: per channel c, dominance
/// v_c - max(other channels) thresholded at 0.6, 8-connected components with at
/// least 9 pixels, one class per channel.
class ToyBackend final : public DetectorBackend {
 public:
  static constexpr int kFeaturesPerChannel = 4;
  static constexpr double kDominanceThreshold = 0.6;
  static constexpr long kMinArea = 9;

  explicit ToyBackend(std::array<int, 3> strides = {8, 16, 32}) : strides_(strides) {
    if (!(strides[0] >= 1 && strides[0] < strides[1] && strides[1] < strides[2])) {
      fail(ErrorKind::kConfig, "strides must be positive and strictly increasing");
    }
  }

  std::string name() const override { return "toy"; }
  bool supports_features() const override { return true; }
  bool supports_detection() const override { return true; }
  bool differentiable() const override { return true; }
  std::array<int, 3> strides() const override { return strides_; }
  std::span<const double> parameters() const override { return taps_; }

  FeaturePyramid<float> features(const Tensor<float>& x) const override { return run(x); }
  FeaturePyramid<double> features(const Tensor<double>& x) const override { return run(x); }
  Tensor<float> features_vjp(const Tensor<float>& x, const FeaturePyramid<float>& g) const override {
    return vjp(x, g);
  }
  Tensor<double> features_vjp(const Tensor<double>& x, const FeaturePyramid<double>& g) const override {
    return vjp(x, g);
  }

  /// The un-pooled feature stack, (4*C, N, H, W).
  template <typename T>
  Tensor<T> feature_stack(const Tensor<T>& x) const {
    const int h = x.height();
    const int w = x.width();
    const T half = static_cast<T>(taps_[0]);
    const T ninth = static_cast<T>(taps_[1]);
    Tensor<T> stack(x.channels() * kFeaturesPerChannel, x.batch(), h, w);
    for (int c = 0; c < x.channels(); ++c) {
      for (int n = 0; n < x.batch(); ++n) {
        auto in = x.plane(c, n);
        auto id = stack.plane(c * 4 + 0, n);
        auto gx = stack.plane(c * 4 + 1, n);
        auto gy = stack.plane(c * 4 + 2, n);
        auto mean = stack.plane(c * 4 + 3, n);
        auto at = [&](int yy, int xx) {
          yy = std::clamp(yy, 0, h - 1);
          xx = std::clamp(xx, 0, w - 1);
          return in[static_cast<std::size_t>(yy) * w + xx];
        };
        for (int y = 0; y < h; ++y) {
          for (int xx = 0; xx < w; ++xx) {
            const std::size_t i = static_cast<std::size_t>(y) * w + xx;
            id[i] = in[i];
            gx[i] = half * (at(y, xx + 1) - at(y, xx - 1));
            gy[i] = half * (at(y + 1, xx) - at(y - 1, xx));
            T sum = T(0);
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) sum += at(y + dy, xx + dx);
            }
            mean[i] = ninth * sum;
          }
        }
      }
    }
    return stack;
  }

  std::vector<Detection> detect_raw(const Frame& frame) const override {
    if (frame.channels() != 3 || frame.batch() != 1) {
      fail(ErrorKind::kShape, "toy detector expects a single RGB frame");
    }
    const int h = frame.height();
    const int w = frame.width();
    std::vector<Detection> out;
    std::vector<float> dominance(static_cast<std::size_t>(h) * w);
    std::vector<int> label(dominance.size());
    std::vector<int> stack;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          float other = 0.0f;
          for (int k = 0; k < 3; ++k) {
            if (k != c) other = std::max(other, frame(k, y, x));
          }
          dominance[static_cast<std::size_t>(y) * w + x] = frame(c, y, x) - other;
        }
      }
      std::fill(label.begin(), label.end(), 0);
      for (int start = 0; start < h * w; ++start) {
        if (label[start] != 0 || dominance[start] < kDominanceThreshold) continue;
        ComponentStats stats;
        int x0 = w, y0 = h, x1 = -1, y1 = -1;
        label[start] = 1;
        stack.assign(1, start);
        while (!stack.empty()) {
          const int p = stack.back();
          stack.pop_back();
          const int py = p / w;
          const int px = p % w;
          stats.saturation_sum += dominance[p];
          stats.pixel_count += 1;
          x0 = std::min(x0, px);
          x1 = std::max(x1, px);
          y0 = std::min(y0, py);
          y1 = std::max(y1, py);
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int ny = py + dy;
              const int nx = px + dx;
              if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
              const int q = ny * w + nx;
              if (label[q] == 0 && dominance[q] >= kDominanceThreshold) {
                label[q] = 1;
                stack.push_back(q);
              }
            }
          }
        }
        if (stats.pixel_count < kMinArea) continue;
        out.push_back({c, Box{double(x0), double(y0), double(x1 + 1), double(y1 + 1)},
                       toy_detector_confidence(stats)});
      }
    }
    return out;
  }

 private:
  template <typename T>
  FeaturePyramid<T> run(const Tensor<T>& x) const {
    const Tensor<T> stack = feature_stack(x);
    FeaturePyramid<T> pyramid;
    pyramid.strides = strides_;
    for (int k = 0; k < 3; ++k) pyramid.maps[k] = pool(stack, strides_[k]);
    return pyramid;
  }

  template <typename T>
  static Tensor<T> pool(const Tensor<T>& in, int s) {
    const int oh = (in.height() + s - 1) / s;
    const int ow = (in.width() + s - 1) / s;
    Tensor<T> out(in.channels(), in.batch(), oh, ow);
    for (int c = 0; c < in.channels(); ++c) {
      for (int n = 0; n < in.batch(); ++n) {
        for (int oy = 0; oy < oh; ++oy) {
          const int y1 = std::min(in.height(), (oy + 1) * s);
          for (int ox = 0; ox < ow; ++ox) {
            const int x1 = std::min(in.width(), (ox + 1) * s);
            T sum = T(0);
            for (int y = oy * s; y < y1; ++y) {
              for (int xx = ox * s; xx < x1; ++xx) sum += in.at(c, n, y, xx);
            }
            out.at(c, n, oy, ox) = sum / static_cast<T>((y1 - oy * s) * (x1 - ox * s));
          }
        }
      }
    }
    return out;
  }

  template <typename T>
  Tensor<T> vjp(const Tensor<T>& x, const FeaturePyramid<T>& grad) const {
    const int h = x.height();
    const int w = x.width();
    // Adjoint of pooling: spread each pooled gradient evenly over its window.
    Tensor<T> dstack(x.channels() * kFeaturesPerChannel, x.batch(), h, w);
    for (int k = 0; k < 3; ++k) {
      const int s = strides_[k];
      const Tensor<T>& g = grad.maps[k];
      if (g.channels() != dstack.channels() || g.batch() != x.batch() ||
          g.height() != (h + s - 1) / s || g.width() != (w + s - 1) / s) {
        fail(ErrorKind::kShape, "feature gradient does not match pyramid geometry");
      }
      for (int c = 0; c < dstack.channels(); ++c) {
        for (int n = 0; n < x.batch(); ++n) {
          for (int y = 0; y < h; ++y) {
            const int oy = y / s;
            const int ny = std::min(h, (oy + 1) * s) - oy * s;
            for (int xx = 0; xx < w; ++xx) {
              const int ox = xx / s;
              const int nx = std::min(w, (ox + 1) * s) - ox * s;
              dstack.at(c, n, y, xx) += g.at(c, n, oy, ox) / static_cast<T>(ny * nx);
            }
          }
        }
      }
    }
    const T half = static_cast<T>(taps_[0]);
    const T ninth = static_cast<T>(taps_[1]);
    Tensor<T> dx(x.channels(), x.batch(), h, w);
    for (int c = 0; c < x.channels(); ++c) {
      for (int n = 0; n < x.batch(); ++n) {
        auto out = dx.plane(c, n);
        auto gid = dstack.plane(c * 4 + 0, n);
        auto ggx = dstack.plane(c * 4 + 1, n);
        auto ggy = dstack.plane(c * 4 + 2, n);
        auto gmean = dstack.plane(c * 4 + 3, n);
        auto add = [&](int yy, int xx, T v) {
          yy = std::clamp(yy, 0, h - 1);
          xx = std::clamp(xx, 0, w - 1);
          out[static_cast<std::size_t>(yy) * w + xx] += v;
        };
        for (int y = 0; y < h; ++y) {
          for (int xx = 0; xx < w; ++xx) {
            const std::size_t i = static_cast<std::size_t>(y) * w + xx;
            out[i] += gid[i];
            add(y, xx + 1, half * ggx[i]);
            add(y, xx - 1, -half * ggx[i]);
            add(y + 1, xx, half * ggy[i]);
            add(y - 1, xx, -half * ggy[i]);
            const T m = ninth * gmean[i];
            for (int dy = -1; dy <= 1; ++dy) {
              for (int ddx = -1; ddx <= 1; ++ddx) add(y + dy, xx + ddx, m);
            }
          }
        }
      }
    }
    return dx;
  }

  std::array<int, 3> strides_;
  // Central-difference half weight and 3x3 box weight.
  std::array<double, 2> taps_{0.5, 1.0 / 9.0};
};

// ---------------------------------------------------------------------------
// Detection dump files

inline std::string format_detection(const Detection& d) {
  char line[160];
  std::snprintf(line, sizeof(line), "%d %.6f %.6f %.6f %.6f %.6f", d.class_id, d.confidence,
                d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max);
  return line;
}

inline void write_detection_dump(const std::filesystem::path& path,
                                 std::span<const Detection> dets) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIngestion, "cannot write " + path.string());
  for (const auto& d : dets) out << format_detection(d) << '\n';
}

inline std::vector<Detection> read_detection_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIngestion, "cannot open detection dump " + path.string());
  std::vector<Detection> dets;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    Detection d;
    std::string extra;
    if (!(fields >> d.class_id >> d.confidence >> d.box.x_min >> d.box.y_min >> d.box.x_max >>
          d.box.y_max) ||
        (fields >> extra)) {
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(line_no) +
                                  ": expected 'class_id confidence x_min y_min x_max y_max'");
    }
    if (d.class_id < 0 || d.confidence < 0 || d.confidence > 1 || !(d.box.x_min < d.box.x_max) ||
        !(d.box.y_min < d.box.y_max)) {
      fail(ErrorKind::kValidation, path.string() + ":" + std::to_string(line_no) +
                                       ": invalid detection");
    }
    dets.push_back(d);
  }
  return dets;
}

// ---------------------------------------------------------------------------
// External detector

/// Runs an out-of-process detector once per frame. The command template gets
/// {input} (a PNG of the frame) and {output} (where it must write a detection
/// dump). Feature extraction is not available through this adapter.
class ExternalBackend final : public DetectorBackend {
 public:
  ExternalBackend(std::string command_template, std::filesystem::path work_dir)
      : template_(std::move(command_template)), work_dir_(std::move(work_dir)) {
    for (const char* key : {"{input}", "{output}"}) {
      if (template_.find(key) == std::string::npos) {
        fail(ErrorKind::kTemplate, std::string("detector command lacks placeholder ") + key);
      }
    }
  }

  std::string name() const override { return "external"; }
  bool supports_detection() const override { return true; }

  std::vector<Detection> detect_raw(const Frame& frame) const override {
    std::filesystem::create_directories(work_dir_);
    // Unique per call so concurrent callers do not collide.
    static std::atomic<unsigned long> counter{0};
    const std::string stem = "frame_" + std::to_string(::getpid()) + "_" +
                             std::to_string(counter.fetch_add(1));
    const auto input = work_dir_ / (stem + ".png");
    const auto output = work_dir_ / (stem + ".txt");
    write_png(input, frame);
    std::string command = substitute(template_, "input", shell_quote(input.string()));
    command = substitute(command, "output", shell_quote(output.string()));
    const ProcessResult result = run_command(command);
    if (result.exit_code != 0) {
      fail(ErrorKind::kEnvironment, "external detector failed (exit " +
                                        std::to_string(result.exit_code) + "): " + result.output);
    }
    auto dets = read_detection_dump(output);
    std::filesystem::remove(input);
    std::filesystem::remove(output);
    return dets;
  }

 private:
  std::string template_;
  std::filesystem::path work_dir_;
};

/// Parses `toy` or `external:<command template>`.
inline std::shared_ptr<const DetectorBackend> make_backend(
    const std::string& spec, const std::filesystem::path& work_dir = std::filesystem::temp_directory_path()) {
  if (spec == "toy") return std::make_shared<ToyBackend>();
  constexpr std::string_view kExternal = "external:";
  if (spec.rfind(kExternal, 0) == 0) {
    return std::make_shared<ExternalBackend>(spec.substr(kExternal.size()), work_dir / "vcm_detector");
  }
  fail(ErrorKind::kUsage, "unknown backend '" + spec + "' (expected toy or external:<command>)");
}

}  // namespace vcm
