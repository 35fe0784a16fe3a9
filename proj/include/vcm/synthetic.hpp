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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vcm/data.hpp"
#include "vcm/detector.hpp"
#include "vcm/error.hpp"
#include "vcm/image_io.hpp"
#include "vcm/net.hpp"
#include "vcm/tensor.hpp"
#include "vcm/video.hpp"

namespace vcm {

/// Seeded sequences of saturated rectangles on a gray background. The class
/// of a rectangle is its dominant color channel.
struct RectangleSceneConfig {
  int frames = 200;
  int width = 64;
  int height = 64;
  std::uint64_t seed = 0;
  int min_objects = 1;
  int max_objects = 3;
  int min_size = 10;
  int max_size = 20;
  double background_min = 0.42;
  double background_max = 0.47;
  double primary_min = 0.80;
  double primary_max = 1.0;
  double secondary_max = 0.18;
  double fps = 30.0;
};

struct RectangleScene {
  VideoSequence video;
  std::vector<std::vector<GroundTruthObject>> objects;  // per frame
};

inline RectangleScene make_rectangle_scene(const RectangleSceneConfig& cfg) {
  if (cfg.frames < 1 || cfg.width < cfg.max_size || cfg.height < cfg.max_size || cfg.min_size < 3 ||
      cfg.min_size > cfg.max_size || cfg.min_objects < 0 || cfg.min_objects > cfg.max_objects) {
    fail(ErrorKind::kConfig, "invalid rectangle scene configuration");
  }
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); };
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };

  RectangleScene scene;
  scene.video.fps = cfg.fps;
  scene.objects.resize(cfg.frames);
  for (int f = 0; f < cfg.frames; ++f) {
    Frame frame = make_frame(cfg.height, cfg.width);
    const float gray = static_cast<float>(uniform(cfg.background_min, cfg.background_max));
    for (float& v : frame.values()) v = gray;

    const int wanted = pick(cfg.min_objects, cfg.max_objects);
    std::vector<Box> placed;
    for (int attempt = 0; attempt < 50 && static_cast<int>(placed.size()) < wanted; ++attempt) {
      const int w = pick(cfg.min_size, cfg.max_size);
      const int h = pick(cfg.min_size, cfg.max_size);
      const int x = pick(0, cfg.width - w);
      const int y = pick(0, cfg.height - h);
      // One pixel of background between objects keeps components separate.
      const Box box{double(x), double(y), double(x + w), double(y + h)};
      const bool clear = std::none_of(placed.begin(), placed.end(), [&](const Box& o) {
        return box.x_min <= o.x_max && o.x_min <= box.x_max && box.y_min <= o.y_max && o.y_min <= box.y_max;
      });
      if (!clear) continue;
      const int cls = pick(0, 2);
      float color[3];
      for (int c = 0; c < 3; ++c) {
        color[c] = static_cast<float>(c == cls ? uniform(cfg.primary_min, cfg.primary_max)
                                               : uniform(0.0, cfg.secondary_max));
      }
      for (int c = 0; c < 3; ++c) {
        for (int yy = y; yy < y + h; ++yy) {
          for (int xx = x; xx < x + w; ++xx) frame(c, yy, xx) = color[c];
        }
      }
      placed.push_back(box);
      scene.objects[f].push_back({f, cls, box});
    }
    scene.video.frames.push_back(quantize_u8(frame));
  }
  return scene;
}

/// Writes frames as a PNG directory plus one annotation file per frame.
inline void write_rectangle_scene(const std::filesystem::path& frames_dir, const std::filesystem::path& ann_dir,
                                  const std::string& id, const RectangleScene& scene) {
  write_png_dir(frames_dir, scene.video);
  std::filesystem::create_directories(ann_dir);
  const FrameSize size{scene.video.width(), scene.video.height()};
  for (int f = 0; f < scene.video.frame_count(); ++f) {
    write_annotations(ann_dir / annotation_file_name(id, f), scene.objects[f], size);
  }
}

/// Deterministic textured test picture: smooth color ramps, a few soft
/// blobs, edges and mild noise, quantized to 8 bits.
inline Frame natural_image(int height, int width, std::uint64_t seed) {
  if (height < 1 || width < 1) fail(ErrorKind::kUsage, "natural_image needs a positive size");
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); };
  struct Blob {
    double cx, cy, r, amp[3];
  };
  std::vector<Blob> blobs(6);
  for (auto& b : blobs) {
    b.cx = uniform(0, width);
    b.cy = uniform(0, height);
    b.r = uniform(0.08, 0.3) * std::max(width, height);
    for (double& a : b.amp) a = uniform(-0.35, 0.35);
  }
  const double fx = uniform(1.0, 3.0), fy = uniform(1.0, 3.0);
  const double edge = uniform(0.3, 0.7) * width;
  Frame img = make_frame(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = double(x) / width, v = double(y) / height;
      double rgb[3] = {0.35 + 0.3 * u, 0.4 + 0.25 * v, 0.5 - 0.2 * u + 0.1 * v};
      const double texture = 0.08 * std::sin(2 * M_PI * fx * u) * std::cos(2 * M_PI * fy * v);
      for (const auto& b : blobs) {
        const double d2 = ((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) / (b.r * b.r);
        for (int c = 0; c < 3; ++c) rgb[c] += b.amp[c] * std::exp(-d2);
      }
      const double step = x > edge ? 0.12 : 0.0;
      for (int c = 0; c < 3; ++c) {
        img(c, y, x) = static_cast<float>(std::clamp(rgb[c] + texture + step + uniform(-0.02, 0.02), 0.0, 1.0));
      }
    }
  }
  return quantize_u8(img);
}

}  // namespace vcm
