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

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vcm/error.hpp"
#include "vcm/tensor.hpp"

namespace vcm {

/// Maps a [0,1] sample to the 8-bit grid.
inline std::uint8_t to_u8(float v) {
  const float clamped = std::min(1.0f, std::max(0.0f, v));
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

inline float from_u8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

/// Reads an 8-bit PNG as an RGB frame (gray/alpha inputs are converted).
inline Frame read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(ErrorKind::kIngestion, "cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    fail(ErrorKind::kIngestion, "cannot decode PNG " + path.string() + ": " + message);
  }
  const int h = static_cast<int>(image.height);
  const int w = static_cast<int>(image.width);
  Frame frame = make_frame(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* px = &pixels[(static_cast<std::size_t>(y) * w + x) * 3];
      for (int c = 0; c < 3; ++c) frame(c, y, x) = from_u8(px[c]);
    }
  }
  return frame;
}

inline void write_png(const std::filesystem::path& path, const Frame& frame) {
  if (frame.channels() != 3 || frame.batch() != 1) {
    fail(ErrorKind::kShape, "write_png expects an RGB frame");
  }
  const int h = frame.height();
  const int w = frame.width();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_u8(frame(c, y, x));
      }
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    fail(ErrorKind::kIngestion, "cannot write PNG " + path.string() + ": " + image.message);
  }
}

/// Snaps a frame to the 8-bit grid it would have after a PNG round trip.
inline Frame quantize_u8(const Frame& frame) {
  Frame out = frame;
  for (float& v : out.values()) v = from_u8(to_u8(v));
  return out;
}

}  // namespace vcm
