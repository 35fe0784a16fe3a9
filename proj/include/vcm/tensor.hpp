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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vcm/error.hpp"

namespace vcm {

/// Dense channel-major tensor with shape (channels, batch, height, width).
///
/// Channel-major layout lets a whole batch go through one im2col/GEMM per
/// convolution: each channel row holds batch*height*width contiguous values.
/// A single image is a tensor with batch == 1.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int batch, int height, int width, T fill = T(0))
      : channels_(channels), batch_(batch), height_(height), width_(width) {
    if (channels < 0 || batch < 0 || height < 0 || width < 0) {
      fail(ErrorKind::kShape, "negative tensor dimension");
    }
    data_.assign(static_cast<std::size_t>(channels) * batch * height * width,
                 fill);
  }

  int channels() const { return channels_; }
  int batch() const { return batch_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height_) * width_;
  }
  /// Elements per channel row (batch * height * width).
  std::size_t row_size() const { return plane_size() * batch_; }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::span<T> channel(int c) {
    return {data_.data() + c * row_size(), row_size()};
  }
  std::span<const T> channel(int c) const {
    return {data_.data() + c * row_size(), row_size()};
  }
  std::span<T> plane(int c, int n) {
    return {data_.data() + c * row_size() + n * plane_size(), plane_size()};
  }
  std::span<const T> plane(int c, int n) const {
    return {data_.data() + c * row_size() + n * plane_size(), plane_size()};
  }

  T& at(int c, int n, int y, int x) {
    return data_[index(c, n, y, x)];
  }
  const T& at(int c, int n, int y, int x) const {
    return data_[index(c, n, y, x)];
  }
  // Single-image accessors (batch index 0).
  T& operator()(int c, int y, int x) { return data_[index(c, 0, y, x)]; }
  const T& operator()(int c, int y, int x) const {
    return data_[index(c, 0, y, x)];
  }

  bool same_shape(const Tensor& other) const {
    return channels_ == other.channels_ && batch_ == other.batch_ &&
           height_ == other.height_ && width_ == other.width_;
  }

  std::string shape_string() const {
    return "(" + std::to_string(channels_) + "," + std::to_string(batch_) +
           "," + std::to_string(height_) + "," + std::to_string(width_) + ")";
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  std::size_t index(int c, int n, int y, int x) const {
    return ((static_cast<std::size_t>(c) * batch_ + n) * height_ + y) *
               width_ + x;
  }

  int channels_ = 0;
  int batch_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// A decoded or raw video frame: 3-channel, batch 1, values in [0,1].
using Frame = Tensor<float>;

template <typename T>
Tensor<T> make_image(int channels, int height, int width, T fill = T(0)) {
  return Tensor<T>(channels, 1, height, width, fill);
}

inline Frame make_frame(int height, int width, float fill = 0.0f) {
  return Frame(3, 1, height, width, fill);
}

template <typename T>
void validate_frame(const Tensor<T>& frame, int expected_channels = 3) {
  if (frame.height() < 1 || frame.width() < 1 || frame.batch() != 1) {
    fail(ErrorKind::kShape, "frame must be a single image with H,W >= 1, got " +
                                frame.shape_string());
  }
  if (frame.channels() != expected_channels) {
    fail(ErrorKind::kShape, "frame has " + std::to_string(frame.channels()) +
                                " channels, expected " +
                                std::to_string(expected_channels));
  }
  for (T v : frame.values()) {
    if (!(v >= T(0) && v <= T(1))) {
      fail(ErrorKind::kValidation, "frame value outside [0,1]");
    }
  }
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& in) {
  Tensor<To> out(in.channels(), in.batch(), in.height(), in.width());
  std::transform(in.values().begin(), in.values().end(), out.values().begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

/// Copies batch item `n` out of a batched tensor.
template <typename T>
Tensor<T> batch_item(const Tensor<T>& in, int n) {
  Tensor<T> out(in.channels(), 1, in.height(), in.width());
  for (int c = 0; c < in.channels(); ++c) {
    auto src = in.plane(c, n);
    std::copy(src.begin(), src.end(), out.plane(c, 0).begin());
  }
  return out;
}

/// Stacks equally shaped single images along the batch axis.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
  if (items.empty()) fail(ErrorKind::kUsage, "cannot stack an empty batch");
  const auto& first = items.front();
  Tensor<T> out(first.channels(), static_cast<int>(items.size()),
                first.height(), first.width());
  for (std::size_t n = 0; n < items.size(); ++n) {
    const auto& item = items[n];
    if (item.channels() != first.channels() || item.batch() != 1 ||
        item.height() != first.height() || item.width() != first.width()) {
      fail(ErrorKind::kShape, "batch items differ in shape: " +
                                  first.shape_string() + " vs " +
                                  item.shape_string());
    }
    for (int c = 0; c < first.channels(); ++c) {
      auto src = item.plane(c, 0);
      std::copy(src.begin(), src.end(),
                out.plane(c, static_cast<int>(n)).begin());
    }
  }
  return out;
}

/// Crops a window out of a single image.
template <typename T>
Tensor<T> crop(const Tensor<T>& in, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > in.height() ||
      x0 + width > in.width()) {
    fail(ErrorKind::kShape, "crop window outside image");
  }
  Tensor<T> out(in.channels(), in.batch(), height, width);
  for (int c = 0; c < in.channels(); ++c) {
    for (int n = 0; n < in.batch(); ++n) {
      for (int y = 0; y < height; ++y) {
        const T* src = &in.at(c, n, y0 + y, x0);
        std::copy(src, src + width, &out.at(c, n, y, 0));
      }
    }
  }
  return out;
}

}  // namespace vcm
