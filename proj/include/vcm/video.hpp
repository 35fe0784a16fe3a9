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

#include <string>
#include <vector>

#include "vcm/error.hpp"
#include "vcm/tensor.hpp"

namespace vcm {

/// Ordered RGB frames sharing one size, with timing and color metadata.
struct VideoSequence {
  std::vector<Frame> frames;
  double fps = 30.0;
  std::string color_space = "bt709-limited";

  int frame_count() const { return static_cast<int>(frames.size()); }
  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }

  /// Throws a format error if frames disagree in size.
  void check_consistent() const {
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (frames[i].height() != height() || frames[i].width() != width() ||
          frames[i].channels() != frames.front().channels()) {
        fail(ErrorKind::kFormat, "frame " + std::to_string(i) + " is " +
                                     std::to_string(frames[i].width()) + "x" +
                                     std::to_string(frames[i].height()) + ", expected " +
                                     std::to_string(width()) + "x" + std::to_string(height()));
      }
    }
  }
};

}  // namespace vcm
