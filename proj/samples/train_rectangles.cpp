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

// Trains a small network on synthetic rectangles compressed with the mock
// codec and prints detection accuracy before and after post-processing.
//
//   sample_train_rectangles [steps=300] [lr=1e-3]

#include <cstdio>
#include <cstdlib>
#include <vector>

#include "vcm.hpp"

namespace {

double scene_map(const vcm::VideoSequence& video, const vcm::RectangleScene& scene,
                 const vcm::DetectorBackend& backend) {
  std::vector<vcm::FrameResults> frames;
  for (int i = 0; i < video.frame_count(); ++i) {
    frames.push_back({vcm::detect(backend, video.frames[i], 0.0), scene.objects[i]});
  }
  return vcm::score_sequence(frames).map_value;
}

}  // namespace

int main(int argc, char** argv) {
  const int steps = argc > 1 ? std::atoi(argv[1]) : 300;
  const double lr = argc > 2 ? std::atof(argv[2]) : 1e-3;

  vcm::RectangleSceneConfig cfg;
  cfg.frames = 60;
  cfg.seed = 11;
  const auto train_scene = vcm::make_rectangle_scene(cfg);
  cfg.seed = 12;
  const auto test_scene = vcm::make_rectangle_scene(cfg);
  const auto train_decoded = vcm::mock_codec(train_scene.video, 40).decoded;
  const auto test_decoded = vcm::mock_codec(test_scene.video, 40).decoded;

  vcm::ToyBackend backend;
  vcm::TrainConfig tc;
  tc.net = {3, 8, 4, 2, 5, 3, 0.2, 0.2};
  tc.lr = lr;
  vcm::TrainRun<float> run(vcm::build_network<float>(tc.net, 1), tc);
  std::printf("parameters: %zu\n", run.net.parameter_count());

  for (int step = 1; step <= steps; ++step) {
    const auto pairs = vcm::make_patch_pairs(train_scene.video, train_decoded, 32, 4, 1000 + step);
    const float loss = vcm::train_step(run, pairs, backend);
    if (step % 50 == 0) std::printf("step %4d  loss %.6g\n", step, loss);
  }

  vcm::VideoSequence processed = test_decoded;
  for (auto& f : processed.frames) f = vcm::forward(run.net, f);
  std::printf("mAP raw %.2f  decoded %.2f  postprocessed %.2f\n", scene_map(test_scene.video, test_scene, backend),
              scene_map(test_decoded, test_scene, backend), scene_map(processed, test_scene, backend));
  return 0;
}
