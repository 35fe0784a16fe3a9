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

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace vcm {
namespace {

using testing::random_tensor;
using testing::TempDir;

Frame gray_frame(int h, int w, float v = 0.45f) { return make_frame(h, w, v); }

void paint(Frame& f, int x0, int y0, int x1, int y1, float r, float g, float b) {
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      f(0, y, x) = r;
      f(1, y, x) = g;
      f(2, y, x) = b;
    }
  }
}

TEST(ToyBackbone, PyramidShapesUseCeilingDivision) {
  ToyBackend be;
  const auto p = extract_features(be, random_tensor<float>(3, 2, 64, 64, 1));
  EXPECT_EQ(p.maps[0].shape_string(), "(12,2,8,8)");
  EXPECT_EQ(p.maps[1].shape_string(), "(12,2,4,4)");
  EXPECT_EQ(p.maps[2].shape_string(), "(12,2,2,2)");
  const auto q = extract_features(be, random_tensor<float>(3, 1, 20, 33, 1));
  EXPECT_EQ(q.maps[0].shape_string(), "(12,1,3,5)");
  EXPECT_EQ(q.maps[1].shape_string(), "(12,1,2,3)");
  EXPECT_EQ(q.maps[2].shape_string(), "(12,1,1,2)");
  EXPECT_EQ(p.strides, (std::array<int, 3>{8, 16, 32}));
}

TEST(ToyBackbone, PooledIntensityIsBlockMean) {
  ToyBackend be;
  const auto x = random_tensor<double>(3, 1, 20, 20, 4);
  const auto p = extract_features(be, x);
  // Channel 4 is the intensity of input channel 1; block (1,2) at stride 8
  // covers rows 8..15, columns 16..19 (partial block).
  double sum = 0;
  for (int y = 8; y < 16; ++y) {
    for (int xx = 16; xx < 20; ++xx) sum += x(1, y, xx);
  }
  EXPECT_NEAR(p.maps[0](4, 1, 2), sum / 32.0, 1e-12);
  // Horizontal central difference of a ramp is the slope everywhere inside.
  Tensor<double> ramp(3, 1, 16, 16);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 16; ++y) {
      for (int xx = 0; xx < 16; ++xx) ramp(c, y, xx) = 0.01 * xx;
    }
  }
  const auto stack = be.feature_stack(ramp);
  EXPECT_NEAR(stack(1, 5, 5), 0.01, 1e-12);
  EXPECT_NEAR(stack(2, 5, 5), 0.0, 1e-12);
  EXPECT_NEAR(stack(3, 5, 5), 0.05, 1e-12);
  EXPECT_NEAR(stack(1, 5, 0), 0.005, 1e-12);  // replicate edge
}

TEST(ToyBackbone, FeaturesScaleLinearly) {
  ToyBackend be;
  const auto x = random_tensor<double>(3, 1, 24, 24, 5);
  const auto base = extract_features(be, x);
  for (double a : {0.5, 2.0}) {
    Tensor<double> ax = x;
    for (double& v : ax.values()) v *= a;
    const auto scaled = extract_features(be, ax);
    for (int k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < base.maps[k].size(); ++i) {
        EXPECT_NEAR(scaled.maps[k].values()[i], a * base.maps[k].values()[i], 1e-12);
      }
    }
  }
}

TEST(ToyBackbone, VjpIsTheAdjointOfTheFeatureMap) {
  // Features are linear, so <vjp(g), d> = <g, features(d)> for any d.
  ToyBackend be;
  const auto x = random_tensor<double>(3, 2, 19, 13, 6);
  const auto d = random_tensor<double>(3, 2, 19, 13, 7, -1, 1);
  auto g = extract_features(be, x);
  std::mt19937_64 rng(8);
  for (auto& m : g.maps) {
    for (double& v : m.values()) v = unit_uniform(rng) - 0.5;
  }
  const auto vjp = be.features_vjp(x, g);
  const auto fd = extract_features(be, d);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < vjp.size(); ++i) lhs += vjp.values()[i] * d.values()[i];
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < fd.maps[k].size(); ++i) rhs += g.maps[k].values()[i] * fd.maps[k].values()[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(rhs)));
}

TEST(ToyBackbone, IsFrozenAndDeterministic) {
  ToyBackend be;
  const std::vector<double> before(be.parameters().begin(), be.parameters().end());
  const auto x = random_tensor<float>(3, 1, 16, 16, 1);
  const auto a = extract_features(be, x);
  const auto b = extract_features(be, x);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(a.maps[k], b.maps[k]);
  EXPECT_EQ(std::vector<double>(be.parameters().begin(), be.parameters().end()), before);
  EXPECT_THROW(ToyBackend({8, 8, 32}), Error);
}

TEST(ToyDetector, FindsSaturatedRectangleWithExactBox) {
  ToyBackend be;
  Frame f = gray_frame(40, 50);
  paint(f, 5, 7, 20, 17, 0.95f, 0.1f, 0.05f);   // red
  paint(f, 30, 20, 42, 35, 0.1f, 0.15f, 0.9f);  // blue
  const auto dets = detect(be, f, 0.25);
  ASSERT_EQ(dets.size(), 2u);
  // Sorted by confidence: red dominance 0.85, blue 0.75.
  EXPECT_EQ(dets[0].class_id, 0);
  EXPECT_EQ(dets[0].box, (Box{5, 7, 20, 17}));
  EXPECT_NEAR(dets[0].confidence, 0.85, 1e-6);
  EXPECT_EQ(dets[1].class_id, 2);
  EXPECT_EQ(dets[1].box, (Box{30, 20, 42, 35}));
  EXPECT_NEAR(dets[1].confidence, 0.75, 1e-6);
}

TEST(ToyDetector, ConfidenceIsMonotoneInSaturation) {
  ToyBackend be;
  double last = -1;
  for (float r : {0.7f, 0.8f, 0.9f, 1.0f}) {
    Frame f = gray_frame(20, 20);
    paint(f, 2, 2, 12, 12, r, 0.05f, 0.05f);
    const auto dets = detect(be, f, 0.0);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_GT(dets[0].confidence, last);
    last = dets[0].confidence;
  }
  EXPECT_EQ(toy_detector_confidence({30.0, 10}), 1.0);
  EXPECT_THROW(toy_detector_confidence({0.0, 0}), Error);
}

TEST(ToyDetector, ThresholdsDominanceAreaAndConfidence) {
  ToyBackend be;
  Frame f = gray_frame(30, 30);
  paint(f, 1, 1, 3, 5, 1.0f, 0.0f, 0.0f);        // 8 px: too small
  paint(f, 10, 10, 20, 20, 0.75f, 0.2f, 0.2f);   // dominance 0.55 < 0.6
  paint(f, 22, 22, 28, 28, 0.0f, 0.65f, 0.0f);   // dominance 0.65
  auto dets = detect(be, f, 0.0);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].class_id, 1);
  EXPECT_TRUE(detect(be, f, 0.7).empty());
  EXPECT_TRUE(detect(be, gray_frame(16, 16), 0.0).empty());
  try {
    detect(be, f, 1.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUsage);
  }
}

TEST(ToyDetector, DiagonalNeighboursJoinOneComponent) {
  ToyBackend be;
  Frame f = gray_frame(20, 20);
  paint(f, 2, 2, 6, 6, 1, 0, 0);
  paint(f, 6, 6, 10, 10, 1, 0, 0);
  const auto dets = detect(be, f, 0.0);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].box, (Box{2, 2, 10, 10}));
}

TEST(DetectionDump, RoundTripsAndReportsLineNumbers) {
  TempDir dir("dump");
  const std::vector<Detection> dets{{0, {1.5, 2, 10, 12.25}, 0.9}, {2, {0, 0, 4, 4}, 0.333333}};
  write_detection_dump(dir / "a.txt", dets);
  std::ifstream in(dir / "a.txt");
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "0 0.900000 1.500000 2.000000 10.000000 12.250000");
  EXPECT_EQ(read_detection_dump(dir / "a.txt"), dets);

  std::ofstream(dir / "bad.txt") << "0 0.5 1 1 2 2\n0 0.5 1 1\n";
  try {
    read_detection_dump(dir / "bad.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    EXPECT_NE(std::string(e.what()).find("bad.txt:2"), std::string::npos);
  }
  std::ofstream(dir / "inv.txt") << "0 1.5 1 1 2 2\n";
  EXPECT_THROW(read_detection_dump(dir / "inv.txt"), Error);
}

TEST(ExternalBackend, RunsCommandAndParsesDump) {
  TempDir dir("ext");
  const auto script = dir / "det.sh";
  std::ofstream(script) << "#!/bin/sh\ntest -s \"$1\" || exit 3\necho '1 0.750000 2 3 8 9' > \"$2\"\n";
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  const auto be = make_backend("external:" + script.string() + " {input} {output}", dir.path());
  EXPECT_FALSE(be->supports_features());
  const auto dets = detect(*be, gray_frame(8, 8), 0.5);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].class_id, 1);
  EXPECT_EQ(dets[0].box, (Box{2, 3, 8, 9}));
  try {
    extract_features(*be, random_tensor<float>(3, 1, 8, 8, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCapability);
  }
  try {
    make_backend("external:detect {input}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTemplate);
  }
  const auto failing = make_backend("external:false {input} {output}", dir.path());
  EXPECT_THROW(detect(*failing, gray_frame(8, 8), 0.5), Error);
  EXPECT_THROW(make_backend("yolo"), Error);
}

}  // namespace
}  // namespace vcm
