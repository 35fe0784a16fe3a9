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

#include <fstream>
#include <functional>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace vcm {
namespace {

namespace fs = std::filesystem;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kInternal;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

void write_lines(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

TEST(Presets, ClassesAndQps) {
  const auto p = find_preset("BasketballDrill");
  ASSERT_TRUE(p.has_value());
  EXPECT_EQ(p->sequence_class, 'C');
  EXPECT_EQ(p->width, 832);
  EXPECT_FALSE(find_preset("Nope").has_value());
  EXPECT_EQ(qp_preset('A'), (std::vector<int>{27, 32, 37, 42, 47}));
  EXPECT_EQ(qp_preset('B'), (std::vector<int>{37, 42, 47}));
  EXPECT_EQ(training_qps().size(), 5u);
}

TEST(Annotations, NormalizedToPixelsAndBack) {
  testing::TempDir dir("ann");
  const auto path = dir / "a.txt";
  write_lines(path, "1 0.5 0.25 0.5 0.25\n\n0 0.1 0.1 0.2 0.2\n");
  const auto objs = load_annotations(path, {200, 100}, 4);
  ASSERT_EQ(objs.size(), 2u);
  EXPECT_EQ(objs[0].class_id, 1);
  EXPECT_EQ(objs[0].frame_index, 4);
  EXPECT_EQ(objs[0].box, (Box{50, 12.5, 150, 37.5}));
  EXPECT_EQ(objs[1].box, (Box{0, 0, 40, 20}));
  write_annotations(dir / "b.txt", objs, {200, 100});
  EXPECT_EQ(load_annotations(dir / "b.txt", {200, 100}, 4), objs);
}

TEST(Annotations, ClipsToFrame) {
  testing::TempDir dir("ann");
  write_lines(dir / "a.txt", "0 0.95 0.5 0.2 0.2\n");
  const auto objs = load_annotations(dir / "a.txt", {100, 100});
  EXPECT_EQ(objs[0].box, (Box{85, 40, 100, 60}));
}

TEST(Annotations, ErrorsNameFileAndLine) {
  testing::TempDir dir("ann");
  write_lines(dir / "bad.txt", "0 0.5 0.5 0.1 0.1\n0 0.5 0.5\n");
  EXPECT_EQ(kind_of([&] { load_annotations(dir / "bad.txt", {10, 10}); }), ErrorKind::kParse);
  EXPECT_NE(message_of([&] { load_annotations(dir / "bad.txt", {10, 10}); }).find("bad.txt:2"), std::string::npos);
  write_lines(dir / "range.txt", "0 1.5 0.5 0.1 0.1\n");
  EXPECT_EQ(kind_of([&] { load_annotations(dir / "range.txt", {10, 10}); }), ErrorKind::kValidation);
  write_lines(dir / "neg.txt", "-1 0.5 0.5 0.1 0.1\n");
  EXPECT_EQ(kind_of([&] { load_annotations(dir / "neg.txt", {10, 10}); }), ErrorKind::kValidation);
  EXPECT_EQ(kind_of([&] { load_annotations(dir / "none.txt", {10, 10}); }), ErrorKind::kIngestion);
}

TEST(Annotations, SequenceLoaderToleratesMissingFrames) {
  testing::TempDir dir("ann");
  write_lines(dir / annotation_file_name("s", 1), "2 0.5 0.5 0.5 0.5\n");
  EXPECT_EQ(annotation_file_name("s", 1), "s_000001.txt");
  const auto all = load_sequence_annotations(dir.path(), "s", 3, {8, 8});
  ASSERT_EQ(all.size(), 3u);
  EXPECT_TRUE(all[0].empty());
  EXPECT_EQ(all[1][0].frame_index, 1);
  EXPECT_EQ(all[1][0].class_id, 2);
}

VideoSequence random_video(int frames, int h, int w, std::uint64_t seed, double fps = 25.0) {
  VideoSequence seq;
  seq.fps = fps;
  for (int i = 0; i < frames; ++i) seq.frames.push_back(testing::random_u8_frame(h, w, seed + i));
  return seq;
}

TEST(SequenceIo, PngDirectoryIsLosslessAndKeepsFps) {
  testing::TempDir dir("seq");
  const auto seq = random_video(3, 6, 10, 1, 24.0);
  write_sequence(dir / "png", seq);
  const auto back = load_sequence(dir / "png");
  EXPECT_EQ(back.fps, 24.0);
  ASSERT_EQ(back.frame_count(), 3);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(back.frames[i], seq.frames[i]);
}

TEST(SequenceIo, Y4mMatchesYuvRoundTripAndKeepsFps) {
  testing::TempDir dir("seq");
  const auto seq = random_video(2, 8, 12, 5, 29.97);
  write_sequence(dir / "v.y4m", seq);
  const SequenceReader reader(dir / "v.y4m");
  EXPECT_EQ(reader.frame_count(), 2);
  EXPECT_EQ(reader.width(), 12);
  EXPECT_NEAR(reader.fps(), 29.97, 1e-9);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(reader.read(i), yuv420_to_rgb(rgb_to_yuv420(seq.frames[i])));
  const auto part = reader.read_all(1, 1);
  EXPECT_EQ(part.frames[0], reader.read(1));
  EXPECT_EQ(kind_of([&] { reader.read(2); }), ErrorKind::kUsage);
}

TEST(SequenceIo, BadInputs) {
  testing::TempDir dir("seq");
  EXPECT_EQ(kind_of([&] { SequenceReader r(dir / "missing.y4m"); }), ErrorKind::kIngestion);
  write_lines(dir / "junk.y4m", "NOTY4M W2 H2\n");
  EXPECT_EQ(kind_of([&] { SequenceReader r(dir / "junk.y4m"); }), ErrorKind::kFormat);
  write_lines(dir / "short.y4m", "YUV4MPEG2 W4 H4 F30:1 C420jpeg\nFRAME\nabc");
  EXPECT_EQ(kind_of([&] { SequenceReader r(dir / "short.y4m"); }), ErrorKind::kFormat);
  fs::create_directories(dir / "mixed");
  write_png(dir / "mixed" / "a.png", testing::random_u8_frame(4, 4, 1));
  write_png(dir / "mixed" / "b.png", testing::random_u8_frame(4, 6, 1));
  const SequenceReader mixed(dir / "mixed");
  EXPECT_EQ(kind_of([&] { mixed.read(1); }), ErrorKind::kFormat);
}

TEST(Manifest, RoundTripWithRelativePaths) {
  testing::TempDir dir("man");
  write_sequence(dir / "raw", random_video(2, 4, 4, 1));
  write_sequence(dir / "dec37", random_video(2, 4, 4, 9));
  fs::create_directories(dir / "ann");
  write_lines(dir / "m.json", R"({"sequences": [{"id": "s", "raw": "raw", "fps": 25, "frames": 2,
    "class": "C", "annotations": "ann", "decoded": {"37": {"path": "dec37", "bitstream_bytes": 123}}}]})");
  const auto m = load_manifest(dir / "m.json");
  ASSERT_EQ(m.entries.size(), 1u);
  const auto& e = m.find("s");
  EXPECT_EQ(e.raw, dir / "raw");
  EXPECT_EQ(e.decoded.at(37).bitstream_bytes, 123u);
  save_manifest(dir / "copy.json", m);
  const auto again = load_manifest(dir / "copy.json");
  EXPECT_EQ(again.entries[0].decoded.at(37).path, dir / "dec37");
  EXPECT_EQ(again.entries[0].sequence_class, "C");
  std::ifstream in(dir / "copy.json");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text.find(dir.path().string()), std::string::npos);
  EXPECT_EQ(kind_of([&] { m.find("zzz"); }), ErrorKind::kUsage);
}

TEST(Manifest, ReportsEveryProblemAtOnce) {
  testing::TempDir dir("man");
  write_sequence(dir / "raw", random_video(2, 4, 4, 1));
  write_sequence(dir / "short", random_video(1, 4, 4, 1));
  write_lines(dir / "m.json", R"({"sequences": [
    {"id": "a", "raw": "nothere"},
    {"id": "b", "raw": "raw", "colour": 1},
    {"id": "c", "raw": "raw", "decoded": {"37": "short"}},
    {"id": "d", "raw": "raw", "decoded": {"qp9": "raw"}},
    {"id": "e", "raw": "raw", "frames": 5}], "extra": 0})");
  const std::string msg = message_of([&] { load_manifest(dir / "m.json"); });
  EXPECT_NE(msg.find("nothere"), std::string::npos);
  EXPECT_NE(msg.find("unknown key 'colour'"), std::string::npos);
  EXPECT_NE(msg.find("does not match"), std::string::npos);
  EXPECT_NE(msg.find("'qp9'"), std::string::npos);
  EXPECT_NE(msg.find("declares 5 frames"), std::string::npos);
  EXPECT_NE(msg.find("unknown top-level key 'extra'"), std::string::npos);
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "m.json"); }), ErrorKind::kIngestion);
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "none.json"); }), ErrorKind::kIngestion);
  write_lines(dir / "bad.json", "{");
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "bad.json"); }), ErrorKind::kIngestion);
}

TEST(Patches, CoLocatedAndDeterministic) {
  const auto raw = random_video(3, 20, 24, 1);
  const auto dec = random_video(3, 20, 24, 50);
  const auto a = make_patch_pairs(raw, dec, 8, 10, 42);
  const auto b = make_patch_pairs(raw, dec, 8, 10, 42);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].raw_patch, crop(raw.frames[a[i].frame], a[i].y, a[i].x, 8, 8));
    EXPECT_EQ(a[i].decoded_patch, crop(dec.frames[a[i].frame], a[i].y, a[i].x, 8, 8));
    EXPECT_EQ(a[i].decoded_patch, b[i].decoded_patch);
    EXPECT_LE(a[i].x + 8, 24);
    EXPECT_LE(a[i].y + 8, 20);
  }
  const auto c = make_patch_pairs(raw, dec, 8, 10, 43);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= !(a[i].raw_patch == c[i].raw_patch);
  EXPECT_TRUE(differs);
}

TEST(Patches, RejectsMisalignedOrOversized) {
  const auto raw = random_video(3, 20, 24, 1);
  EXPECT_EQ(kind_of([&] { make_patch_pairs(raw, random_video(2, 20, 24, 1), 8, 1, 0); }), ErrorKind::kAlignment);
  EXPECT_EQ(kind_of([&] { make_patch_pairs(raw, random_video(3, 20, 22, 1), 8, 1, 0); }), ErrorKind::kAlignment);
  EXPECT_EQ(kind_of([&] { make_patch_pairs(raw, raw, 21, 1, 0); }), ErrorKind::kUsage);
}

TEST(Synthetic, SceneIsDeterministicAndAnnotated) {
  RectangleSceneConfig cfg;
  cfg.frames = 4;
  cfg.seed = 3;
  const auto a = make_rectangle_scene(cfg);
  const auto b = make_rectangle_scene(cfg);
  for (int f = 0; f < 4; ++f) {
    EXPECT_EQ(a.video.frames[f], b.video.frames[f]);
    EXPECT_EQ(a.objects[f], b.objects[f]);
    ASSERT_FALSE(a.objects[f].empty());
    for (const auto& o : a.objects[f]) {
      const int cx = static_cast<int>(o.box.x_min + o.box.x_max) / 2;
      const int cy = static_cast<int>(o.box.y_min + o.box.y_max) / 2;
      EXPECT_GE(a.video.frames[f](o.class_id, cy, cx), 0.8f - 1e-6f);
    }
  }
  cfg.width = 8;
  EXPECT_EQ(kind_of([&] { make_rectangle_scene(cfg); }), ErrorKind::kConfig);
}

TEST(Synthetic, ToyDetectorFindsCleanRectangles) {
  RectangleSceneConfig cfg;
  cfg.frames = 10;
  cfg.seed = 11;
  const auto scene = make_rectangle_scene(cfg);
  auto backend = make_backend("toy");
  std::vector<FrameResults> frames;
  for (int f = 0; f < cfg.frames; ++f) {
    frames.push_back({detect(*backend, scene.video.frames[f], 0.0), scene.objects[f]});
  }
  EXPECT_EQ(score_sequence(frames).map_value, 100.0);
}

TEST(Synthetic, NaturalImageIsDeterministicAndTextured) {
  const Frame a = natural_image(32, 48, 5);
  EXPECT_EQ(a, natural_image(32, 48, 5));
  EXPECT_FALSE(a == natural_image(32, 48, 6));
  float lo = 1, hi = 0;
  for (float v : a.values()) lo = std::min(lo, v), hi = std::max(hi, v);
  EXPECT_GT(hi - lo, 0.5f);
}

}  // namespace
}  // namespace vcm
