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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcm/codec.hpp"
#include "vcm/detector.hpp"
#include "vcm/error.hpp"
#include "vcm/image_io.hpp"
#include "vcm/video.hpp"

namespace vcm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Reference sequence presets

struct SequencePreset {
  const char* name;
  char sequence_class;
  int width;
  int height;
  int frames;
};

inline constexpr SequencePreset kSequencePresets[] = {
    {"PeopleOnStreet", 'A', 2560, 1600, 150}, {"Traffic", 'A', 2560, 1600, 150},
    {"BQTerrace", 'B', 1920, 1080, 600},      {"BasketballDrive", 'B', 1920, 1080, 500},
    {"ParkScene", 'B', 1920, 1080, 240},      {"BQMall", 'C', 832, 480, 600},
    {"BasketballDrill", 'C', 832, 480, 500},  {"PartyScene", 'C', 832, 480, 500},
    {"RaceHorsesC", 'C', 832, 480, 300},
};

inline std::optional<SequencePreset> find_preset(const std::string& name) {
  for (const auto& p : kSequencePresets) {
    if (name == p.name) return p;
  }
  return std::nullopt;
}

/// QP sweep per sequence class: five points for class A, three otherwise.
inline std::vector<int> qp_preset(char sequence_class) {
  if (sequence_class == 'A') return {27, 32, 37, 42, 47};
  return {37, 42, 47};
}

inline const std::vector<int>& training_qps() {
  static const std::vector<int> qps{27, 32, 37, 42, 47};
  return qps;
}

// ---------------------------------------------------------------------------
// Annotations: one file per frame, lines "class_id cx cy w h" normalized.

struct FrameSize {
  int width = 0;
  int height = 0;
};

inline std::string annotation_file_name(const std::string& sequence_id, int frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%06d.txt", frame_index);
  return sequence_id + buf;
}

inline std::vector<GroundTruthObject> load_annotations(const fs::path& path, FrameSize size,
                                                       int frame_index = 0) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIngestion, "cannot open annotation file " + path.string());
  std::vector<GroundTruthObject> objects;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::istringstream fields(line);
    int cls = 0;
    double cx = 0, cy = 0, w = 0, h = 0;
    std::string extra;
    if (!(fields >> cls >> cx >> cy >> w >> h) || (fields >> extra)) {
      fail(ErrorKind::kParse, where + ": expected 'class_id cx cy w h'");
    }
    if (cls < 0) fail(ErrorKind::kValidation, where + ": negative class id");
    for (double v : {cx, cy, w, h}) {
      if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::kValidation, where + ": normalized value outside [0,1]");
    }
    Box box{(cx - w / 2) * size.width, (cy - h / 2) * size.height, (cx + w / 2) * size.width,
            (cy + h / 2) * size.height};
    box.x_min = std::max(0.0, box.x_min);
    box.y_min = std::max(0.0, box.y_min);
    box.x_max = std::min<double>(size.width, box.x_max);
    box.y_max = std::min<double>(size.height, box.y_max);
    if (!(box.x_min < box.x_max && box.y_min < box.y_max)) {
      fail(ErrorKind::kValidation, where + ": box has no area inside the frame");
    }
    objects.push_back({frame_index, cls, box});
  }
  return objects;
}

inline std::string format_annotation(const GroundTruthObject& obj, FrameSize size) {
  const double w = obj.box.width() / size.width;
  const double h = obj.box.height() / size.height;
  const double cx = (obj.box.x_min + obj.box.x_max) / 2 / size.width;
  const double cy = (obj.box.y_min + obj.box.y_max) / 2 / size.height;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f", obj.class_id, cx, cy, w, h);
  return buf;
}

inline void write_annotations(const fs::path& path, std::span<const GroundTruthObject> objects, FrameSize size) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIngestion, "cannot write " + path.string());
  for (const auto& o : objects) out << format_annotation(o, size) << '\n';
}

/// Annotations for frames [0, frame_count); frames without a file have none.
inline std::vector<std::vector<GroundTruthObject>> load_sequence_annotations(const fs::path& dir,
                                                                             const std::string& sequence_id,
                                                                             int frame_count, FrameSize size,
                                                                             int first_frame = 0) {
  if (!fs::is_directory(dir)) fail(ErrorKind::kIngestion, "annotation directory not found: " + dir.string());
  std::vector<std::vector<GroundTruthObject>> out(frame_count);
  for (int i = 0; i < frame_count; ++i) {
    const auto path = dir / annotation_file_name(sequence_id, first_frame + i);
    if (fs::exists(path)) out[i] = load_annotations(path, size, i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence files: Y4M or a directory of PNG frames with an fps.txt sidecar.

/// Random-access reader so long or large sequences are never fully resident.
class SequenceReader {
 public:
  SequenceReader(const fs::path& path, double fallback_fps = 30.0) : path_(path), fps_(fallback_fps) {
    if (fs::is_directory(path)) {
      open_png_dir();
    } else if (fs::is_regular_file(path)) {
      open_y4m();
    } else {
      fail(ErrorKind::kIngestion, "sequence not found: " + path.string());
    }
  }

  int frame_count() const { return static_cast<int>(is_y4m_ ? offsets_.size() : files_.size()); }
  int width() const { return width_; }
  int height() const { return height_; }
  double fps() const { return fps_; }
  const fs::path& path() const { return path_; }

  Frame read(int index) const {
    if (index < 0 || index >= frame_count()) {
      fail(ErrorKind::kUsage, "frame " + std::to_string(index) + " out of range for " + path_.string());
    }
    if (!is_y4m_) {
      Frame f = read_png(files_[index]);
      if (f.width() != width_ || f.height() != height_) {
        fail(ErrorKind::kFormat, files_[index].string() + " is " + std::to_string(f.width()) + "x" +
                                     std::to_string(f.height()) + ", expected " + std::to_string(width_) +
                                     "x" + std::to_string(height_));
      }
      return f;
    }
    std::ifstream in(path_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(offsets_[index]));
    std::vector<std::uint8_t> buf(frame_bytes_);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) fail(ErrorKind::kIngestion, path_.string() + ": short read in frame " + std::to_string(index));
    const std::size_t luma = static_cast<std::size_t>(width_) * height_;
    if (chroma444_) {
      Frame f = make_frame(height_, width_);
      Yuv420Frame px{2, 2, std::vector<std::uint8_t>(4), {0}, {0}};
      // 4:4:4: convert pixelwise through a 2x2 constant-chroma block.
      for (std::size_t i = 0; i < luma; ++i) {
        px.y.assign(4, buf[i]);
        px.u[0] = buf[luma + i];
        px.v[0] = buf[2 * luma + i];
        const Frame rgb = yuv420_to_rgb(px);
        const int y = static_cast<int>(i / width_);
        const int x = static_cast<int>(i % width_);
        for (int c = 0; c < 3; ++c) f(c, y, x) = rgb(c, 0, 0);
      }
      return f;
    }
    const std::size_t chroma = static_cast<std::size_t>(width_ / 2) * (height_ / 2);
    Yuv420Frame yuv{width_, height_, {buf.begin(), buf.begin() + luma},
                    {buf.begin() + luma, buf.begin() + luma + chroma},
                    {buf.begin() + luma + chroma, buf.begin() + luma + 2 * chroma}};
    return yuv420_to_rgb(yuv);
  }

  VideoSequence read_all(int first = 0, int count = -1) const {
    if (count < 0) count = frame_count() - first;
    if (first < 0 || first + count > frame_count()) {
      fail(ErrorKind::kUsage, "frame range outside " + path_.string());
    }
    VideoSequence seq;
    seq.fps = fps_;
    for (int i = first; i < first + count; ++i) seq.frames.push_back(read(i));
    return seq;
  }

 private:
  void open_png_dir() {
    for (const auto& entry : fs::directory_iterator(path_)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") files_.push_back(entry.path());
    }
    std::sort(files_.begin(), files_.end());
    const auto sidecar = path_ / "fps.txt";
    if (fs::exists(sidecar)) {
      std::ifstream in(sidecar);
      double fps = 0;
      if (!(in >> fps) || !(fps > 0)) fail(ErrorKind::kFormat, sidecar.string() + ": expected a positive fps");
      fps_ = fps;
    }
    if (!files_.empty()) {
      const Frame first = read_png(files_.front());
      width_ = first.width();
      height_ = first.height();
    }
  }

  void open_y4m() {
    is_y4m_ = true;
    std::ifstream in(path_, std::ios::binary);
    if (!in) fail(ErrorKind::kIngestion, "cannot open " + path_.string());
    std::string header;
    std::getline(in, header);
    std::istringstream tokens(header);
    std::string token;
    tokens >> token;
    if (token != "YUV4MPEG2") fail(ErrorKind::kFormat, path_.string() + ": not a Y4M file");
    std::string chroma = "420jpeg";
    while (tokens >> token) {
      const char tag = token[0];
      const std::string value = token.substr(1);
      if (tag == 'W') width_ = std::stoi(value);
      else if (tag == 'H') height_ = std::stoi(value);
      else if (tag == 'C') chroma = value;
      else if (tag == 'F') {
        const auto colon = value.find(':');
        const double num = std::stod(value.substr(0, colon));
        const double den = colon == std::string::npos ? 1.0 : std::stod(value.substr(colon + 1));
        if (!(num > 0 && den > 0)) fail(ErrorKind::kFormat, path_.string() + ": bad frame rate " + value);
        fps_ = num / den;
      }
    }
    if (width_ < 1 || height_ < 1) fail(ErrorKind::kFormat, path_.string() + ": missing W/H");
    const std::size_t luma = static_cast<std::size_t>(width_) * height_;
    if (chroma.rfind("420", 0) == 0) {
      if (width_ % 2 || height_ % 2) fail(ErrorKind::kFormat, path_.string() + ": odd size with 4:2:0");
      frame_bytes_ = luma + 2 * (static_cast<std::size_t>(width_ / 2) * (height_ / 2));
    } else if (chroma == "444") {
      chroma444_ = true;
      frame_bytes_ = 3 * luma;
    } else {
      fail(ErrorKind::kFormat, path_.string() + ": unsupported chroma C" + chroma);
    }
    const auto file_size = fs::file_size(path_);
    std::size_t pos = static_cast<std::size_t>(in.tellg());
    while (pos < file_size) {
      in.seekg(static_cast<std::streamoff>(pos));
      std::string frame_header;
      std::getline(in, frame_header);
      if (frame_header.rfind("FRAME", 0) != 0) {
        fail(ErrorKind::kFormat, path_.string() + ": expected FRAME marker at byte " + std::to_string(pos));
      }
      pos = static_cast<std::size_t>(in.tellg());
      if (pos + frame_bytes_ > file_size) fail(ErrorKind::kFormat, path_.string() + ": truncated frame");
      offsets_.push_back(pos);
      pos += frame_bytes_;
    }
  }

  fs::path path_;
  double fps_;
  int width_ = 0;
  int height_ = 0;
  bool is_y4m_ = false;
  bool chroma444_ = false;
  std::size_t frame_bytes_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<fs::path> files_;
};

/// Loads a whole sequence. A Y4M header's rate wins over `fps`; a PNG
/// directory's fps.txt sidecar wins over `fps`.
inline VideoSequence load_sequence(const fs::path& path, double fps = 30.0) {
  SequenceReader reader(path, fps);
  if (reader.frame_count() == 0) fail(ErrorKind::kIngestion, path.string() + " has no frames");
  return reader.read_all();
}

inline void write_y4m(const fs::path& path, const VideoSequence& seq) {
  seq.check_consistent();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIngestion, "cannot write " + path.string());
  // Rational frame rate with millisecond resolution.
  const long num = std::lround(seq.fps * 1000.0);
  const long g = std::gcd(num, 1000L);
  out << "YUV4MPEG2 W" << seq.width() << " H" << seq.height() << " F" << num / g << ":" << 1000 / g
      << " Ip A1:1 C420jpeg XCOLORRANGE=LIMITED\n";
  for (const auto& f : seq.frames) {
    const Yuv420Frame yuv = rgb_to_yuv420(f);
    out << "FRAME\n";
    for (const auto* plane : {&yuv.y, &yuv.u, &yuv.v}) {
      out.write(reinterpret_cast<const char*>(plane->data()), static_cast<std::streamsize>(plane->size()));
    }
  }
  if (!out) fail(ErrorKind::kIngestion, "short write to " + path.string());
}

inline void write_png_dir(const fs::path& dir, const VideoSequence& seq) {
  fs::create_directories(dir);
  for (int i = 0; i < seq.frame_count(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.png", i);
    write_png(dir / name, seq.frames[i]);
  }
  std::ofstream(dir / "fps.txt") << seq.fps << '\n';
}

/// Writes Y4M when the path ends in .y4m, otherwise a PNG directory.
inline void write_sequence(const fs::path& path, const VideoSequence& seq) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (path.extension() == ".y4m") write_y4m(path, seq);
  else write_png_dir(path, seq);
}

// ---------------------------------------------------------------------------
// Manifest

struct DecodedEntry {
  fs::path path;
  std::optional<std::uint64_t> bitstream_bytes;
};

struct ManifestEntry {
  std::string id;
  fs::path raw;
  double fps = 30.0;
  std::optional<int> frames;
  std::string sequence_class;
  std::optional<fs::path> annotations;
  std::map<int, DecodedEntry> decoded;
  std::map<int, fs::path> postprocessed;
  std::optional<std::pair<int, int>> frame_range;  // [first, last)
};

struct SequenceManifest {
  fs::path base_dir;
  std::vector<ManifestEntry> entries;

  const ManifestEntry& find(const std::string& id) const {
    for (const auto& e : entries) {
      if (e.id == id) return e;
    }
    fail(ErrorKind::kUsage, "manifest has no sequence '" + id + "'");
  }
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline std::string relative_to(const fs::path& base, const fs::path& p) {
  if (base.empty()) return p.string();
  std::error_code ec;
  const auto rel = fs::relative(p, base, ec);
  return ec || rel.empty() ? p.string() : rel.string();
}

inline int parse_qp_key(const std::string& key, const std::string& where) {
  std::size_t used = 0;
  int qp = -1;
  try {
    qp = std::stoi(key, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != key.size() || qp < 0 || qp > 63) {
    fail(ErrorKind::kValidation, where + ": '" + key + "' is not a QP in [0,63]");
  }
  return qp;
}

}  // namespace detail

/// Parses and validates a manifest. With `check_media`, referenced paths must
/// exist and frame counts must agree. All problems are reported together.
inline SequenceManifest load_manifest(const fs::path& path, bool check_media = true) {
  if (!fs::exists(path)) fail(ErrorKind::kIngestion, "manifest not found: " + path.string());
  nlohmann::json j;
  try {
    std::ifstream in(path);
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIngestion, path.string() + ": invalid JSON: " + e.what());
  }
  SequenceManifest manifest;
  manifest.base_dir = path.parent_path();
  std::vector<std::string> problems;
  if (!j.is_object() || !j.contains("sequences") || !j["sequences"].is_array()) {
    fail(ErrorKind::kIngestion, path.string() + ": expected an object with a 'sequences' array");
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "sequences") problems.push_back("unknown top-level key '" + key + "'");
  }
  int index = 0;
  for (const auto& item : j["sequences"]) {
    std::string where = "sequences[" + std::to_string(index++) + "]";
    try {
      ManifestEntry e;
      if (!item.is_object()) fail(ErrorKind::kValidation, "entry is not an object");
      if (item.contains("id")) where += " (" + item["id"].get<std::string>() + ")";
      for (const auto& [key, value] : item.items()) {
        if (key == "id") e.id = value.get<std::string>();
        else if (key == "raw") e.raw = detail::resolve(manifest.base_dir, value.get<std::string>());
        else if (key == "fps") e.fps = value.get<double>();
        else if (key == "frames") e.frames = value.get<int>();
        else if (key == "class") e.sequence_class = value.get<std::string>();
        else if (key == "annotations") e.annotations = detail::resolve(manifest.base_dir, value.get<std::string>());
        else if (key == "frame_range") e.frame_range = std::make_pair(value.at(0).get<int>(), value.at(1).get<int>());
        else if (key == "decoded") {
          for (const auto& [qp_key, d] : value.items()) {
            const int qp = detail::parse_qp_key(qp_key, where);
            DecodedEntry entry;
            if (d.is_string()) {
              entry.path = detail::resolve(manifest.base_dir, d.get<std::string>());
            } else {
              entry.path = detail::resolve(manifest.base_dir, d.at("path").get<std::string>());
              if (d.contains("bitstream_bytes")) entry.bitstream_bytes = d["bitstream_bytes"].get<std::uint64_t>();
            }
            e.decoded[qp] = entry;
          }
        } else if (key == "postprocessed") {
          for (const auto& [qp_key, p] : value.items()) {
            e.postprocessed[detail::parse_qp_key(qp_key, where)] =
                detail::resolve(manifest.base_dir, p.get<std::string>());
          }
        } else {
          fail(ErrorKind::kValidation, "unknown key '" + key + "'");
        }
      }
      if (e.id.empty()) fail(ErrorKind::kValidation, "missing id");
      if (e.raw.empty()) fail(ErrorKind::kValidation, "missing raw path");
      if (!(e.fps > 0)) fail(ErrorKind::kValidation, "fps must be > 0");
      if (check_media) {
        std::vector<std::string> missing;
        auto need = [&](const fs::path& p) {
          if (!fs::exists(p)) missing.push_back(p.string());
        };
        need(e.raw);
        if (e.annotations) need(*e.annotations);
        for (const auto& [qp, d] : e.decoded) need(d.path);
        for (const auto& [qp, p] : e.postprocessed) need(p);
        if (!missing.empty()) {
          std::string list;
          for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
          fail(ErrorKind::kIngestion, "missing media: " + list);
        }
        const SequenceReader raw(e.raw, e.fps);
        if (e.frames && *e.frames != raw.frame_count()) {
          fail(ErrorKind::kValidation, "declares " + std::to_string(*e.frames) + " frames but raw has " +
                                           std::to_string(raw.frame_count()));
        }
        if (e.frame_range && (e.frame_range->first < 0 || e.frame_range->second > raw.frame_count() ||
                              e.frame_range->first >= e.frame_range->second)) {
          fail(ErrorKind::kValidation, "frame_range outside the raw sequence");
        }
        auto check_alignment = [&](const fs::path& p) {
          const SequenceReader other(p, e.fps);
          if (other.frame_count() != raw.frame_count() || other.width() != raw.width() ||
              other.height() != raw.height()) {
            fail(ErrorKind::kValidation, p.string() + " does not match raw frame count/size");
          }
        };
        for (const auto& [qp, d] : e.decoded) check_alignment(d.path);
        for (const auto& [qp, p] : e.postprocessed) check_alignment(p);
      }
      manifest.entries.push_back(std::move(e));
    } catch (const Error& err) {
      problems.push_back(where + ": " + err.what());
    } catch (const nlohmann::json::exception& err) {
      problems.push_back(where + ": " + err.what());
    }
  }
  if (!problems.empty()) {
    std::string message = path.string() + ":";
    for (const auto& p : problems) message += "\n  " + p;
    fail(ErrorKind::kIngestion, message);
  }
  return manifest;
}

inline nlohmann::json manifest_to_json(const SequenceManifest& manifest, const fs::path& base_dir) {
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::json j = {{"id", e.id}, {"raw", detail::relative_to(base_dir, e.raw)}, {"fps", e.fps}};
    if (e.frames) j["frames"] = *e.frames;
    if (!e.sequence_class.empty()) j["class"] = e.sequence_class;
    if (e.annotations) j["annotations"] = detail::relative_to(base_dir, *e.annotations);
    if (e.frame_range) j["frame_range"] = {e.frame_range->first, e.frame_range->second};
    if (!e.decoded.empty()) {
      nlohmann::json d = nlohmann::json::object();
      for (const auto& [qp, entry] : e.decoded) {
        nlohmann::json v = {{"path", detail::relative_to(base_dir, entry.path)}};
        if (entry.bitstream_bytes) v["bitstream_bytes"] = *entry.bitstream_bytes;
        d[std::to_string(qp)] = v;
      }
      j["decoded"] = d;
    }
    if (!e.postprocessed.empty()) {
      nlohmann::json p = nlohmann::json::object();
      for (const auto& [qp, path] : e.postprocessed) p[std::to_string(qp)] = detail::relative_to(base_dir, path);
      j["postprocessed"] = p;
    }
    seqs.push_back(j);
  }
  return {{"sequences", seqs}};
}

inline void save_manifest(const fs::path& path, const SequenceManifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIngestion, "cannot write " + path.string());
  out << manifest_to_json(manifest, fs::absolute(path).parent_path()).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Training patches

struct PatchPair {
  Frame decoded_patch;
  Frame raw_patch;
  int source = 0;
  int frame = 0;
  int x = 0;
  int y = 0;
};

/// Draws one co-located (frame, y, x) window position.
struct PatchPosition {
  int frame = 0;
  int x = 0;
  int y = 0;
};

inline PatchPosition sample_patch_position(std::mt19937_64& rng, int frame_count, int height, int width,
                                           int patch) {
  PatchPosition p;
  p.frame = static_cast<int>(rng() % static_cast<std::uint64_t>(frame_count));
  p.y = static_cast<int>(rng() % static_cast<std::uint64_t>(height - patch + 1));
  p.x = static_cast<int>(rng() % static_cast<std::uint64_t>(width - patch + 1));
  return p;
}

inline void check_aligned(const VideoSequence& raw, const VideoSequence& decoded) {
  if (raw.frame_count() != decoded.frame_count() || raw.width() != decoded.width() ||
      raw.height() != decoded.height()) {
    fail(ErrorKind::kAlignment, "raw (" + std::to_string(raw.frame_count()) + " frames, " +
                                    std::to_string(raw.width()) + "x" + std::to_string(raw.height()) +
                                    ") and decoded (" + std::to_string(decoded.frame_count()) + " frames, " +
                                    std::to_string(decoded.width()) + "x" + std::to_string(decoded.height()) +
                                    ") are not aligned");
  }
}

/// N seeded co-located patch pairs of size P x P.
inline std::vector<PatchPair> make_patch_pairs(const VideoSequence& raw, const VideoSequence& decoded, int patch,
                                               int count, std::uint64_t seed) {
  check_aligned(raw, decoded);
  if (raw.frame_count() < 1) fail(ErrorKind::kUsage, "empty sequences");
  if (patch < 1 || patch > std::min(raw.width(), raw.height())) {
    fail(ErrorKind::kUsage, "patch size " + std::to_string(patch) + " exceeds frame size");
  }
  std::mt19937_64 rng(seed);
  std::vector<PatchPair> pairs;
  pairs.reserve(count);
  for (int i = 0; i < count; ++i) {
    const auto pos = sample_patch_position(rng, raw.frame_count(), raw.height(), raw.width(), patch);
    pairs.push_back({crop(decoded.frames[pos.frame], pos.y, pos.x, patch, patch),
                     crop(raw.frames[pos.frame], pos.y, pos.x, patch, patch), 0, pos.frame, pos.x, pos.y});
  }
  return pairs;
}

}  // namespace vcm
