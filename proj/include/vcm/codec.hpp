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
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcm/checksum.hpp"
#include "vcm/error.hpp"
#include "vcm/image_io.hpp"
#include "vcm/process.hpp"
#include "vcm/video.hpp"

namespace vcm {

// ---------------------------------------------------------------------------
// Color conversion: BT.709, 8-bit limited range, 4:2:0.

inline constexpr double kKr = 0.2126;
inline constexpr double kKg = 0.7152;
inline constexpr double kKb = 0.0722;

struct Yuv420Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> y;  // width * height
  std::vector<std::uint8_t> u;  // (width/2) * (height/2), Cb
  std::vector<std::uint8_t> v;  // Cr

  std::size_t byte_size() const { return y.size() + u.size() + v.size(); }
  friend bool operator==(const Yuv420Frame&, const Yuv420Frame&) = default;
};

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline Yuv420Frame rgb_to_yuv420(const Frame& frame) {
  if (frame.channels() != 3 || frame.batch() != 1) {
    fail(ErrorKind::kShape, "rgb_to_yuv420 expects a single RGB frame");
  }
  const int w = frame.width();
  const int h = frame.height();
  if (w % 2 != 0 || h % 2 != 0) {
    fail(ErrorKind::kDimension, "4:2:0 needs even dimensions, got " + std::to_string(w) + "x" +
                                    std::to_string(h));
  }
  Yuv420Frame out;
  out.width = w;
  out.height = h;
  out.y.resize(static_cast<std::size_t>(w) * h);
  out.u.resize(static_cast<std::size_t>(w / 2) * (h / 2));
  out.v.resize(out.u.size());
  std::vector<double> pb(out.y.size());
  std::vector<double> pr(out.y.size());
  for (int yy = 0; yy < h; ++yy) {
    for (int x = 0; x < w; ++x) {
      const double r = frame(0, yy, x);
      const double g = frame(1, yy, x);
      const double b = frame(2, yy, x);
      const double luma = kKr * r + kKg * g + kKb * b;
      const std::size_t i = static_cast<std::size_t>(yy) * w + x;
      out.y[i] = clamp_u8(16.0 + 219.0 * luma);
      pb[i] = (b - luma) / (2.0 * (1.0 - kKb));
      pr[i] = (r - luma) / (2.0 * (1.0 - kKr));
    }
  }
  for (int cy = 0; cy < h / 2; ++cy) {
    for (int cx = 0; cx < w / 2; ++cx) {
      double sb = 0;
      double sr = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const std::size_t i = static_cast<std::size_t>(2 * cy + dy) * w + 2 * cx + dx;
          sb += pb[i];
          sr += pr[i];
        }
      }
      const std::size_t ci = static_cast<std::size_t>(cy) * (w / 2) + cx;
      out.u[ci] = clamp_u8(128.0 + 224.0 * sb / 4.0);
      out.v[ci] = clamp_u8(128.0 + 224.0 * sr / 4.0);
    }
  }
  return out;
}

inline Frame yuv420_to_rgb(const Yuv420Frame& yuv) {
  const int w = yuv.width;
  const int h = yuv.height;
  if (w < 2 || h < 2 || w % 2 != 0 || h % 2 != 0 ||
      yuv.y.size() != static_cast<std::size_t>(w) * h ||
      yuv.u.size() != static_cast<std::size_t>(w / 2) * (h / 2) || yuv.v.size() != yuv.u.size()) {
    fail(ErrorKind::kFormat, "malformed 4:2:0 planes for " + std::to_string(w) + "x" +
                                 std::to_string(h));
  }
  const double g_from_pr = 2.0 * (1.0 - kKr) * kKr / kKg;
  const double g_from_pb = 2.0 * (1.0 - kKb) * kKb / kKg;
  Frame out = make_frame(h, w);
  for (int yy = 0; yy < h; ++yy) {
    for (int x = 0; x < w; ++x) {
      const std::size_t ci = static_cast<std::size_t>(yy / 2) * (w / 2) + x / 2;
      const double luma = (yuv.y[static_cast<std::size_t>(yy) * w + x] - 16.0) / 219.0;
      const double pb = (yuv.u[ci] - 128.0) / 224.0;
      const double pr = (yuv.v[ci] - 128.0) / 224.0;
      const double r = luma + 2.0 * (1.0 - kKr) * pr;
      const double g = luma - g_from_pr * pr - g_from_pb * pb;
      const double b = luma + 2.0 * (1.0 - kKb) * pb;
      out(0, yy, x) = static_cast<float>(std::clamp(r, 0.0, 1.0));
      out(1, yy, x) = static_cast<float>(std::clamp(g, 0.0, 1.0));
      out(2, yy, x) = static_cast<float>(std::clamp(b, 0.0, 1.0));
    }
  }
  return out;
}

/// Raw planar I420 (Y, then Cb, then Cr per frame), the format external
/// encoders read and write.
inline void write_raw_yuv(const std::filesystem::path& path, std::span<const Yuv420Frame> frames) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIngestion, "cannot write " + path.string());
  for (const auto& f : frames) {
    for (const auto* plane : {&f.y, &f.u, &f.v}) {
      out.write(reinterpret_cast<const char*>(plane->data()), static_cast<std::streamsize>(plane->size()));
    }
  }
}

inline std::vector<Yuv420Frame> read_raw_yuv(const std::filesystem::path& path, int width, int height) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::kIngestion, "missing YUV file " + path.string());
  const auto bytes = read_file_bytes(path);
  const std::size_t luma = static_cast<std::size_t>(width) * height;
  const std::size_t chroma = static_cast<std::size_t>(width / 2) * (height / 2);
  const std::size_t frame_bytes = luma + 2 * chroma;
  if (frame_bytes == 0 || bytes.size() % frame_bytes != 0) {
    fail(ErrorKind::kFormat, path.string() + ": size " + std::to_string(bytes.size()) +
                                 " is not a whole number of " + std::to_string(width) + "x" +
                                 std::to_string(height) + " 4:2:0 frames");
  }
  std::vector<Yuv420Frame> frames(bytes.size() / frame_bytes);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto* p = bytes.data() + i * frame_bytes;
    frames[i].width = width;
    frames[i].height = height;
    frames[i].y.assign(p, p + luma);
    frames[i].u.assign(p + luma, p + luma + chroma);
    frames[i].v.assign(p + luma + chroma, p + frame_bytes);
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Bitrate

/// kbps = bytes * 8 / (frames / fps) / 1000.
inline double measure_bitrate(std::uint64_t size_bytes, int frame_count, double fps) {
  if (frame_count < 1) fail(ErrorKind::kUsage, "frame_count must be >= 1");
  if (!(fps > 0.0)) fail(ErrorKind::kUsage, "fps must be > 0");
  const double seconds = static_cast<double>(frame_count) / fps;
  return static_cast<double>(size_bytes) * 8.0 / seconds / 1000.0;
}

// ---------------------------------------------------------------------------
// Mock codec: uniform scalar quantizer + lossless DPCM/run-length/Exp-Golomb.

inline void check_qp(int qp) {
  if (qp < 0 || qp > 63) fail(ErrorKind::kUsage, "qp " + std::to_string(qp) + " outside [0,63]");
}

/// Quantizer step on the 0..255 scale; doubles every 6 QP, 1 at QP 4.
inline int quant_step(int qp) {
  check_qp(qp);
  return std::max(1L, std::lround(std::pow(2.0, (qp - 4) / 6.0)));
}

/// One 8-bit sample plane.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> samples;
  friend bool operator==(const Plane&, const Plane&) = default;
};

inline int quantize_index(int sample, int step) { return (sample + step / 2) / step; }
inline std::uint8_t dequantize_index(int index, int step) {
  return static_cast<std::uint8_t>(std::min(255, index * step));
}

namespace detail {

class BitWriter {
 public:
  void put_bit(bool bit) {
    if (fill_ == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> fill_);
    fill_ = (fill_ + 1) % 8;
  }
  // Order-0 Exp-Golomb of a non-negative integer.
  void put_ue(std::uint64_t value) {
    const std::uint64_t v = value + 1;
    int bits = 0;
    while ((v >> bits) > 1) ++bits;
    for (int i = 0; i < bits; ++i) put_bit(false);
    for (int i = bits; i >= 0; --i) put_bit(((v >> i) & 1u) != 0);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  int fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  bool get_bit() {
    if (pos_ / 8 >= bytes_.size()) fail(ErrorKind::kFormat, "mock bitstream truncated");
    const bool bit = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return bit;
  }
  std::uint64_t get_ue() {
    int zeros = 0;
    while (!get_bit()) {
      if (++zeros > 62) fail(ErrorKind::kFormat, "mock bitstream corrupt");
    }
    std::uint64_t v = 1;
    for (int i = 0; i < zeros; ++i) v = (v << 1) | (get_bit() ? 1u : 0u);
    return v - 1;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint64_t zigzag(int d) {
  return d >= 0 ? static_cast<std::uint64_t>(d) * 2 : static_cast<std::uint64_t>(-d) * 2 - 1;
}
inline int unzigzag(std::uint64_t u) {
  return (u & 1u) ? -static_cast<int>((u + 1) / 2) : static_cast<int>(u / 2);
}

// Left neighbour, or the one above in the first column, or 0.
inline int predict(const std::vector<int>& idx, int w, int y, int x) {
  if (x > 0) return idx[static_cast<std::size_t>(y) * w + x - 1];
  if (y > 0) return idx[static_cast<std::size_t>(y - 1) * w];
  return 0;
}

inline constexpr std::uint8_t kMockMagic[4] = {'M', 'Q', 'B', '1'};

}  // namespace detail

/// Quantizes planes at `qp` and entropy codes the quantizer indices.
///
/// Layout: "MQB1", u8 qp, u16 plane count, per plane u32 width + u32 height
/// (little-endian), then the bit payload: per plane in raster order, the
/// zigzagged DPCM residuals as (zero-run, nonzero-1) Exp-Golomb pairs.
inline std::vector<std::uint8_t> mock_encode(std::span<const Plane> planes, int qp) {
  const int step = quant_step(qp);
  std::vector<std::uint8_t> out(detail::kMockMagic, detail::kMockMagic + 4);
  out.push_back(static_cast<std::uint8_t>(qp));
  out.push_back(static_cast<std::uint8_t>(planes.size() & 0xff));
  out.push_back(static_cast<std::uint8_t>(planes.size() >> 8));
  for (const auto& p : planes) {
    for (std::uint32_t v : {static_cast<std::uint32_t>(p.width), static_cast<std::uint32_t>(p.height)}) {
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  detail::BitWriter bits;
  std::vector<int> idx;
  for (const auto& p : planes) {
    if (p.samples.size() != static_cast<std::size_t>(p.width) * p.height) {
      fail(ErrorKind::kFormat, "plane sample count does not match its size");
    }
    idx.resize(p.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = quantize_index(p.samples[i], step);
    std::uint64_t run = 0;
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        const int residual = idx[static_cast<std::size_t>(y) * p.width + x] - detail::predict(idx, p.width, y, x);
        if (residual == 0) {
          ++run;
          continue;
        }
        bits.put_ue(run);
        bits.put_ue(detail::zigzag(residual) - 1);
        run = 0;
      }
    }
    if (run > 0) bits.put_ue(run);
  }
  out.insert(out.end(), bits.bytes().begin(), bits.bytes().end());
  return out;
}

/// Inverse of mock_encode; returns the reconstructed (dequantized) planes.
inline std::vector<Plane> mock_decode(std::span<const std::uint8_t> stream) {
  if (stream.size() < 7 || !std::equal(detail::kMockMagic, detail::kMockMagic + 4, stream.begin())) {
    fail(ErrorKind::kFormat, "not a mock bitstream");
  }
  const int qp = stream[4];
  const int step = quant_step(qp);
  const std::size_t count = stream[5] | (static_cast<std::size_t>(stream[6]) << 8);
  std::size_t pos = 7;
  std::vector<Plane> planes(count);
  for (auto& p : planes) {
    if (stream.size() < pos + 8) fail(ErrorKind::kFormat, "mock bitstream header truncated");
    auto u32 = [&](std::size_t at) {
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(stream[at + i]) << (8 * i);
      return v;
    };
    p.width = static_cast<int>(u32(pos));
    p.height = static_cast<int>(u32(pos + 4));
    pos += 8;
  }
  detail::BitReader bits(stream.subspan(pos));
  std::vector<int> idx;
  for (auto& p : planes) {
    const std::size_t n = static_cast<std::size_t>(p.width) * p.height;
    idx.assign(n, 0);
    std::vector<int> residual(n, 0);
    std::size_t at = 0;
    while (at < n) {
      const std::uint64_t run = bits.get_ue();
      if (run > n - at) fail(ErrorKind::kFormat, "mock bitstream run overflows plane");
      at += run;
      if (at < n) residual[at++] = detail::unzigzag(bits.get_ue() + 1);
    }
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * p.width + x;
        idx[i] = residual[i] + detail::predict(idx, p.width, y, x);
      }
    }
    p.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.samples[i] = dequantize_index(idx[i], step);
  }
  return planes;
}

/// Dequantized planes exactly as mock_decode would rebuild them.
inline std::vector<Plane> mock_quantize(std::span<const Plane> planes, int qp) {
  const int step = quant_step(qp);
  std::vector<Plane> out(planes.begin(), planes.end());
  for (auto& p : out) {
    for (auto& s : p.samples) s = dequantize_index(quantize_index(s, step), step);
  }
  return out;
}

struct MockCodecResult {
  VideoSequence decoded;
  std::vector<std::uint8_t> bitstream;
  std::uint64_t size_bytes() const { return bitstream.size(); }
};

/// Desk-scale stand-in for a real encoder: quantizes each RGB channel of each
/// frame on the 8-bit scale and reports the losslessly coded size.
inline MockCodecResult mock_codec(const VideoSequence& seq, int qp) {
  check_qp(qp);
  seq.check_consistent();
  std::vector<Plane> planes;
  planes.reserve(seq.frames.size() * 3);
  for (const auto& f : seq.frames) {
    if (f.channels() != 3) fail(ErrorKind::kShape, "mock codec expects RGB frames");
    for (int c = 0; c < 3; ++c) {
      Plane p{f.width(), f.height(), {}};
      p.samples.reserve(f.plane_size());
      for (float v : f.plane(c, 0)) p.samples.push_back(to_u8(v));
      planes.push_back(std::move(p));
    }
  }
  MockCodecResult result;
  result.bitstream = mock_encode(planes, qp);
  const auto recon = mock_quantize(planes, qp);
  result.decoded.fps = seq.fps;
  result.decoded.color_space = seq.color_space;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    Frame f = make_frame(seq.height(), seq.width());
    for (int c = 0; c < 3; ++c) {
      auto dst = f.plane(c, 0);
      const auto& src = recon[i * 3 + c].samples;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = from_u8(src[k]);
    }
    result.decoded.frames.push_back(std::move(f));
  }
  return result;
}

inline std::vector<Plane> yuv_planes(const Yuv420Frame& f) {
  return {{f.width, f.height, f.y}, {f.width / 2, f.height / 2, f.u}, {f.width / 2, f.height / 2, f.v}};
}

// ---------------------------------------------------------------------------
// Codec jobs

struct Bitstream {
  std::filesystem::path path;
  std::uint64_t size_bytes = 0;
};

/// One encode/decode of a sequence at one QP.
struct CodecJob {
  int qp = 37;
  std::string config_name = "random-access";
  /// "mock" or a shell template with {input} {output} {bitstream} {qp};
  /// optional {width} {height} {fps} {frames} {config}.
  std::string encoder_spec = "mock";
  std::filesystem::path config_file;  // passed through as {config}
  const VideoSequence* input = nullptr;
  std::filesystem::path work_dir;
  std::filesystem::path bitstream_path;
  std::filesystem::path log_path;
};

struct CodecOutput {
  VideoSequence decoded;
  Bitstream bitstream;
  nlohmann::json log;
};

inline constexpr const char* kRequiredPlaceholders[] = {"input", "output", "bitstream", "qp"};

inline void validate_encoder_template(const std::string& spec) {
  if (spec == "mock") return;
  for (const char* key : kRequiredPlaceholders) {
    if (spec.find("{" + std::string(key) + "}") == std::string::npos) {
      fail(ErrorKind::kTemplate, "encoder command lacks placeholder {" + std::string(key) + "}");
    }
  }
  const std::string program = command_program(spec);
  if (!executable_exists(program)) {
    fail(ErrorKind::kEnvironment, "encoder program '" + program + "' not found or not executable");
  }
}

/// Runs a codec job. External templates get a raw I420 input file and must
/// leave a raw I420 reconstruction at {output}; "mock" runs in-process on the
/// same 4:2:0 planes. Writes the job log when log_path is set.
inline CodecOutput encode_decode_external(const CodecJob& job) {
  check_qp(job.qp);
  if (job.input == nullptr || job.input->frames.empty()) fail(ErrorKind::kUsage, "codec job has no input frames");
  validate_encoder_template(job.encoder_spec);
  const VideoSequence& seq = *job.input;
  seq.check_consistent();
  std::filesystem::create_directories(job.work_dir);
  const auto bitstream_path = job.bitstream_path.empty() ? job.work_dir / "bitstream.bin" : job.bitstream_path;

  std::vector<Yuv420Frame> yuv;
  yuv.reserve(seq.frames.size());
  for (const auto& f : seq.frames) yuv.push_back(rgb_to_yuv420(f));
  const int w = seq.width();
  const int h = seq.height();
  const auto input_path = job.work_dir / ("input_" + std::to_string(w) + "x" + std::to_string(h) + ".yuv");
  write_raw_yuv(input_path, yuv);
  const std::string input_sum = file_checksum(input_path);

  nlohmann::json log = {{"qp", job.qp},
                        {"config", job.config_name},
                        {"encoder", job.encoder_spec == "mock" ? "mock" : "external"},
                        {"width", w},
                        {"height", h},
                        {"frames", seq.frame_count()},
                        {"fps", seq.fps},
                        {"input_yuv", input_path.filename().string()},
                        {"input_checksum", input_sum}};

  std::vector<Yuv420Frame> recon;
  if (job.encoder_spec == "mock") {
    std::vector<Plane> planes;
    for (const auto& f : yuv) {
      for (auto& p : yuv_planes(f)) planes.push_back(std::move(p));
    }
    write_file_bytes(bitstream_path, mock_encode(planes, job.qp));
    const auto decoded = mock_quantize(planes, job.qp);
    for (std::size_t i = 0; i < yuv.size(); ++i) {
      recon.push_back({w, h, decoded[3 * i].samples, decoded[3 * i + 1].samples, decoded[3 * i + 2].samples});
    }
    log["command"] = "mock";
  } else {
    const auto output_path = job.work_dir / "decoded.yuv";
    std::filesystem::remove(output_path);
    std::string cmd = job.encoder_spec;
    cmd = substitute(cmd, "input", shell_quote(input_path.string()));
    cmd = substitute(cmd, "output", shell_quote(output_path.string()));
    cmd = substitute(cmd, "bitstream", shell_quote(bitstream_path.string()));
    cmd = substitute(cmd, "qp", std::to_string(job.qp));
    cmd = substitute(cmd, "width", std::to_string(w));
    cmd = substitute(cmd, "height", std::to_string(h));
    cmd = substitute(cmd, "frames", std::to_string(seq.frame_count()));
    char fps[32];
    std::snprintf(fps, sizeof(fps), "%g", seq.fps);
    cmd = substitute(cmd, "fps", fps);
    cmd = substitute(cmd, "config", shell_quote(job.config_file.string()));
    log["command"] = cmd;
    const ProcessResult result = run_command(cmd);
    log["exit_code"] = result.exit_code;
    if (result.exit_code != 0) {
      fail(ErrorKind::kCodec, "encoder exited with " + std::to_string(result.exit_code) + ": " + result.output);
    }
    if (file_checksum(input_path) != input_sum) {
      fail(ErrorKind::kCodec, "encoder modified its input file " + input_path.string());
    }
    if (!std::filesystem::exists(bitstream_path)) {
      fail(ErrorKind::kCodec, "encoder produced no bitstream at " + bitstream_path.string());
    }
    recon = read_raw_yuv(output_path, w, h);
    if (recon.size() != yuv.size()) {
      fail(ErrorKind::kFormat, "decoder returned " + std::to_string(recon.size()) + " frames, expected " +
                                   std::to_string(yuv.size()));
    }
    std::filesystem::remove(output_path);
  }

  CodecOutput out;
  out.decoded.fps = seq.fps;
  out.decoded.color_space = seq.color_space;
  for (const auto& f : recon) out.decoded.frames.push_back(yuv420_to_rgb(f));
  out.bitstream.path = bitstream_path;
  out.bitstream.size_bytes = std::filesystem::file_size(bitstream_path);
  std::filesystem::remove(input_path);
  log["bitstream"] = bitstream_path.filename().string();
  log["bitstream_bytes"] = out.bitstream.size_bytes;
  log["bitstream_checksum"] = file_checksum(bitstream_path);
  log["kbps"] = measure_bitrate(out.bitstream.size_bytes, seq.frame_count(), seq.fps);
  out.log = log;
  if (!job.log_path.empty()) {
    std::ofstream f(job.log_path, std::ios::trunc);
    f << log.dump(2) << '\n';
  }
  return out;
}

}  // namespace vcm
