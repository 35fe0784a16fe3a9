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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcm/checksum.hpp"
#include "vcm/error.hpp"
#include "vcm/net.hpp"
#include "vcm/optim.hpp"

// Checkpoint archive layout (all integers little-endian):
//
//   "VCMCKPT1"
//   u32 header_size, header_size bytes of JSON {"config": NetConfig, ...}
//   u32 tensor_count
//   per tensor: u32 name_size, name, u32 rank, u32 dims[rank],
//               float32 values[prod(dims)]
//   u32 crc32 of every preceding byte

namespace vcm {

inline nlohmann::json to_json(const NetConfig& c) {
  return {{"in_channels", c.in_channels},
          {"base_width", c.base_width},
          {"growth", c.growth},
          {"num_rrdb", c.num_rrdb},
          {"dense_layers_per_block", c.dense_layers_per_block},
          {"dense_blocks_per_rrdb", c.dense_blocks_per_rrdb},
          {"residual_scale", c.residual_scale},
          {"leaky_slope", c.leaky_slope}};
}

/// Reads a NetConfig; absent fields keep defaults, unknown fields are errors.
inline NetConfig net_config_from_json(const nlohmann::json& j,
                                      NetConfig base = {}) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "network config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "in_channels") base.in_channels = value.get<int>();
      else if (key == "base_width") base.base_width = value.get<int>();
      else if (key == "growth") base.growth = value.get<int>();
      else if (key == "num_rrdb") base.num_rrdb = value.get<int>();
      else if (key == "dense_layers_per_block") base.dense_layers_per_block = value.get<int>();
      else if (key == "dense_blocks_per_rrdb") base.dense_blocks_per_rrdb = value.get<int>();
      else if (key == "residual_scale") base.residual_scale = value.get<double>();
      else if (key == "leaky_slope") base.leaky_slope = value.get<double>();
      else fail(ErrorKind::kConfig, "unknown network config key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::kConfig, "network config key '" + key + "' has wrong type");
    }
  }
  base.validate();
  return base;
}

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;
};

struct CheckpointArchive {
  nlohmann::json header;  // always holds "config"
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n) fail(ErrorKind::kFormat, source_ + ": truncated checkpoint");
  }
  std::span<const std::uint8_t> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline constexpr char kCheckpointMagic[] = "VCMCKPT1";

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const CheckpointArchive& archive) {
  detail::ByteWriter w;
  w.raw(detail::kCheckpointMagic);
  const std::string header = archive.header.dump();
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.raw(header);
  w.u32(static_cast<std::uint32_t>(archive.tensors.size()));
  for (const auto& t : archive.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.raw(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(d);
    for (float v : t.values) w.f32(v);
  }
  w.u32(crc32_of(w.bytes()));
  return std::move(w.bytes());
}

inline CheckpointArchive decode_checkpoint(std::span<const std::uint8_t> bytes,
                                           const std::string& source = "checkpoint") {
  const std::size_t magic_size = std::strlen(detail::kCheckpointMagic);
  if (bytes.size() < magic_size + 4 ||
      std::memcmp(bytes.data(), detail::kCheckpointMagic, magic_size) != 0) {
    fail(ErrorKind::kFormat, source + ": not a checkpoint archive");
  }
  const auto body = bytes.first(bytes.size() - 4);
  detail::ByteReader trailer(bytes.last(4), source);
  if (trailer.u32() != crc32_of(body)) {
    fail(ErrorKind::kFormat, source + ": checksum mismatch");
  }
  detail::ByteReader r(body, source);
  r.raw(magic_size);
  CheckpointArchive archive;
  try {
    archive.header = nlohmann::json::parse(r.raw(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, source + ": bad header: " + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.raw(r.u32());
    const std::uint32_t rank = r.u32();
    std::size_t size = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u32());
      size *= t.shape.back();
    }
    if (size > r.remaining() / 4) fail(ErrorKind::kFormat, source + ": tensor '" + t.name + "' overruns file");
    t.values.resize(size);
    for (auto& v : t.values) v = r.f32();
    archive.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) fail(ErrorKind::kFormat, source + ": trailing bytes");
  if (!archive.header.contains("config")) fail(ErrorKind::kFormat, source + ": header lacks config");
  return archive;
}

/// Packs a network (and optionally its optimizer state) into an archive.
template <typename T>
CheckpointArchive make_archive(const PostProcNet<T>& net,
                               const OptimizerState<T>* optimizer = nullptr,
                               nlohmann::json extra = nlohmann::json::object()) {
  CheckpointArchive archive;
  archive.header = std::move(extra);
  archive.header["config"] = to_json(net.config());
  const auto params = net.parameters();
  for (const auto& info : net.layout().tensors()) {
    NamedTensor t{info.name, {}, {}};
    for (int d : info.shape) t.shape.push_back(static_cast<std::uint32_t>(d));
    t.values.assign(params.begin() + info.offset, params.begin() + info.offset + info.size);
    archive.tensors.push_back(std::move(t));
  }
  if (optimizer != nullptr) {
    archive.header["optimizer"] = {{"step", optimizer->step},
                                   {"lr", optimizer->lr},
                                   {"beta1", optimizer->beta1},
                                   {"beta2", optimizer->beta2},
                                   {"epsilon", optimizer->epsilon}};
    const auto n = static_cast<std::uint32_t>(params.size());
    archive.tensors.push_back({"adam.first_moments", {n},
                               {optimizer->first_moments.begin(), optimizer->first_moments.end()}});
    archive.tensors.push_back({"adam.second_moments", {n},
                               {optimizer->second_moments.begin(), optimizer->second_moments.end()}});
  }
  return archive;
}

template <typename T>
PostProcNet<T> network_from_archive(const CheckpointArchive& archive,
                                    const std::string& source = "checkpoint") {
  PostProcNet<T> net(net_config_from_json(archive.header.at("config")));
  auto params = net.mutable_parameters();
  for (const auto& info : net.layout().tensors()) {
    const NamedTensor* t = archive.find(info.name);
    if (t == nullptr) fail(ErrorKind::kFormat, source + ": missing tensor '" + info.name + "'");
    std::vector<std::uint32_t> expect(info.shape.begin(), info.shape.end());
    if (t->shape != expect) fail(ErrorKind::kFormat, source + ": tensor '" + info.name + "' has wrong shape");
    std::copy(t->values.begin(), t->values.end(), params.begin() + info.offset);
  }
  return net;
}

template <typename T>
std::optional<OptimizerState<T>> optimizer_from_archive(const CheckpointArchive& archive) {
  if (!archive.header.contains("optimizer")) return std::nullopt;
  const auto& h = archive.header.at("optimizer");
  const NamedTensor* m = archive.find("adam.first_moments");
  const NamedTensor* v = archive.find("adam.second_moments");
  if (m == nullptr || v == nullptr) fail(ErrorKind::kFormat, "checkpoint optimizer moments missing");
  OptimizerState<T> state;
  state.step = h.at("step").get<std::int64_t>();
  state.lr = h.at("lr").get<double>();
  state.beta1 = h.at("beta1").get<double>();
  state.beta2 = h.at("beta2").get<double>();
  state.epsilon = h.at("epsilon").get<double>();
  state.first_moments.assign(m->values.begin(), m->values.end());
  state.second_moments.assign(v->values.begin(), v->values.end());
  return state;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const PostProcNet<T>& net,
                     const OptimizerState<T>* optimizer = nullptr,
                     nlohmann::json extra = nlohmann::json::object()) {
  write_file_bytes(path, encode_checkpoint(make_archive(net, optimizer, std::move(extra))));
}

inline CheckpointArchive read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::kIngestion, "checkpoint not found: " + path.string());
  return decode_checkpoint(read_file_bytes(path), path.string());
}

template <typename T = float>
PostProcNet<T> load_network(const std::filesystem::path& path) {
  return network_from_archive<T>(read_checkpoint(path), path.string());
}

}  // namespace vcm
