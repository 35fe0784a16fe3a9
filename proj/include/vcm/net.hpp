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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vcm/conv.hpp"
#include "vcm/error.hpp"
#include "vcm/tensor.hpp"

namespace vcm {

/// Hyper-parameters of the same-resolution RRDB restoration network.
struct NetConfig {
  int in_channels = 3;
  int base_width = 64;
  int growth = 32;
  int num_rrdb = 3;
  int dense_layers_per_block = 5;
  int dense_blocks_per_rrdb = 3;
  double residual_scale = 0.2;
  double leaky_slope = 0.2;

  void validate() const {
    auto require = [](bool ok, const char* field, const std::string& rule) {
      if (!ok) fail(ErrorKind::kConfig, std::string(field) + " " + rule);
    };
    require(in_channels >= 1, "in_channels", "must be >= 1");
    require(base_width >= 1, "base_width", "must be >= 1");
    require(growth >= 1, "growth", "must be >= 1");
    require(num_rrdb >= 0, "num_rrdb", "must be >= 0");
    require(dense_layers_per_block >= 1, "dense_layers_per_block",
            "must be >= 1");
    require(dense_blocks_per_rrdb >= 1, "dense_blocks_per_rrdb",
            "must be >= 1");
    require(residual_scale > 0.0 && residual_scale <= 1.0, "residual_scale",
            "must be in (0,1]");
    require(leaky_slope >= 0.0 && leaky_slope < 1.0, "leaky_slope",
            "must be in [0,1)");
  }

  /// Channels held by a dense block's concatenation buffer.
  int dense_channels() const {
    return base_width + (dense_layers_per_block - 1) * growth;
  }
  /// Number of 3x3 convolutions from input to output; also the receptive
  /// radius of the whole network in pixels.
  int conv_depth() const {
    return 2 + num_rrdb * dense_blocks_per_rrdb * dense_layers_per_block;
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Location of one convolution inside the flat parameter vector.
struct ConvSlot {
  int in_channels = 0;
  int out_channels = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

/// Deterministic mapping from a NetConfig to named tensors in one flat buffer.
class ParamLayout {
 public:
  explicit ParamLayout(const NetConfig& cfg) {
    head_ = add_conv("head", cfg.in_channels, cfg.base_width);
    dense_.resize(cfg.num_rrdb);
    for (int r = 0; r < cfg.num_rrdb; ++r) {
      dense_[r].resize(cfg.dense_blocks_per_rrdb);
      for (int b = 0; b < cfg.dense_blocks_per_rrdb; ++b) {
        for (int l = 0; l < cfg.dense_layers_per_block; ++l) {
          const bool last = l + 1 == cfg.dense_layers_per_block;
          const std::string prefix = "rrdb" + std::to_string(r) + ".db" +
                                     std::to_string(b) + ".conv" +
                                     std::to_string(l);
          dense_[r][b].push_back(
              add_conv(prefix, cfg.base_width + l * cfg.growth,
                       last ? cfg.base_width : cfg.growth));
        }
      }
    }
    tail_ = add_conv("tail", cfg.base_width, cfg.in_channels);
  }

  const std::vector<ParamInfo>& tensors() const { return tensors_; }
  std::size_t total() const { return total_; }
  const ConvSlot& head() const { return head_; }
  const ConvSlot& tail() const { return tail_; }
  const std::vector<ConvSlot>& dense_block(int rrdb, int block) const {
    return dense_[rrdb][block];
  }

  const ParamInfo& find(const std::string& name) const {
    for (const auto& info : tensors_) {
      if (info.name == name) return info;
    }
    fail(ErrorKind::kUsage, "unknown parameter tensor '" + name + "'");
  }

 private:
  ConvSlot add_conv(const std::string& prefix, int in, int out) {
    ConvSlot slot{in, out, 0, 0};
    slot.weight_offset = add(prefix + ".weight", {out, in, 3, 3});
    slot.bias_offset = add(prefix + ".bias", {out});
    return slot;
  }

  std::size_t add(std::string name, std::vector<int> shape) {
    std::size_t size = 1;
    for (int d : shape) size *= static_cast<std::size_t>(d);
    tensors_.push_back({std::move(name), std::move(shape), total_, size});
    total_ += size;
    return total_ - size;
  }

  std::vector<ParamInfo> tensors_;
  std::size_t total_ = 0;
  ConvSlot head_;
  ConvSlot tail_;
  std::vector<std::vector<std::vector<ConvSlot>>> dense_;
};

template <typename T>
detail::ConvView<T> conv_view(const ConvSlot& slot, std::span<const T> params) {
  return {params.data() + slot.weight_offset, params.data() + slot.bias_offset,
          slot.in_channels, slot.out_channels};
}

template <typename T>
detail::ConvGrad<T> conv_grad(const ConvSlot& slot, std::span<T> grads) {
  return {grads.data() + slot.weight_offset, grads.data() + slot.bias_offset};
}

/// Parameters of one dense block (its convs in recursion order).
template <typename T>
struct DenseBlockView {
  std::vector<detail::ConvView<T>> convs;
};

template <typename T>
struct RrdbView {
  std::vector<DenseBlockView<T>> blocks;
};

/// Head conv -> LeakyReLU -> RRDB chain -> tail conv -> global skip -> clip.
template <typename T>
class PostProcNet {
 public:
  using Scalar = T;

  explicit PostProcNet(const NetConfig& config)
      : config_(config), layout_((config.validate(), config)),
        params_(layout_.total(), T(0)) {}

  const NetConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<const T> parameters() const { return params_; }
  std::span<T> mutable_parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<const T> tensor(const std::string& name) const {
    const auto& info = layout_.find(name);
    return {params_.data() + info.offset, info.size};
  }
  std::span<T> mutable_tensor(const std::string& name) {
    const auto& info = layout_.find(name);
    return {params_.data() + info.offset, info.size};
  }

  DenseBlockView<T> dense_block(int rrdb, int block) const {
    DenseBlockView<T> view;
    for (const auto& slot : layout_.dense_block(rrdb, block)) {
      view.convs.push_back(conv_view<T>(slot, params_));
    }
    return view;
  }

  RrdbView<T> rrdb(int index) const {
    RrdbView<T> view;
    for (int b = 0; b < config_.dense_blocks_per_rrdb; ++b) {
      view.blocks.push_back(dense_block(index, b));
    }
    return view;
  }

  friend bool operator==(const PostProcNet& a, const PostProcNet& b) {
    return a.config_ == b.config_ && a.params_ == b.params_;
  }

 private:
  NetConfig config_;
  ParamLayout layout_;
  std::vector<T> params_;
};

/// Uniform double in [0,1) from the raw 64-bit engine output, so parameter
/// streams do not depend on the standard library's distribution code.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
PostProcNet<T> build_network(const NetConfig& config, std::uint64_t seed) {
  PostProcNet<T> net(config);
  std::mt19937_64 rng(seed);
  auto params = net.mutable_parameters();
  auto init_conv = [&](const ConvSlot& slot) {
    const double bound =
        0.1 * std::sqrt(1.0 / static_cast<double>(slot.in_channels * 9));
    const std::size_t count =
        static_cast<std::size_t>(slot.out_channels) * slot.in_channels * 9;
    for (std::size_t i = 0; i < count; ++i) {
      params[slot.weight_offset + i] =
          static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * bound);
    }
  };
  const auto& layout = net.layout();
  init_conv(layout.head());
  for (int r = 0; r < config.num_rrdb; ++r) {
    for (int b = 0; b < config.dense_blocks_per_rrdb; ++b) {
      for (const auto& slot : layout.dense_block(r, b)) init_conv(slot);
    }
  }
  // Tail conv stays zero: the fresh network is an exact identity.
  return net;
}

namespace detail {

template <typename T>
struct DenseBlockCache {
  Tensor<T> dense;  // [x, y_1 .. y_{L-1}] after activation
};

/// Runs one dense block on `x` (base_width channels). When `cache` is given
/// the concatenation buffer is retained for the backward pass.
template <typename T>
Tensor<T> dense_block_run(const DenseBlockView<T>& block, const NetConfig& cfg,
                          const Tensor<T>& x, DenseBlockCache<T>* cache,
                          std::vector<T>& col) {
  const int base = cfg.base_width;
  if (x.channels() != base) {
    fail(ErrorKind::kShape, "dense block expects " + std::to_string(base) +
                                " channels, got " +
                                std::to_string(x.channels()));
  }
  const int layers = static_cast<int>(block.convs.size());
  const int total = cfg.dense_channels();
  const Geometry g{x.batch(), x.height(), x.width()};
  const std::size_t row = g.row();
  const T slope = static_cast<T>(cfg.leaky_slope);

  Tensor<T> dense(total, x.batch(), x.height(), x.width());
  std::copy(x.values().begin(), x.values().end(), dense.data());
  col.resize(static_cast<std::size_t>(total) * 9 * row);
  im2col(dense.data(), 0, base, g, col.data());

  int in_c = base;
  for (int l = 0; l + 1 < layers; ++l) {
    T* out = dense.data() + static_cast<std::size_t>(in_c) * row;
    conv_forward(block.convs[l], col.data(), g, out);
    leaky_relu_inplace(std::span<T>(out, row * cfg.growth), slope);
    im2col(dense.data(), in_c, in_c + cfg.growth, g, col.data());
    in_c += cfg.growth;
  }
  Tensor<T> out(base, x.batch(), x.height(), x.width());
  conv_forward(block.convs[layers - 1], col.data(), g, out.data());
  const T scale = static_cast<T>(cfg.residual_scale);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] + scale * ov[i];
  if (cache != nullptr) cache->dense = std::move(dense);
  return out;
}

/// Backward of dense_block_run. Accumulates parameter gradients and returns
/// the gradient w.r.t. the block input.
template <typename T>
Tensor<T> dense_block_backward(const DenseBlockView<T>& block,
                               const std::vector<ConvSlot>& slots,
                               const NetConfig& cfg,
                               const DenseBlockCache<T>& cache,
                               const Tensor<T>& out_grad, std::span<T> grads,
                               std::vector<T>& col,
                               std::vector<T>& col_grad) {
  const int base = cfg.base_width;
  const int layers = static_cast<int>(block.convs.size());
  const int total = cfg.dense_channels();
  const Tensor<T>& dense = cache.dense;
  const Geometry g{dense.batch(), dense.height(), dense.width()};
  const std::size_t row = g.row();
  const T slope = static_cast<T>(cfg.leaky_slope);
  const T scale = static_cast<T>(cfg.residual_scale);

  col.resize(static_cast<std::size_t>(total) * 9 * row);
  im2col(dense.data(), 0, total, g, col.data());
  col_grad.assign(static_cast<std::size_t>(total) * 9 * row, T(0));

  std::vector<T> dz(out_grad.values().begin(), out_grad.values().end());
  for (T& v : dz) v *= scale;
  conv_backward(block.convs[layers - 1], col.data(), dz.data(), g,
                conv_grad(slots[layers - 1], grads), col_grad.data());

  Tensor<T> dense_grad(total, dense.batch(), dense.height(), dense.width());
  for (int l = layers - 2; l >= 0; --l) {
    const int in_c = base + l * cfg.growth;
    col2im_add(col_grad.data(), in_c, in_c + cfg.growth, g, dense_grad.data());
    T* dy = dense_grad.data() + static_cast<std::size_t>(in_c) * row;
    const T* y = dense.data() + static_cast<std::size_t>(in_c) * row;
    const std::size_t count = row * cfg.growth;
    leaky_relu_backward_inplace(std::span<const T>(y, count),
                                std::span<T>(dy, count), slope);
    conv_backward(block.convs[l], col.data(), dy, g,
                  conv_grad(slots[l], grads), col_grad.data());
  }
  col2im_add(col_grad.data(), 0, base, g, dense_grad.data());

  Tensor<T> in_grad(base, dense.batch(), dense.height(), dense.width());
  auto ig = in_grad.values();
  auto og = out_grad.values();
  for (std::size_t i = 0; i < ig.size(); ++i) ig[i] = dense_grad.data()[i] + og[i];
  return in_grad;
}

template <typename T>
struct RrdbCache {
  std::vector<DenseBlockCache<T>> blocks;
};

template <typename T>
Tensor<T> rrdb_run(const RrdbView<T>& rrdb, const NetConfig& cfg,
                   const Tensor<T>& x, RrdbCache<T>* cache,
                   std::vector<T>& col) {
  if (cache != nullptr) cache->blocks.resize(rrdb.blocks.size());
  Tensor<T> h = x;
  for (std::size_t b = 0; b < rrdb.blocks.size(); ++b) {
    h = dense_block_run(rrdb.blocks[b], cfg, h,
                        cache != nullptr ? &cache->blocks[b] : nullptr, col);
  }
  // x + s * (chain(x) - x): zero weights make every level an identity.
  const T scale = static_cast<T>(cfg.residual_scale);
  auto hv = h.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < hv.size(); ++i) {
    hv[i] = xv[i] + scale * (hv[i] - xv[i]);
  }
  return h;
}

}  // namespace detail

/// One dense block: y_k = leaky(conv_k([x, y_1..y_{k-1}])) for k < L,
/// y_L = conv_L(...), output x + residual_scale * y_L.
template <typename T>
Tensor<T> dense_block_forward(const DenseBlockView<T>& block,
                              const NetConfig& cfg, const Tensor<T>& x) {
  std::vector<T> col;
  return detail::dense_block_run<T>(block, cfg, x, nullptr, col);
}

/// Chain of dense blocks wrapped in an outer scaled residual.
template <typename T>
Tensor<T> rrdb_forward(const RrdbView<T>& rrdb, const NetConfig& cfg,
                       const Tensor<T>& x) {
  std::vector<T> col;
  return detail::rrdb_run<T>(rrdb, cfg, x, nullptr, col);
}

/// Activations retained by forward_train for backward.
template <typename T>
struct ForwardTape {
  Tensor<T> input;
  Tensor<T> head_out;                 // after LeakyReLU
  std::vector<detail::RrdbCache<T>> rrdbs;
  Tensor<T> trunk_out;                // tail conv input
  Tensor<T> pre_clip;                 // input + residual
};

/// Forward over a batch; records a tape when `tape` is non-null.
template <typename T>
Tensor<T> forward_batch(const PostProcNet<T>& net, const Tensor<T>& input,
                        ForwardTape<T>* tape = nullptr) {
  const NetConfig& cfg = net.config();
  if (input.channels() != cfg.in_channels) {
    fail(ErrorKind::kShape, "input has " + std::to_string(input.channels()) +
                                " channels, network expects " +
                                std::to_string(cfg.in_channels));
  }
  if (input.height() < 1 || input.width() < 1 || input.batch() < 1) {
    fail(ErrorKind::kShape, "empty input " + input.shape_string());
  }
  const auto params = net.parameters();
  const auto& layout = net.layout();
  const detail::Geometry g{input.batch(), input.height(), input.width()};
  const T slope = static_cast<T>(cfg.leaky_slope);
  std::vector<T> col(static_cast<std::size_t>(cfg.in_channels) * 9 * g.row());

  detail::im2col(input.data(), 0, cfg.in_channels, g, col.data());
  Tensor<T> h(cfg.base_width, input.batch(), input.height(), input.width());
  detail::conv_forward(conv_view<T>(layout.head(), params), col.data(), g,
                       h.data());
  detail::leaky_relu_inplace(h.values(), slope);

  if (tape != nullptr) {
    tape->input = input;
    tape->head_out = h;
    tape->rrdbs.assign(cfg.num_rrdb, {});
  }
  for (int r = 0; r < cfg.num_rrdb; ++r) {
    h = detail::rrdb_run(net.rrdb(r), cfg, h,
                         tape != nullptr ? &tape->rrdbs[r] : nullptr, col);
  }

  col.resize(static_cast<std::size_t>(cfg.base_width) * 9 * g.row());
  detail::im2col(h.data(), 0, cfg.base_width, g, col.data());
  Tensor<T> out(cfg.in_channels, input.batch(), input.height(), input.width());
  detail::conv_forward(conv_view<T>(layout.tail(), params), col.data(), g,
                       out.data());
  auto ov = out.values();
  auto iv = input.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += iv[i];
  if (tape != nullptr) {
    tape->trunk_out = std::move(h);
    tape->pre_clip = out;
  }
  for (T& v : ov) v = std::clamp(v, T(0), T(1));
  return out;
}

/// Backpropagates d(loss)/d(output) through a recorded forward pass and
/// accumulates d(loss)/d(parameters) into `grads` (same layout as parameters).
template <typename T>
void backward_batch(const PostProcNet<T>& net, const ForwardTape<T>& tape,
                    const Tensor<T>& out_grad, std::span<T> grads) {
  const NetConfig& cfg = net.config();
  if (!out_grad.same_shape(tape.pre_clip)) {
    fail(ErrorKind::kShape, "output gradient shape " +
                                out_grad.shape_string() + " does not match " +
                                tape.pre_clip.shape_string());
  }
  if (grads.size() != net.parameter_count()) {
    fail(ErrorKind::kShape, "gradient buffer size mismatch");
  }
  const auto params = net.parameters();
  const auto& layout = net.layout();
  const detail::Geometry g{out_grad.batch(), out_grad.height(),
                           out_grad.width()};
  const std::size_t row = g.row();
  const T slope = static_cast<T>(cfg.leaky_slope);
  const T scale = static_cast<T>(cfg.residual_scale);

  // Clip passes gradient on the closed interval [0,1].
  std::vector<T> dres(out_grad.values().begin(), out_grad.values().end());
  auto pre = tape.pre_clip.values();
  for (std::size_t i = 0; i < dres.size(); ++i) {
    if (pre[i] < T(0) || pre[i] > T(1)) dres[i] = T(0);
  }

  std::vector<T> col(static_cast<std::size_t>(cfg.base_width) * 9 * row);
  std::vector<T> col_grad(col.size(), T(0));
  detail::im2col(tape.trunk_out.data(), 0, cfg.base_width, g, col.data());
  detail::conv_backward(conv_view<T>(layout.tail(), params), col.data(),
                        dres.data(), g, conv_grad<T>(layout.tail(), grads),
                        col_grad.data());
  Tensor<T> dh(cfg.base_width, g.batch, g.height, g.width);
  detail::col2im_add(col_grad.data(), 0, cfg.base_width, g, dh.data());

  for (int r = cfg.num_rrdb - 1; r >= 0; --r) {
    const auto rrdb = net.rrdb(r);
    // out = (1-s) x + s chain(x)
    Tensor<T> dchain = dh;
    for (T& v : dchain.values()) v *= scale;
    for (int b = cfg.dense_blocks_per_rrdb - 1; b >= 0; --b) {
      dchain = detail::dense_block_backward(
          rrdb.blocks[b], layout.dense_block(r, b), cfg,
          tape.rrdbs[r].blocks[b], dchain, grads, col, col_grad);
    }
    auto dv = dh.values();
    auto cv = dchain.values();
    for (std::size_t i = 0; i < dv.size(); ++i) {
      dv[i] = (T(1) - scale) * dv[i] + cv[i];
    }
  }

  detail::leaky_relu_backward_inplace(tape.head_out.values(), dh.values(),
                                      slope);
  col.resize(static_cast<std::size_t>(cfg.in_channels) * 9 * row);
  detail::im2col(tape.input.data(), 0, cfg.in_channels, g, col.data());
  detail::conv_backward(conv_view<T>(layout.head(), params), col.data(),
                        dh.data(), g, conv_grad<T>(layout.head(), grads),
                        static_cast<T*>(nullptr));
}

/// Default tile edge for single-frame inference. Tiles carry a halo equal to
/// the receptive radius, so tiled output equals whole-frame output.
inline constexpr int kInferenceTile = 96;

/// Post-processes one frame; output has the input's shape and lies in [0,1].
template <typename T>
Tensor<T> forward(const PostProcNet<T>& net, const Tensor<T>& frame,
                  int tile = kInferenceTile) {
  if (frame.batch() != 1) {
    fail(ErrorKind::kShape, "forward expects a single frame, got " +
                                frame.shape_string());
  }
  if (frame.channels() != net.config().in_channels) {
    fail(ErrorKind::kShape, "frame has " + std::to_string(frame.channels()) +
                                " channels, network expects " +
                                std::to_string(net.config().in_channels));
  }
  const int halo = net.config().conv_depth();
  if (tile <= 0 || (frame.height() <= tile + 2 * halo &&
                    frame.width() <= tile + 2 * halo)) {
    return forward_batch(net, frame);
  }
  Tensor<T> out(frame.channels(), 1, frame.height(), frame.width());
  for (int y0 = 0; y0 < frame.height(); y0 += tile) {
    for (int x0 = 0; x0 < frame.width(); x0 += tile) {
      const int y1 = std::min(frame.height(), y0 + tile);
      const int x1 = std::min(frame.width(), x0 + tile);
      const int ty0 = std::max(0, y0 - halo);
      const int tx0 = std::max(0, x0 - halo);
      const int ty1 = std::min(frame.height(), y1 + halo);
      const int tx1 = std::min(frame.width(), x1 + halo);
      Tensor<T> patch =
          forward_batch(net, crop(frame, ty0, tx0, ty1 - ty0, tx1 - tx0));
      for (int c = 0; c < frame.channels(); ++c) {
        for (int y = y0; y < y1; ++y) {
          const T* src = &patch(c, y - ty0, x0 - tx0);
          std::copy(src, src + (x1 - x0), &out(c, y, x0));
        }
      }
    }
  }
  return out;
}

}  // namespace vcm
