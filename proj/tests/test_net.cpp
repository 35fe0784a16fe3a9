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
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace vcm {
namespace {

using testing::random_tensor;
using testing::TempDir;

NetConfig tiny_config() {
  NetConfig c;
  c.base_width = 4;
  c.growth = 2;
  c.num_rrdb = 1;
  c.dense_blocks_per_rrdb = 2;
  c.dense_layers_per_block = 3;
  return c;
}

TEST(NetConfig, DefaultParameterCountMatchesClosedForm) {
  // head 3*64*9+64, tail 64*3*9+3, each dense block
  // 9*32*(64+96+128+160) + 9*64*192 + 4*32 + 64 = 239808, nine blocks.
  const PostProcNet<float> net(NetConfig{});
  EXPECT_EQ(net.parameter_count(), 1792u + 9u * 239808u + 1731u);
  EXPECT_EQ(net.parameter_count(), 2161795u);
}

TEST(NetConfig, ParameterCountFormulaHoldsAcrossConfigs) {
  for (int b : {1, 3, 8}) {
    for (int g : {1, 4}) {
      for (int L : {1, 2, 5}) {
        NetConfig c;
        c.base_width = b;
        c.growth = g;
        c.dense_layers_per_block = L;
        c.num_rrdb = 2;
        c.dense_blocks_per_rrdb = 3;
        std::size_t block = 0;
        for (int l = 0; l < L; ++l) {
          const int out = l + 1 == L ? b : g;
          block += static_cast<std::size_t>(9 * (b + l * g) * out + out);
        }
        const std::size_t expected = (9 * 3 * b + b) + 6 * block + (9 * b * 3 + 3);
        EXPECT_EQ(PostProcNet<float>(c).parameter_count(), expected) << b << " " << g << " " << L;
      }
    }
  }
}

TEST(NetConfig, ValidationNamesTheField) {
  NetConfig c;
  c.growth = 0;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(std::string(e.what()).find("growth"), std::string::npos);
  }
  c = NetConfig{};
  c.residual_scale = 0;
  EXPECT_THROW(c.validate(), Error);
  c = NetConfig{};
  c.leaky_slope = 1.0;
  EXPECT_THROW(PostProcNet<float>{c}, Error);
}

TEST(NetConfig, ParameterNamesAreStable) {
  const PostProcNet<float> net(tiny_config());
  const auto& t = net.layout().tensors();
  EXPECT_EQ(t.front().name, "head.weight");
  EXPECT_EQ(t[2].name, "rrdb0.db0.conv0.weight");
  EXPECT_EQ(t.back().name, "tail.bias");
  EXPECT_EQ(net.layout().find("rrdb0.db1.conv2.weight").shape, (std::vector<int>{4, 8, 3, 3}));
}

TEST(Network, FreshNetworkIsBitExactIdentity) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto net = build_network<float>(tiny_config(), seed);
    const auto x = random_tensor<float>(3, 2, 11, 13, seed + 10);
    EXPECT_EQ(forward_batch(net, x), x);
  }
  const auto net = build_network<float>(NetConfig{}, 5);
  const Frame f = testing::random_u8_frame(20, 24, 9);
  EXPECT_EQ(forward(net, f), f);
}

TEST(Network, TailStartsAtZeroOthersDoNot) {
  const auto net = build_network<double>(tiny_config(), 3);
  for (double v : net.tensor("tail.weight")) EXPECT_EQ(v, 0.0);
  double mag = 0;
  for (double v : net.tensor("head.weight")) mag += std::abs(v);
  EXPECT_GT(mag, 0.0);
  const double bound = 0.1 * std::sqrt(1.0 / 27.0);
  for (double v : net.tensor("head.weight")) EXPECT_LE(std::abs(v), bound);
  EXPECT_EQ(build_network<double>(tiny_config(), 3), net);
  EXPECT_FALSE(build_network<double>(tiny_config(), 4) == net);
}

// 1x1 spatial input: only the centre tap (index 4) of each 3x3 kernel sees
// data, so every conv is a scalar affine map.
double leaky(double v, double s) { return v > 0 ? v : s * v; }

TEST(DenseBlock, MatchesScalarRecursion) {
  NetConfig c;
  c.in_channels = 1;
  c.base_width = 1;
  c.growth = 1;
  c.num_rrdb = 1;
  c.dense_blocks_per_rrdb = 1;
  c.dense_layers_per_block = 5;
  c.residual_scale = 0.2;
  c.leaky_slope = 0.2;
  PostProcNet<double> net(c);
  // conv_l takes l+1 inputs; weights w[l][j] on input j, bias b[l].
  const double w[5][5] = {{0.5}, {-0.3, 0.8}, {0.2, -0.4, 0.6}, {0.1, 0.3, -0.5, 0.7}, {0.4, -0.2, 0.3, 0.5, -0.6}};
  const double b[5] = {0.05, -0.1, 0.02, 0.0, 0.03};
  for (int l = 0; l < 5; ++l) {
    auto wt = net.mutable_tensor("rrdb0.db0.conv" + std::to_string(l) + ".weight");
    for (int j = 0; j <= l; ++j) wt[j * 9 + 4] = w[l][j];
    net.mutable_tensor("rrdb0.db0.conv" + std::to_string(l) + ".bias")[0] = b[l];
  }
  const double x = 0.7;
  // Hand recursion: y1 = leaky(0.5*0.7+0.05) = 0.4
  // y2 = leaky(-0.21 + 0.32 - 0.1) = 0.01
  // y3 = leaky(0.14 - 0.16 + 0.006 + 0.02) = 0.006
  // y4 = leaky(0.07 + 0.12 - 0.005 + 0.0042) = 0.1892
  // y5 = 0.28 - 0.08 + 0.003 + 0.003 - 0.11352 + 0.03 = 0.12248 (no activation)
  const double y5 = 0.12248;
  Tensor<double> in(1, 1, 1, 1, x);
  const auto out = dense_block_forward(net.dense_block(0, 0), c, in);
  EXPECT_NEAR(out(0, 0, 0), x + 0.2 * y5, 1e-12);

  // Same recursion evaluated step by step, with a negative pre-activation.
  const double x2 = -0.9;
  double ys[6] = {x2};
  for (int l = 0; l < 5; ++l) {
    double acc = b[l];
    for (int j = 0; j <= l; ++j) acc += w[l][j] * ys[j];
    ys[l + 1] = l < 4 ? leaky(acc, 0.2) : acc;
  }
  Tensor<double> in2(1, 1, 1, 1, x2);
  EXPECT_NEAR(dense_block_forward(net.dense_block(0, 0), c, in2)(0, 0, 0), x2 + 0.2 * ys[5], 1e-12);

  // RRDB with one block: x + s*(block(x) - x)
  const double db = x + 0.2 * y5;
  EXPECT_NEAR(rrdb_forward(net.rrdb(0), c, in)(0, 0, 0), x + 0.2 * (db - x), 1e-12);
}

TEST(DenseBlock, ZeroWeightsGiveIdentity) {
  NetConfig c = tiny_config();
  PostProcNet<float> net(c);
  const auto x = random_tensor<float>(4, 1, 5, 5, 1, -1, 1);
  EXPECT_EQ(dense_block_forward(net.dense_block(0, 1), c, x), x);
  EXPECT_EQ(rrdb_forward(net.rrdb(0), c, x), x);
}

TEST(Network, ScalarChainMatchesHandEvaluation) {
  NetConfig c;
  c.in_channels = 1;
  c.base_width = 1;
  c.growth = 1;
  c.num_rrdb = 1;
  c.dense_blocks_per_rrdb = 1;
  c.dense_layers_per_block = 1;
  PostProcNet<double> net(c);
  net.mutable_tensor("head.weight")[4] = 2.0;
  net.mutable_tensor("head.bias")[0] = -0.5;
  net.mutable_tensor("rrdb0.db0.conv0.weight")[4] = 0.5;
  net.mutable_tensor("rrdb0.db0.conv0.bias")[0] = 0.1;
  net.mutable_tensor("tail.weight")[4] = -0.25;
  net.mutable_tensor("tail.bias")[0] = 0.05;
  // x=0.4: head 0.3 -> dense 0.3+0.2*(0.25)=0.35 -> rrdb 0.3+0.2*0.05=0.31
  // tail -0.0775+0.05=-0.0275 -> 0.4-0.0275 = 0.3725
  Tensor<double> x(1, 1, 1, 1, 0.4);
  EXPECT_NEAR(forward_batch(net, x)(0, 0, 0), 0.3725, 1e-12);
  // x=0.1: head leaky(-0.3)=-0.06 -> dense -0.06+0.2*(0.07)=-0.046
  // rrdb -0.06+0.2*0.014=-0.0572 -> tail 0.0143+0.05=0.0643 -> 0.1643
  x(0, 0, 0) = 0.1;
  EXPECT_NEAR(forward_batch(net, x)(0, 0, 0), 0.1643, 1e-12);
  // Clipping: large positive residual.
  net.mutable_tensor("tail.bias")[0] = 5.0;
  EXPECT_EQ(forward_batch(net, x)(0, 0, 0), 1.0);
}

TEST(Network, OutputIsClippedAndShapePreserved) {
  auto net = build_network<float>(tiny_config(), 1);
  testing::randomize(net, 2, 0.5);
  const auto x = random_tensor<float>(3, 1, 9, 7, 3);
  const auto y = forward(net, x);
  EXPECT_TRUE(y.same_shape(x));
  for (float v : y.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Network, RejectsWrongChannelCount) {
  const auto net = build_network<float>(tiny_config(), 1);
  try {
    forward(net, random_tensor<float>(1, 1, 4, 4, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(Network, TiledInferenceMatchesWholeFrame) {
  auto net = build_network<double>(tiny_config(), 1);
  testing::randomize(net, 7, 0.3);
  const auto x = random_tensor<double>(3, 1, 41, 37, 4);
  const auto whole = forward(net, x, 0);
  const auto tiled = forward(net, x, 8);
  ASSERT_TRUE(whole.same_shape(tiled));
  for (std::size_t i = 0; i < whole.size(); ++i) EXPECT_NEAR(whole.values()[i], tiled.values()[i], 1e-12);
}

TEST(Network, BatchedForwardMatchesPerItem) {
  auto net = build_network<double>(tiny_config(), 1);
  testing::randomize(net, 8, 0.3);
  const auto x = random_tensor<double>(3, 3, 6, 5, 5);
  const auto y = forward_batch(net, x);
  for (int n = 0; n < 3; ++n) {
    const auto yi = forward_batch(net, batch_item(x, n));
    for (std::size_t i = 0; i < yi.size(); ++i) EXPECT_NEAR(yi.values()[i], batch_item(y, n).values()[i], 1e-12);
  }
}

// d mean(forward(net, I)) / d theta against central differences, 64-bit.
TEST(Network, GradientMatchesFiniteDifferences) {
  NetConfig c = tiny_config();
  auto net = build_network<double>(c, 1);
  testing::randomize(net, 11, 0.15);
  // Inputs well inside (0,1) so the clip acts as identity.
  const auto x = random_tensor<double>(3, 1, 8, 8, 12, 0.3, 0.7);
  ForwardTape<double> tape;
  const auto y = forward_batch(net, x, &tape);
  for (double v : tape.pre_clip.values()) ASSERT_TRUE(v > 0.0 && v < 1.0);
  Tensor<double> dy(y.channels(), y.batch(), y.height(), y.width(), 1.0 / static_cast<double>(y.size()));
  std::vector<double> grads(net.parameter_count(), 0.0);
  backward_batch(net, tape, dy, std::span<double>(grads));

  auto loss = [&] {
    double s = 0;
    const auto out = forward_batch(net, x);
    for (double v : out.values()) s += v;
    return s / static_cast<double>(y.size());
  };
  const double eps = 1e-6;
  auto params = net.mutable_parameters();
  int checked = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + eps;
    const double up = loss();
    params[i] = keep - eps;
    const double down = loss();
    params[i] = keep;
    const double numeric = (up - down) / (2 * eps);
    const double scale = std::max({std::abs(numeric), std::abs(grads[i]), 1e-7});
    EXPECT_LE(std::abs(numeric - grads[i]) / scale, 1e-3) << "param " << i;
    ++checked;
  }
  EXPECT_EQ(checked, static_cast<int>(net.parameter_count()));
}

TEST(Network, BackwardAccumulatesIntoGradBuffer) {
  auto net = build_network<double>(tiny_config(), 1);
  testing::randomize(net, 3, 0.2);
  const auto x = random_tensor<double>(3, 1, 5, 5, 1, 0.3, 0.7);
  ForwardTape<double> tape;
  const auto y = forward_batch(net, x, &tape);
  Tensor<double> dy(y.channels(), 1, 5, 5, 0.1);
  std::vector<double> once(net.parameter_count(), 0.0), twice(net.parameter_count(), 0.0);
  backward_batch(net, tape, dy, std::span<double>(once));
  backward_batch(net, tape, dy, std::span<double>(twice));
  backward_batch(net, tape, dy, std::span<double>(twice));
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, FirstStepMatchesHandEvaluation) {
  // m=0.1, v=0.001, m_hat=1, v_hat=1: theta = -0.1 / (1 + 1e-8)
  std::vector<double> theta{0.0};
  const std::vector<double> g{1.0};
  OptimizerState<double> s(1, 0.1);
  adam_update(std::span<double>(theta), std::span<const double>(g), s);
  EXPECT_NEAR(theta[0], -0.0999999990, 1e-12);
  EXPECT_EQ(s.step, 1);
  // Second identical gradient: m=0.19, v=0.001999, both corrections give 1.
  adam_update(std::span<double>(theta), std::span<const double>(g), s);
  EXPECT_NEAR(theta[0], -0.1999999980, 1e-12);
  EXPECT_NEAR(s.first_moments[0], 0.19, 1e-15);
  EXPECT_NEAR(s.second_moments[0], 0.001999, 1e-15);
}

TEST(Adam, StepSizeIsBoundedByLearningRate) {
  std::vector<double> theta{1.0, -2.0, 0.5};
  OptimizerState<double> s(3, 1e-3);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> g(3);
    for (double& v : g) v = (unit_uniform(rng) - 0.5) * 100;
    const auto before = theta;
    adam_update(std::span<double>(theta), std::span<const double>(g), s);
    for (int i = 0; i < 3; ++i) EXPECT_LE(std::abs(theta[i] - before[i]), 1e-3 * 3.2);
  }
}

TEST(Adam, PartitionedUpdateEqualsFlatUpdate) {
  std::vector<float> flat{0.1f, 0.2f, 0.3f, 0.4f};
  std::vector<float> a{0.1f, 0.2f}, b{0.3f, 0.4f};
  OptimizerState<float> sf(4, 0.01), sa(2, 0.01), sb(2, 0.01);
  for (int k = 0; k < 5; ++k) {
    const std::vector<float> g{0.5f * k, -1.0f, 2.0f, 0.25f};
    adam_update(std::span<float>(flat), std::span<const float>(g), sf);
    adam_update(std::span<float>(a), std::span<const float>(g.data(), 2), sa);
    adam_update(std::span<float>(b), std::span<const float>(g.data() + 2, 2), sb);
  }
  EXPECT_EQ(flat[0], a[0]);
  EXPECT_EQ(flat[1], a[1]);
  EXPECT_EQ(flat[2], b[0]);
  EXPECT_EQ(flat[3], b[1]);
}

TEST(Adam, ShapeMismatchFails) {
  std::vector<float> p(3), g(2);
  OptimizerState<float> s(3);
  try {
    adam_update(std::span<float>(p), std::span<const float>(g), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  auto net = build_network<float>(tiny_config(), 4);
  testing::randomize(net, 5, 0.3);
  OptimizerState<float> opt(net.parameter_count(), 1e-4);
  opt.step = 17;
  for (std::size_t i = 0; i < opt.first_moments.size(); ++i) {
    opt.first_moments[i] = 0.001f * static_cast<float>(i);
    opt.second_moments[i] = 1e-6f * static_cast<float>(i);
  }
  save_checkpoint(dir / "a.vcmc", net, &opt);
  const auto archive = read_checkpoint(dir / "a.vcmc");
  EXPECT_EQ(network_from_archive<float>(archive), net);
  const auto back = optimizer_from_archive<float>(archive);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->step, 17);
  EXPECT_EQ(back->first_moments, opt.first_moments);
  EXPECT_EQ(back->second_moments, opt.second_moments);
  EXPECT_EQ(back->lr, 1e-4);
  // Re-saving the loaded state reproduces the file byte for byte.
  save_checkpoint(dir / "b.vcmc", network_from_archive<float>(archive), &*back);
  EXPECT_EQ(read_file_bytes(dir / "a.vcmc"), read_file_bytes(dir / "b.vcmc"));
  // Inference output identical.
  const auto x = random_tensor<float>(3, 1, 6, 6, 1);
  EXPECT_EQ(forward(load_network<float>(dir / "a.vcmc"), x), forward(net, x));
}

TEST(Checkpoint, CorruptionIsDetected) {
  TempDir dir("ckpt");
  const auto net = build_network<float>(tiny_config(), 4);
  save_checkpoint(dir / "a.vcmc", net);
  auto bytes = read_file_bytes(dir / "a.vcmc");
  auto expect_format = [&](std::vector<std::uint8_t> b) {
    write_file_bytes(dir / "bad.vcmc", b);
    try {
      load_network<float>(dir / "bad.vcmc");
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kFormat) << e.what();
    }
  };
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  expect_format(flipped);
  expect_format({bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 3)});
  auto magic = bytes;
  magic[0] = 'X';
  expect_format(magic);
  try {
    load_network<float>(dir / "missing.vcmc");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIngestion);
  }
}

TEST(Checkpoint, ConfigJsonRejectsUnknownKeys) {
  EXPECT_EQ(net_config_from_json(to_json(tiny_config())), tiny_config());
  try {
    net_config_from_json(nlohmann::json{{"depth", 3}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

}  // namespace
}  // namespace vcm
