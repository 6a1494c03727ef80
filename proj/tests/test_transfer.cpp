// Copyright (c) 2026 The MMViT Kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "mmvit/model.hpp"
#include "mmvit/transfer.hpp"
#include "oracles.hpp"

using namespace mmvit;
using namespace mmvit::transfer;

namespace {

Checkpoint checkpoint_for(const MMViTConfig& cfg, std::uint64_t seed) {
  Checkpoint c;
  c.fingerprint = cfg.fingerprint();
  c.params = init_params<float>(cfg, seed);
  return c;
}

MMViTConfig tiny_image() {
  auto c = MMViTConfig::tiny();
  c.in_channels = 3;
  c.num_classes = 10;
  return c;
}

Tensor<float> row_table(std::int64_t e, std::int64_t n, const std::function<float(std::int64_t, std::int64_t)>& f) {
  std::vector<float> v;
  for (std::int64_t r = 0; r < e; ++r)
    for (std::int64_t i = 0; i < n; ++i) v.push_back(f(r, i));
  return Tensor<float>(Shape{e, n}, std::move(v));
}

}  // namespace

TEST(ChannelAverage, IdenticalSlicesAndCancellation) {
  std::mt19937_64 rng(1);
  const auto slice = oracle::random_tensor<float>({4, 1, 3, 3}, rng);
  std::vector<float> same, cancel;
  for (int o = 0; o < 4; ++o) {
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 9; ++k) same.push_back(slice.data()[o * 9 + k]);
    for (int k = 0; k < 9; ++k) cancel.push_back(slice.data()[o * 9 + k]);
    for (int k = 0; k < 9; ++k) cancel.push_back(-slice.data()[o * 9 + k]);
    for (int k = 0; k < 9; ++k) cancel.push_back(0.0f);
  }
  const auto a = channel_average(Tensor<float>(Shape{4, 3, 3, 3}, same));
  ASSERT_EQ(a.shape(), (Shape{4, 1, 3, 3}));
  EXPECT_LT(oracle::max_abs_diff(oracle::to_vec(a), oracle::to_vec(slice)), 1e-7);
  const auto z = channel_average(Tensor<float>(Shape{4, 3, 3, 3}, cancel));
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(channel_average(oracle::random_tensor<float>({4, 2, 3, 3}, rng)), TransferError);
}

TEST(ChannelAverage, LinearityAgainstReplicatedInput) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = oracle::random_tensor<double>({6, 3, 9, 9}, rng, 0.1);
    const auto x = oracle::random_tensor<double>({1, 20, 16}, rng);
    const auto avg = channel_average(w.cast<float>()).cast<double>();
    std::vector<double> rgb;
    for (int c = 0; c < 3; ++c) rgb.insert(rgb.end(), x.data().begin(), x.data().end());
    int oh = 0, ow = 0;
    const auto full = oracle::conv2d(rgb, 3, 20, 16, oracle::to_vec(w), 6, 9, 9, nullptr, 2, 2, 4, 4, 1, &oh, &ow);
    const Conv2dOptions opts{2, 2, 4, 4, 1};
    const auto mono = conv2d<double>(x, avg, std::nullopt, opts);
    ASSERT_EQ(mono.numel(), static_cast<std::int64_t>(full.size()));
    for (std::size_t i = 0; i < full.size(); ++i) ASSERT_NEAR(mono.data()[i], full[i] / 3.0, 1e-6);
  }
}

TEST(InterpolatePosenc, IdentityConstantRamp) {
  std::mt19937_64 rng(3);
  PosEncTables src{oracle::random_tensor<float>({8, 112}, rng), oracle::random_tensor<float>({8, 112}, rng),
                   oracle::random_tensor<float>({8, 1}, rng), oracle::random_tensor<float>({8}, rng)};
  const auto same = interpolate_posenc(src, {112, 112}, {112, 112});
  EXPECT_EQ(oracle::to_vec(same.spatial_h), oracle::to_vec(src.spatial_h));
  EXPECT_EQ(oracle::to_vec(same.spatial_w), oracle::to_vec(src.spatial_w));
  EXPECT_EQ(oracle::to_vec(same.temporal), oracle::to_vec(src.temporal));
  ASSERT_TRUE(same.cls.has_value());
  EXPECT_EQ(oracle::to_vec(*same.cls), oracle::to_vec(*src.cls));

  PosEncTables constant{row_table(8, 112, [](auto r, auto) { return 0.25f * static_cast<float>(r); }),
                        row_table(8, 112, [](auto, auto) { return -1.5f; }), row_table(8, 1, [](auto, auto) { return 2.0f; }),
                        std::nullopt};
  const auto c = interpolate_posenc(constant, {112, 112}, {512, 64}, 3);
  ASSERT_EQ(c.spatial_h.shape(), (Shape{8, 512}));
  ASSERT_EQ(c.spatial_w.shape(), (Shape{8, 64}));
  ASSERT_EQ(c.temporal.shape(), (Shape{8, 3}));
  for (std::int64_t r = 0; r < 8; ++r)
    for (std::int64_t i = 0; i < 512; ++i) ASSERT_EQ(c.spatial_h.data()[r * 512 + i], 0.25f * static_cast<float>(r));
  for (float v : c.spatial_w.data()) ASSERT_EQ(v, -1.5f);
  for (float v : c.temporal.data()) ASSERT_EQ(v, 2.0f);

  PosEncTables ramp{row_table(2, 112, [](auto r, auto i) { return static_cast<float>(r + 1) * static_cast<float>(i); }),
                    row_table(2, 112, [](auto, auto i) { return static_cast<float>(i); }),
                    row_table(2, 1, [](auto, auto) { return 0.0f; }), std::nullopt};
  const auto rr = interpolate_posenc(ramp, {112, 112}, {512, 64});
  for (std::int64_t r = 0; r < 2; ++r) {
    const float* row = rr.spatial_h.data().data() + r * 512;
    EXPECT_EQ(row[0], 0.0f);
    EXPECT_EQ(row[511], static_cast<float>(r + 1) * 111.0f);
    for (std::int64_t j = 0; j < 512; ++j) {
      ASSERT_NEAR(row[j], (r + 1) * 111.0 * static_cast<double>(j) / 511.0, 1e-4);
    }
  }
}

TEST(ApplyTransfer, SameConfigCopiesAllButResizedHead) {
  const auto cfg = tiny_image();
  const auto src = checkpoint_for(cfg, 4);
  const auto same = apply_transfer(src, cfg, cfg);
  EXPECT_EQ(same.plan.count(Action::kCopy), same.params.size());
  for (const auto& [name, t] : same.params) EXPECT_EQ(oracle::to_vec(t), oracle::to_vec(src.params.get(name)));

  auto other = cfg;
  other.num_classes = 7;
  const auto res = apply_transfer(src, cfg, other);
  EXPECT_EQ(res.plan.count(Action::kReinitialize), 2u);
  EXPECT_EQ(res.plan.count(Action::kCopy), res.params.size() - 2);
  EXPECT_EQ(res.params.get("head.weight").shape(), (Shape{other.embed_dim * 8, 7}));
  for (float b : res.params.get("head.bias").data()) EXPECT_EQ(b, 0.0f);

  const auto again = apply_transfer(Checkpoint{kCheckpointVersion, other.fingerprint(), res.params, {}}, other, other);
  for (const auto& [name, t] : again.params) EXPECT_EQ(oracle::to_vec(t), oracle::to_vec(res.params.get(name)));
}

TEST(ApplyTransfer, ImageToAudioPlan) {
  const auto img = MMViTConfig::image(), aud = MMViTConfig::audio();
  const auto res = apply_transfer(checkpoint_for(img, 5), img, aud);
  const auto& plan = res.plan;
  EXPECT_EQ(plan.count(Action::kChannelAverage), 2u);
  EXPECT_EQ(plan.count(Action::kReinitialize), 2u);
  EXPECT_EQ(plan.count(Action::kDrop), 2u);
  EXPECT_EQ(plan.count(Action::kCopy) + plan.count(Action::kChannelAverage) + plan.count(Action::kInterpolate) +
                plan.count(Action::kReinitialize),
            parameter_specs(aud).size());
  EXPECT_EQ(res.params.total_numel(), count_params(aud));
  std::map<std::string, PlanEntry> by_name;
  for (const auto& e : plan.entries) {
    if (e.action != Action::kDrop) by_name[e.name] = e;
  }
  EXPECT_EQ(by_name.at("embed.view0.proj.weight").action, Action::kChannelAverage);
  EXPECT_EQ(by_name.at("embed.view1.proj.weight").action, Action::kChannelAverage);
  const auto expect_interp = [&](const std::string& n, Shape from, Shape to) {
    const auto& e = by_name.at(n);
    EXPECT_EQ(e.action, Action::kInterpolate) << n;
    EXPECT_EQ(e.from, from) << n;
    EXPECT_EQ(e.to, to) << n;
  };
  expect_interp("embed.view0.pos.spatial_h", {96, 112}, {96, 512});
  expect_interp("embed.view0.pos.spatial_w", {96, 112}, {96, 64});
  expect_interp("embed.view1.pos.spatial_h", {96, 56}, {96, 256});
  expect_interp("embed.view1.pos.spatial_w", {96, 56}, {96, 32});
  EXPECT_EQ(plan.count(Action::kInterpolate), 4u);
  EXPECT_EQ(by_name.at("embed.view0.pos.cls").action, Action::kCopy);
  EXPECT_NE(plan.audit().find("interpolate"), std::string::npos);
}

TEST(ApplyTransfer, DivergentScheduleNamesTheField) {
  const auto img = tiny_image();
  auto dst = MMViTConfig::tiny();
  dst.heads = {1, 2, 4, 4};
  try {
    apply_transfer(checkpoint_for(img, 6), img, dst);
    FAIL() << "expected TransferError";
  } catch (const TransferError& e) {
    EXPECT_NE(std::string(e.what()).find("model.heads"), std::string::npos) << e.what();
  }
  auto wrong = checkpoint_for(img, 6);
  wrong.fingerprint ^= 1;
  EXPECT_THROW(apply_transfer(wrong, img, MMViTConfig::tiny()), TransferError);
}

TEST(ApplyTransfer, TransferredModelRuns) {
  auto img = tiny_image();
  img.input_h = img.input_w = 64;
  const auto dst = MMViTConfig::tiny();
  const auto res = apply_transfer(checkpoint_for(img, 7), img, dst);
  const MMViT<float> model(dst, res.params);
  std::mt19937_64 rng(8);
  const auto logits = model.forward(oracle::random_tensor<float>({1, 64, 32}, rng));
  ASSERT_EQ(logits.shape(), (Shape{4}));
  for (float v : logits.data()) EXPECT_TRUE(std::isfinite(v));
}
