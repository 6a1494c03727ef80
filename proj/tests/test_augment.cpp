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

#include "mmvit/augment.hpp"
#include "oracles.hpp"

using namespace mmvit;
using namespace mmvit::augment;

namespace {

LabeledExample example(std::int64_t frames, std::int64_t bins, int cls, int classes, std::mt19937_64& rng) {
  LabeledExample e{oracle::random_tensor<float>({1, frames, bins}, rng), std::vector<float>(classes, 0.0f)};
  e.label[static_cast<std::size_t>(cls)] = 1.0f;
  return e;
}

// Frames tagged by value so each output frame can be traced back to its parent.
LabeledExample tagged(std::int64_t frames, std::int64_t bins, float base, std::vector<float> label) {
  std::vector<float> v;
  for (std::int64_t t = 0; t < frames; ++t)
    for (std::int64_t f = 0; f < bins; ++f) v.push_back(base + static_cast<float>(t) + 0.001f * static_cast<float>(f));
  return {Tensor<float>(Shape{1, frames, bins}, std::move(v)), std::move(label)};
}

}  // namespace

TEST(Mixup, Endpoints) {
  std::mt19937_64 rng(1);
  const auto a = example(6, 3, 0, 3, rng), b = example(6, 3, 2, 3, rng);
  const auto same = mixup(a, b, 1.0);
  EXPECT_TRUE(std::equal(same.features.data().begin(), same.features.data().end(), a.features.data().begin()));
  EXPECT_EQ(same.label, a.label);
  LabeledExample two{Tensor<float>::full({1, 2, 2}, 2.0f), {1, 0}}, four{Tensor<float>::full({1, 2, 2}, 4.0f), {0, 1}};
  const auto mid = mixup(two, four, 0.5);
  for (float v : mid.features.data()) EXPECT_EQ(v, 3.0f);
  EXPECT_EQ(mid.label, (std::vector<float>{0.5f, 0.5f}));
}

TEST(Mixup, ElementwiseRecomputation) {
  std::mt19937_64 rng(2);
  const auto a = example(8, 4, 1, 3, rng), b = example(8, 4, 0, 3, rng);
  const auto m = mixup(a, b, 0.3);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_FLOAT_EQ(m.features.data()[i], static_cast<float>(0.3 * a.features.data()[i] + 0.7 * b.features.data()[i]));
  }
  EXPECT_THROW(mixup(a, b, 1.5), ContractError);
}

TEST(Mixup, BetaSamplesAndLambdaTrials) {
  std::mt19937_64 rng(3);
  double mean = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double l = sample_beta(0.5, rng);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
    mean += l;
  }
  EXPECT_NEAR(mean / 10000, 0.5, 0.02);
}

TEST(Cutmix, IdentityAndArithmetic) {
  const auto a = tagged(10, 2, 0.0f, {1, 0}), b = tagged(10, 2, 100.0f, {0, 1});
  const auto same = audio_cutmix(a, b, 1.0, 0);
  EXPECT_TRUE(std::equal(same.features.data().begin(), same.features.data().end(), a.features.data().begin()));
  EXPECT_EQ(same.label, a.label);
  EXPECT_EQ(cutmix_width(10, 0.6), 4);
  const auto m = audio_cutmix(a, b, 0.6, 3);
  int from_a = 0, from_b = 0;
  for (int t = 0; t < 10; ++t) {
    const float v = m.features.data()[t * 2];
    (v >= 100.0f ? from_b : from_a)++;
    EXPECT_EQ(v >= 100.0f, t >= 3 && t < 7);
  }
  EXPECT_EQ(from_a, 6);
  EXPECT_EQ(from_b, 4);
  EXPECT_FLOAT_EQ(m.label[0], 0.6f);
  EXPECT_FLOAT_EQ(m.label[1], 0.4f);
}

TEST(Cutmix, HardCutLabelConservationFrequencyUntouched) {
  std::mt19937_64 rng(4);
  const std::int64_t frames = 24, bins = 5;
  const auto a = tagged(frames, bins, 0.0f, {1, 0, 0}), b = tagged(frames, bins, 1000.0f, {0, 0.25f, 0.75f});
  for (int trial = 0; trial < 10000; ++trial) {
    const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto m = audio_cutmix(a, b, lambda, rng);
    std::int64_t from_b = 0;
    for (std::int64_t t = 0; t < frames; ++t) {
      const float* row = m.features.data().data() + t * bins;
      const bool is_b = row[0] >= 1000.0f;
      const float* parent = (is_b ? b : a).features.data().data() + t * bins;
      for (std::int64_t f = 0; f < bins; ++f) ASSERT_EQ(row[f], parent[f]);  // whole frame, every bin, one parent
      from_b += is_b ? 1 : 0;
    }
    ASSERT_EQ(from_b, cutmix_width(frames, lambda));
    float total = 0.0f;
    for (float l : m.label) total += l;
    ASSERT_NEAR(total, 1.0f, 1e-6f);
    ASSERT_NEAR(m.label[0], 1.0 - static_cast<double>(from_b) / frames, 1e-6);
  }
}

TEST(SpecAugment, ZeroWidthsAreIdentity) {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_tensor<float>({1, 8, 4}, rng);
  const auto y = apply_spec_mask(x, SpecMask{3, 0, 2, 0});
  EXPECT_TRUE(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
}

TEST(SpecAugment, MasksStayInBoundsAndUnderCaps) {
  std::mt19937_64 rng(6);
  AugmentConfig cfg;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto m = draw_spec_mask(1024, 128, cfg, rng);
    ASSERT_GE(m.t0, 0);
    ASSERT_GE(m.f0, 0);
    ASSERT_LE(m.time_width, 192);
    ASSERT_LE(m.freq_width, 48);
    ASSERT_LE(m.t0 + m.time_width, 1024);
    ASSERT_LE(m.f0 + m.freq_width, 128);
  }
}

TEST(SpecAugment, AppliedMaskZeroesExactlyTheBands) {
  std::mt19937_64 rng(7);
  auto x = oracle::random_tensor<float>({1, 40, 16}, rng);
  for (auto& v : x.mutable_data()) v = std::abs(v) + 1.0f;
  AugmentConfig cfg;
  cfg.specaug_max_time = 12;
  cfg.specaug_max_freq = 5;
  for (int trial = 0; trial < 2000; ++trial) {
    const auto m = draw_spec_mask(40, 16, cfg, rng);
    const auto y = apply_spec_mask(x, m);
    for (int t = 0; t < 40; ++t)
      for (int f = 0; f < 16; ++f) {
        const bool masked = (t >= m.t0 && t < m.t0 + m.time_width) || (f >= m.f0 && f < m.f0 + m.freq_width);
        ASSERT_EQ(y.data()[t * 16 + f] == 0.0f, masked);
      }
  }
}

TEST(Roll, RotationDefinitionAndPeriodicity) {
  std::vector<float> v(10);
  for (int i = 0; i < 10; ++i) v[i] = static_cast<float>(i);
  const Tensor<float> x(Shape{10, 1}, v);
  const auto r = random_roll(x, 3);
  EXPECT_EQ(std::vector<float>(r.data().begin(), r.data().end()),
            (std::vector<float>{7, 8, 9, 0, 1, 2, 3, 4, 5, 6}));
  for (std::int64_t s : {0, 10, -10}) {
    const auto y = random_roll(x, s);
    EXPECT_TRUE(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
  }
}

TEST(Roll, IsAPermutationOfFrames) {
  std::mt19937_64 rng(8);
  const auto x = oracle::random_tensor<float>({1, 17, 3}, rng);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto y = random_roll(x, rng);
    std::vector<int> seen(17, 0);
    for (int t = 0; t < 17; ++t) {
      int match = -1;
      for (int s = 0; s < 17; ++s) {
        if (std::equal(y.data().begin() + t * 3, y.data().begin() + t * 3 + 3, x.data().begin() + s * 3)) match = s;
      }
      ASSERT_GE(match, 0);
      seen[match]++;
    }
    for (int c : seen) ASSERT_EQ(c, 1);
  }
}

TEST(AugmentBatch, HalfMixupHalfCutmix) {
  std::mt19937_64 data_rng(9);
  std::vector<LabeledExample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(example(16, 8, i % 3, 3, data_rng));
  AugmentConfig cfg;
  cfg.specaug_max_time = 4;
  cfg.specaug_max_freq = 2;
  std::mt19937_64 rng(10);
  AugmentLog log;
  const auto out = augment_batch(batch, cfg, rng, &log);
  ASSERT_EQ(out.size(), 4u);
  int mix = 0, cut = 0;
  for (const auto& r : log.records) {
    mix += r.kind == MixKind::kMixup ? 1 : 0;
    cut += r.kind == MixKind::kCutmix ? 1 : 0;
  }
  EXPECT_EQ(mix, 2);
  EXPECT_EQ(cut, 2);

  cfg.cutmix = false;
  std::mt19937_64 rng2(10);
  augment_batch(batch, cfg, rng2, &log);
  mix = 0;
  int none = 0;
  for (const auto& r : log.records) {
    mix += r.kind == MixKind::kMixup ? 1 : 0;
    none += r.kind == MixKind::kNone ? 1 : 0;
  }
  EXPECT_EQ(mix, 2);
  EXPECT_EQ(none, 2);
}

TEST(AugmentBatch, DeterministicDisabledAndSingleton) {
  std::mt19937_64 data_rng(11);
  std::vector<LabeledExample> batch;
  for (int i = 0; i < 6; ++i) batch.push_back(example(12, 6, i % 2, 2, data_rng));
  AugmentConfig cfg;
  std::mt19937_64 r1(12), r2(12);
  const auto a = augment_batch(batch, cfg, r1), b = augment_batch(batch, cfg, r2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_TRUE(std::equal(a[i].features.data().begin(), a[i].features.data().end(), b[i].features.data().begin()));
    ASSERT_EQ(a[i].label, b[i].label);
  }
  cfg.enabled = false;
  const auto c = augment_batch(batch, cfg, r1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    ASSERT_TRUE(std::equal(c[i].features.data().begin(), c[i].features.data().end(), batch[i].features.data().begin()));
  }
  cfg.enabled = true;
  AugmentLog log;
  const auto one = augment_batch({batch[0]}, cfg, r1, &log);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(log.notices.size(), 1u);
}
