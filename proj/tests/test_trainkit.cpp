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

#include <cmath>
#include <filesystem>
#include <map>

#include "mmvit/runconfig.hpp"
#include "mmvit/train.hpp"
#include "oracles.hpp"

using namespace mmvit;
using namespace mmvit::trainkit;
namespace fs = std::filesystem;

namespace {

ParamStore<float> scalar_param(float value, float grad) {
  ParamStore<float> p;
  Tensor<float> t(Shape{1}, {value});
  t.set_requires_grad(true);
  t.zero_grad();
  t.mutable_grad()[0] = grad;
  p.add("theta", t);
  return p;
}

DatasetIndex index_of(const std::vector<std::vector<int>>& labels, int classes) {
  DatasetIndex idx;
  for (std::size_t i = 0; i < labels.size(); ++i) idx.entries.push_back({"x" + std::to_string(i), labels[i]});
  for (int c = 0; c < classes; ++c) idx.class_names.push_back("c" + std::to_string(c));
  idx.reindex();
  return idx;
}

MMViTConfig small_model() {
  auto c = MMViTConfig::tiny();
  c.input_h = 32;
  c.input_w = 32;
  c.embed_dim = 16;
  c.stage_self_counts = {0, 0};
  c.heads = {1, 2};
  c.num_classes = 3;
  return c;
}

}  // namespace

TEST(AdamW, HandComputedFirstStep) {
  auto p = scalar_param(1.0f, 1.0f);
  auto st = OptimizerState::like(p);
  adamw_step(p, st, {0.1, 0.0, 0.9, 0.999, 1e-8});
  EXPECT_NEAR(p.get("theta").data()[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-7);
  EXPECT_EQ(st.step, 1);
}

TEST(AdamW, ZeroGradient) {
  auto p = scalar_param(2.0f, 0.0f);
  auto st = OptimizerState::like(p);
  adamw_step(p, st, {0.1, 0.0});
  EXPECT_EQ(p.get("theta").data()[0], 2.0f);
  adamw_step(p, st, {0.1, 0.01});
  EXPECT_FLOAT_EQ(p.get("theta").data()[0], 2.0f * (1.0f - 0.1f * 0.01f));
}

TEST(AdamW, MissingGradientNamesParameter) {
  ParamStore<float> p;
  p.add("lonely", Tensor<float>(Shape{1}, {1.0f}));
  auto st = OptimizerState::like(p);
  try {
    adamw_step(p, st, {});
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}

TEST(AdamW, ClippingAndSchedule) {
  auto p = scalar_param(0.0f, 3.0f);
  p.add("b", [] {
    Tensor<float> t(Shape{1}, {0.0f});
    t.set_requires_grad(true);
    t.zero_grad();
    t.mutable_grad()[0] = 4.0f;
    return t;
  }());
  EXPECT_NEAR(grad_norm(p), 5.0, 1e-9);
  clip_grad_norm(p, 1.0);
  EXPECT_NEAR(grad_norm(p), 1.0, 1e-6);
  LrSchedule s{1e-3, 0.1, 100};
  EXPECT_LT(s.at(0), 1e-3);
  EXPECT_NEAR(s.at(50), 1e-3, 1e-15);
  EXPECT_NEAR(s.at(99), 1e-3, 1e-15);
}

TEST(Sampler, BalancedClassesAreUniform) {
  const auto idx = index_of({{0}, {1}, {2}, {3}, {0}, {1}, {2}, {3}}, 4);
  std::mt19937_64 rng(1);
  const std::size_t n = 100000;
  std::vector<int> counts(4, 0);
  for (auto i : weighted_sampler(idx, rng, n)) counts[static_cast<std::size_t>(idx.entries[i].labels[0])]++;
  const double p = 0.25, sigma = std::sqrt(n * p * (1 - p));
  for (int c : counts) EXPECT_LT(std::abs(c - n * p), 3 * sigma);
}

TEST(Sampler, RareClassDominatesWeight) {
  const auto idx = index_of({{0}, {0}, {0}, {0}, {0, 1}}, 2);
  EXPECT_EQ(idx.frequencies, (std::vector<std::int64_t>{5, 1}));
  EXPECT_DOUBLE_EQ(idx.weights[4], 1.0 + 1.0 / 5.0);
  EXPECT_DOUBLE_EQ(idx.weights[0], 1.0 / 5.0);
  std::mt19937_64 rng(2);
  int rare = 0;
  for (auto i : weighted_sampler(idx, rng, 20000)) rare += i == 4 ? 1 : 0;
  EXPECT_NEAR(rare / 20000.0, 1.2 / 2.0, 0.02);
  EXPECT_THROW(weighted_sampler(DatasetIndex{}, rng, 1), InputError);
  EXPECT_THROW(index_of({{}}, 2), InputError);
}

TEST(Metrics, HandExampleAndPerfectRanking) {
  EXPECT_NEAR(*average_precision({0.9, 0.8, 0.7}, {1, 0, 1}), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(*average_precision({0.9, 0.1, 0.8}, {1, 0, 1}), 1.0);
  EXPECT_FALSE(average_precision({0.9, 0.1}, {0, 0}).has_value());
}

TEST(Metrics, ExhaustiveAgainstBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> coarse(0, 3);
  for (int n = 1; n <= 8; ++n) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      std::vector<int> labels(n);
      for (int i = 0; i < n; ++i) labels[i] = (mask >> i) & 1;
      for (int draw = 0; draw < 4; ++draw) {
        std::vector<double> scores(n);
        for (auto& s : scores) s = draw < 2 ? coarse(rng) : std::uniform_real_distribution<double>()(rng);
        const auto want = oracle::average_precision(scores, labels);
        const auto got = average_precision(scores, labels);
        ASSERT_EQ(want.has_value(), got.has_value());
        if (want) ASSERT_DOUBLE_EQ(*got, *want);
      }
    }
  }
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + trial % 8, c = 1 + trial % 3;
    ScoreMatrix s(n, c), l(n, c);
    for (auto& v : s.values) v = coarse(rng);
    for (auto& v : l.values) v = coarse(rng) == 0 ? 1.0 : 0.0;
    l.at(0, 0) = 1.0;
    double total = 0;
    int present = 0;
    for (int k = 0; k < c; ++k) {
      std::vector<double> col;
      std::vector<int> lab;
      for (int i = 0; i < n; ++i) {
        col.push_back(s.at(i, k));
        lab.push_back(static_cast<int>(l.at(i, k)));
      }
      if (auto ap = oracle::average_precision(col, lab)) {
        total += *ap;
        ++present;
      }
    }
    const auto rep = mean_average_precision(s, l);
    ASSERT_DOUBLE_EQ(rep.metric, total / present);
    ASSERT_EQ(rep.per_class_ap.size(), static_cast<std::size_t>(c));
  }
}

TEST(Metrics, MonotoneInvariance) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    ScoreMatrix s(12, 3), t(12, 3), l(12, 3);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      s.values[i] = std::normal_distribution<double>()(rng);
      t.values[i] = std::exp(3.0 * s.values[i]) + 7.0;
      l.values[i] = (rng() % 3 == 0) ? 1.0 : 0.0;
    }
    l.at(0, 0) = 1.0;
    ASSERT_DOUBLE_EQ(mean_average_precision(s, l).metric, mean_average_precision(t, l).metric);
  }
}

TEST(Metrics, Top1) {
  ScoreMatrix s(4, 3);
  const std::vector<int> labels = {0, 1, 2, 1};
  for (int i = 0; i < 4; ++i) s.at(i, labels[i]) = 1.0;
  EXPECT_DOUBLE_EQ(top1_accuracy(s, labels), 1.0);
  s.at(3, 1) = 0.0;
  s.at(3, 2) = 1.0;
  EXPECT_DOUBLE_EQ(top1_accuracy(s, labels), 0.75);
  ScoreMatrix flat(3, 3);
  EXPECT_DOUBLE_EQ(top1_accuracy(flat, {1, 2, 1}), 0.0);
}

TEST(RunConfigParse, PresetsKeysAndRoundTrip) {
  const auto rc = RunConfig::parse("# comment\npreset = tiny\n\nmodel.num_classes=6\ntrain.lr=0.002\naugment.cutmix=false\n");
  EXPECT_EQ(rc.model.embed_dim, 48);
  EXPECT_EQ(rc.model.num_classes, 6);
  EXPECT_DOUBLE_EQ(rc.train.optim.lr, 0.002);
  EXPECT_FALSE(rc.train.augment.cutmix);
  const auto again = RunConfig::parse(rc.render());
  EXPECT_EQ(again.render(), rc.render());
  EXPECT_EQ(again.model.fingerprint(), rc.model.fingerprint());
  try {
    RunConfig::parse("model.embed_dimm=3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("embed_dimm"), std::string::npos);
  }
  EXPECT_THROW(RunConfig::parse("train.lr=fast\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("preset=huge\n"), ConfigError);
  EXPECT_EQ(RunConfig::from_preset("audio").model.num_classes, 527);
  EXPECT_EQ(RunConfig::from_preset("image").model.num_classes, 1000);
}

TEST(Manifest, SaveLoadRoundTrip) {
  const auto dir = fs::temp_directory_path() / ("mmvit_manifest_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto idx = index_of({{0}, {1, 2}, {2}}, 3);
  save_manifest(idx, dir / "manifest.tsv");
  const auto back = load_manifest(dir / "manifest.tsv");
  ASSERT_EQ(back.entries.size(), 3u);
  EXPECT_EQ(back.entries[1].labels, (std::vector<int>{1, 2}));
  EXPECT_EQ(back.class_names, idx.class_names);
  EXPECT_TRUE(back.multilabel());
  EXPECT_EQ(back.weights, idx.weights);
  fs::remove_all(dir);
}

TEST(Train, LossIsFiniteAndTaskShaped) {
  Tensor<float> logits(Shape{3}, {2.0f, 0.0f, -1.0f});
  const double ce = task_loss(logits, {1, 0, 0}, Task::kSingleLabel).data()[0];
  const double z = std::exp(2.0) + 1.0 + std::exp(-1.0);
  EXPECT_NEAR(ce, -std::log(std::exp(2.0) / z), 1e-6);
  const double bce = task_loss(logits, {1, 0, 1}, Task::kMultilabel).data()[0];
  auto sp = [](double x) { return std::log1p(std::exp(x)); };
  EXPECT_NEAR(bce, (sp(-2.0) + sp(0.0) + sp(1.0)) / 3.0, 1e-6);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  const auto cfg = small_model();
  const auto data = make_synthetic(cfg, 1, 5);
  auto model = MMViT<float>::random(cfg, 6);
  const auto before = model.params().clone();
  TrainOptions opts;
  opts.epochs = 2;
  opts.batch_size = 3;
  opts.optim.lr = 0.0;
  opts.optim.weight_decay = 0.0;
  opts.augment.enabled = false;
  train(model, data, opts);
  for (const auto& [name, t] : before) EXPECT_EQ(oracle::to_vec(t), oracle::to_vec(model.params().get(name))) << name;
}

TEST(Train, SameSeedSameLog) {
  const auto cfg = small_model();
  const auto data = make_synthetic(cfg, 2, 7);
  TrainOptions opts;
  opts.epochs = 2;
  opts.batch_size = 3;
  opts.optim.lr = 1e-3;
  opts.seed = 9;
  opts.augment.specaug_max_time = 4;
  opts.augment.specaug_max_freq = 4;
  auto run = [&] {
    auto model = MMViT<float>::random(cfg, 8);
    auto res = train(model, data, opts);
    std::vector<std::string> rows;
    for (const auto& r : res.log) rows.push_back(r.csv().substr(0, r.csv().rfind(',')));  // wall time varies
    return std::make_pair(rows, oracle::to_vec(model.params().get("head.weight")));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  ASSERT_EQ(a.first.size(), 2u);
}
