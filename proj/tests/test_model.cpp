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

#include <set>

#include "mmvit/checkpoint.hpp"
#include "mmvit/model.hpp"
#include "model_gradcheck.hpp"
#include "oracles.hpp"



using namespace mmvit;

TEST(Schedule, DefaultSixteenLayers) {
  const auto s = build_schedule(MMViTConfig::audio());
  ASSERT_EQ(s.size(), 16u);
  EXPECT_EQ(s.stage_sizes, (std::vector<int>{2, 2, 11, 1}));
  for (const auto& l : s.layers) {
    BlockKind expect = BlockKind::kSelfAttention;
    if (l.index == 1 || l.index == 3 || l.index == 14) expect = BlockKind::kCrossAttention;
    if (l.index == 2 || l.index == 4 || l.index == 15) expect = BlockKind::kScaledSelfAttention;
    EXPECT_EQ(l.kind, expect) << "layer " << l.index;
  }
}

TEST(Schedule, AudioGridAndChannelTrace) {
  const auto s = build_schedule(MMViTConfig::audio());
  std::vector<Extent2> grids;
  std::vector<std::int64_t> channels;
  for (const auto& l : s.layers) {
    if (l.kind == BlockKind::kScaledSelfAttention) {
      grids.push_back(l.grids_out[0]);
      channels.push_back(l.channels_out);
    }
  }
  EXPECT_EQ(s.layers.front().grids_in[0], (Extent2{512, 64}));
  EXPECT_EQ(grids, (std::vector<Extent2>{{256, 32}, {128, 16}, {64, 8}}));
  EXPECT_EQ(channels, (std::vector<std::int64_t>{192, 384, 768}));
}

TEST(Schedule, DegenerateAllZeroCounts) {
  auto cfg = MMViTConfig::tiny();
  cfg.stage_self_counts = {0, 0, 0, 0};
  const auto s = build_schedule(cfg);
  ASSERT_EQ(s.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(s[i].kind, i % 2 == 0 ? BlockKind::kCrossAttention : BlockKind::kScaledSelfAttention);
  }
}

TEST(Schedule, InfeasibleDivisibilityNamesStage) {
  auto cfg = MMViTConfig::tiny();
  cfg.input_w = 48;  // 48/4 = 12 -> 6 -> 3 -> cannot halve
  try {
    build_schedule(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 3"), std::string::npos) << e.what();
  }
}

TEST(Schedule, ScaleInvariantsOverRandomConfigs) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    MMViTConfig cfg;
    const int stages = 1 + static_cast<int>(rng() % 4);
    const std::int64_t s1 = 1 + static_cast<std::int64_t>(rng() % 2);
    cfg.views = {{{2 * s1 + 1, 2 * s1 + 1}, {s1, s1}}, {{4 * s1 + 1, 4 * s1 + 1}, {2 * s1, 2 * s1}}};
    if (rng() % 2) cfg.views.push_back({{8 * s1 + 1, 8 * s1 + 1}, {4 * s1, 4 * s1}});
    const std::int64_t unit = cfg.views.back().stride.h << (stages - 1);
    cfg.input_h = unit * (1 + static_cast<std::int64_t>(rng() % 3));
    cfg.input_w = unit * (1 + static_cast<std::int64_t>(rng() % 3));
    cfg.stage_self_counts.clear();
    cfg.heads.clear();
    for (int s = 0; s < stages; ++s) {
      cfg.stage_self_counts.push_back(static_cast<int>(rng() % 3));
      cfg.heads.push_back(1);
    }
    cfg.embed_dim = 8;
    const auto sched = build_schedule(cfg);
    for (const auto& l : sched.layers) {
      for (std::size_t v = 0; v < cfg.views.size(); ++v) {
        if (l.kind == BlockKind::kScaledSelfAttention) {
          ASSERT_EQ(l.grids_in[v].count(), 4 * l.grids_out[v].count());
          ASSERT_EQ(l.channels_out, 2 * l.channels_in);
        } else {
          ASSERT_EQ(l.grids_in[v], l.grids_out[v]);
          ASSERT_EQ(l.channels_out, l.channels_in);
        }
        if (v > 0) ASSERT_EQ(l.grids_out[v - 1].count(), 4 * l.grids_out[v].count());
      }
    }
  }
}

TEST(Params, LinearLayerAndCheckpointWalk) {
  const auto cfg = MMViTConfig::tiny();
  const auto specs = parameter_specs(cfg);
  const auto e_final = build_schedule(cfg).layers.back().channels_out;
  std::int64_t head = 0;
  for (const auto& s : specs) {
    if (s.name.rfind("head.", 0) == 0) head += shape_numel(s.shape);
  }
  EXPECT_EQ(head, e_final * cfg.num_classes + cfg.num_classes);

  Checkpoint ck;
  ck.fingerprint = cfg.fingerprint();
  ck.params = init_params<float>(cfg, 1);
  const auto decoded = decode_checkpoint(encode_checkpoint(ck));
  std::int64_t walked = 0;
  for (const auto& [_, t] : decoded.params) walked += t.numel();
  EXPECT_EQ(walked, count_params(cfg));
}

TEST(Params, AudioCountMatchesInitializedTensors) {
  const auto cfg = MMViTConfig::audio();
  EXPECT_EQ(init_params<float>(cfg, 1).total_numel(), count_params(cfg));
}

TEST(Model, ImageLogitsAndDeterminism) {
  auto cfg = MMViTConfig::image();
  const auto model = MMViT<float>::random(cfg, 2);
  std::mt19937_64 rng(3);
  const auto x = oracle::random_tensor<float>({3, 224, 224}, rng);
  const auto a = model.forward(x);
  EXPECT_EQ(a.shape(), (Shape{1000}));
  const auto b = model.forward(x);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Model, TraceMatchesSchedule) {
  const auto cfg = MMViTConfig::tiny();
  const auto model = MMViT<float>::random(cfg, 4);
  std::vector<LayerTrace> trace;
  const auto logits = model.forward(Tensor<float>::zeros({1, 64, 32}), {}, &trace);
  EXPECT_EQ(logits.shape(), (Shape{4}));
  ASSERT_EQ(trace.size(), model.schedule().size() + 1);
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto& l = model.schedule()[i - 1];
    EXPECT_EQ(trace[i].channels, l.channels_out);
    EXPECT_EQ(trace[i].grids, l.grids_out);
    EXPECT_EQ(trace[i].token_counts[0], l.grids_out[0].count() + 1);
    EXPECT_EQ(trace[i].token_counts[1], l.grids_out[1].count());
  }
}

TEST(Model, ParameterValidation) {
  const auto cfg = MMViTConfig::tiny();
  auto params = init_params<float>(cfg, 5);
  ParamStore<float> missing;
  for (const auto& [name, t] : params) {
    if (name != "head.bias") missing.add(name, t);
  }
  EXPECT_THROW(MMViT<float>(cfg, missing), ContractError);
  auto extra = params.clone();
  extra.add("bogus", Tensor<float>::zeros({1}));
  EXPECT_THROW(MMViT<float>(cfg, extra), ContractError);
}

TEST(Model, RuntimeShapeErrorNamesLayer) {
  auto model = MMViT<float>::random(MMViTConfig::tiny(), 6);
  model.params().get("blocks.3.view0.mlp.fc1.weight") = Tensor<float>::zeros({5, 7});
  try {
    model.forward(Tensor<float>::zeros({1, 64, 32}));
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 3"), std::string::npos) << e.what();
  }
}

TEST(Model, FlopsArePositiveAndGrowWithInput) {
  auto small = MMViTConfig::tiny();
  auto big = small;
  big.input_h *= 2;
  EXPECT_GT(estimate_flops(small), 0);
  EXPECT_GT(estimate_flops(big), estimate_flops(small));
}

TEST(Model, FiniteDifferenceGradientsReducedConfig) {
  auto cfg = MMViTConfig::tiny();
  cfg.input_h = 32;
  cfg.input_w = 16;
  cfg.embed_dim = 8;
  cfg.stage_self_counts = {0, 1};
  cfg.heads = {1, 2};
  cfg.num_classes = 3;
  auto model = MMViT<double>::random(cfg, 21);
  std::mt19937_64 rng(22);
  const auto x = oracle::random_tensor<double>({1, 32, 16}, rng);
  const auto rep = oracle::model_gradcheck(model, x, 23, 6);
  EXPECT_EQ(rep.tensors, model.params().size());
  EXPECT_LT(rep.worst_entry, 1e-3) << rep.worst_name;
  EXPECT_LT(rep.worst_direction, 1e-3) << rep.worst_name;
  for (const auto& n : rep.zero_grad) ADD_FAILURE() << "zero gradient: " << n;
}

TEST(Model, GradientReachesEveryObservableParameter) {
  const auto cfg = MMViTConfig::tiny();
  std::set<std::string> ever;
  for (int trial = 0; trial < 5; ++trial) {
    auto model = MMViT<float>::random(cfg, 30 + trial);
    std::mt19937_64 rng(40 + trial);
    const auto x = oracle::random_tensor<float>({1, 64, 32}, rng);
    auto& params = model.params();
    params.set_requires_grad(true);
    params.zero_grad();
    Tape<float> tape;
    TapeScope<float> scope(tape);
    tape.backward(sum(mul(model.forward(x), oracle::random_tensor<float>({cfg.num_classes}, rng))));
    for (const auto& [name, t] : params) {
      if (std::any_of(t.grad().begin(), t.grad().end(), [](float g) { return g != 0.0f; })) ever.insert(name);
    }
  }
  for (const auto& [name, _] : init_params<float>(cfg, 0)) {
    EXPECT_EQ(ever.count(name) == 1, !oracle::structurally_dead(cfg, name)) << name;
  }
}
