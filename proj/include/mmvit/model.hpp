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

// The full network: embedding, the scheduled blocks, final norm and a linear
// head on the view-0 CLS token.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mmvit/attention.hpp"
#include "mmvit/config.hpp"
#include "mmvit/embedding.hpp"
#include "mmvit/params.hpp"

namespace mmvit {

enum class ParamInit { kTruncNormal, kZeros, kOnes, kAverage };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamInit init = ParamInit::kTruncNormal;
};

/// Every parameter of the network in canonical order.
std::vector<ParamSpec> parameter_specs(const MMViTConfig& cfg);
std::int64_t count_params(const MMViTConfig& cfg);
/// 2 x multiply-adds over convolutions, linear layers and attention products.
std::int64_t estimate_flops(const MMViTConfig& cfg);
std::int64_t embedding_flops(const MMViTConfig& cfg);
std::int64_t layer_flops(const MMViTConfig& cfg, const LayerPlan& layer);
/// Parameters owned by one layer, summed over views.
std::int64_t layer_params(const MMViTConfig& cfg, int layer_index);

inline constexpr double kInitStd = 0.02;

/// Initializes one parameter per its spec (truncated normal std 0.02, zeros, ones, or mean filter).
template <typename T>
Tensor<T> init_param(const ParamSpec& spec, std::mt19937_64& rng);

template <typename T>
ParamStore<T> init_params(const MMViTConfig& cfg, std::uint64_t seed);

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout source; required when training with dropout
};

struct LayerTrace {
  int index = 0;
  BlockKind kind = BlockKind::kSelfAttention;
  std::int64_t channels = 0;
  std::vector<Extent2> grids;
  std::vector<std::int64_t> token_counts;
};

template <typename T>
class MMViT {
 public:
  /// Checks that `params` holds exactly the parameters `cfg` calls for.
  MMViT(MMViTConfig cfg, ParamStore<T> params);
  static MMViT random(const MMViTConfig& cfg, std::uint64_t seed) { return MMViT(cfg, init_params<T>(cfg, seed)); }

  const MMViTConfig& config() const { return cfg_; }
  const StageSchedule& schedule() const { return schedule_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  /// x[C, H, W] -> logits[num_classes]. `trace` receives one entry for the
  /// embedding (index 0) and one per layer.
  Tensor<T> forward(const Tensor<T>& x, const ForwardOptions& opts = {},
                    std::vector<LayerTrace>* trace = nullptr) const;

 private:
  MMViTConfig cfg_;
  StageSchedule schedule_;
  ParamStore<T> params_;
};

}  // namespace mmvit
