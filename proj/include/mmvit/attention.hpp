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

// Multi-head pooling attention, cross-view pooling attention and the three
// transformer block kinds built on them.
//
// Q, K and V are each pooled by their own depthwise convolution over the token
// grid before attention. A CLS row is split off before pooling and re-attached
// unchanged. Scores are scaled by 1/sqrt(head_dim).

#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mmvit/config.hpp"
#include "mmvit/embedding.hpp"
#include "mmvit/params.hpp"
#include "mmvit/tensor.hpp"

namespace mmvit {

struct AttentionConfig {
  std::int64_t channels = 0;
  int heads = 1;
  PoolingSpec q_pool;
  PoolingSpec k_pool;
  PoolingSpec v_pool;

  std::int64_t head_dim() const { return channels / heads; }
};

template <typename T>
struct AttentionParams {
  Tensor<T> qkv_weight;  // [E, 3E]; columns are Q | K | V
  Tensor<T> qkv_bias;    // [3E]
  std::optional<Tensor<T>> pool_q, pool_k, pool_v;  // [E, 1, k, k], absent for identity pooling
  Tensor<T> proj_weight;  // [E, E]
  Tensor<T> proj_bias;    // [E]

  static AttentionParams from_store(const ParamStore<T>& store, const std::string& prefix,
                                    const AttentionConfig& cfg);
};

template <typename T>
struct PooledTokens {
  Tensor<T> tokens;
  Extent2 grid;
};

/// Depthwise-convolution pooling of tokens[L, E] laid out on `grid`.
template <typename T>
PooledTokens<T> pool_tokens(const Tensor<T>& tokens, Extent2 grid, bool has_cls, const PoolingSpec& spec,
                            const std::optional<Tensor<T>>& weight);

/// Parameter-free max pooling of a token grid (residual path of scaled blocks).
template <typename T>
PooledTokens<T> max_pool_tokens(const Tensor<T>& tokens, Extent2 grid, bool has_cls, const PoolingSpec& spec);

/// Pooled per-head projections, each [heads, L, head_dim].
template <typename T>
struct HeadProjections {
  Tensor<T> q, k, v;
  Extent2 q_grid;
};

template <typename T>
HeadProjections<T> project_qkv(const Tensor<T>& tokens, Extent2 grid, bool has_cls, const AttentionConfig& cfg,
                               const AttentionParams<T>& params);

/// softmax(q k^T / sqrt(d)) v for q[h, Lq, d], k/v[h, Lk, d]. When `weights`
/// is non-null it receives the [h, Lq, Lk] attention matrix.
template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                       Tensor<T>* weights = nullptr);

/// [h, L, d] -> [L, h*d].
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x);

template <typename T>
struct AttentionOutput {
  Tensor<T> tokens;  // [L', E]
  Extent2 grid;
};

template <typename T>
AttentionOutput<T> pooling_attention(const Tensor<T>& tokens, const AttentionConfig& cfg,
                                     const AttentionParams<T>& params, Extent2 grid, bool has_cls);

/// Joint attention over the token-axis concatenation of every view's pooled
/// Q/K/V, split back per view and projected with per-view output weights.
template <typename T>
ViewSet<T> cross_pooling_attention(const ViewSet<T>& views, const std::vector<AttentionConfig>& cfgs,
                                   const std::vector<AttentionParams<T>>& params);

/// Per-view weights of one transformer block.
template <typename T>
struct ViewBlockParams {
  Tensor<T> norm1_gain, norm1_shift;
  AttentionParams<T> attn;
  Tensor<T> norm2_gain, norm2_shift;
  Tensor<T> fc1_weight, fc1_bias;  // [E, r*E], [r*E]
  Tensor<T> fc2_weight, fc2_bias;  // [r*E, E_out], [E_out]
  std::optional<Tensor<T>> shortcut_weight, shortcut_bias;  // [E, 2E], [2E]; scaled blocks only

  static ViewBlockParams from_store(const ParamStore<T>& store, const std::string& prefix,
                                    const AttentionConfig& cfg, BlockKind kind);
};

struct BlockOptions {
  PoolingSpec residual_pool;  // scaled blocks: pooling applied to the residual path
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// Pre-norm block: y = x~ + Attn(LN(x)); z = S(y) + MLP(LN(y)). x~ is the
/// max-pooled input for scaled blocks, S the width-doubling shortcut there.
template <typename T>
ViewSet<T> transformer_block(const ViewSet<T>& views, BlockKind kind, const std::vector<AttentionConfig>& cfgs,
                             const std::vector<ViewBlockParams<T>>& params, const BlockOptions& opts = {});

/// Attention configs for every view at one layer of the schedule.
std::vector<AttentionConfig> attention_configs(const MMViTConfig& cfg, const LayerPlan& layer);

std::string block_prefix(int layer_index, int view);

}  // namespace mmvit
