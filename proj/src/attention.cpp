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

#include "mmvit/attention.hpp"

#include <cmath>

namespace mmvit {

namespace {

template <typename T>
void check_tokens(const Tensor<T>& tokens, Extent2 grid, bool has_cls, const char* op) {
  const std::int64_t expected = grid.count() + (has_cls ? 1 : 0);
  if (tokens.rank() != 2 || tokens.dim(0) != expected) {
    throw ContractError(std::string(op) + ": " + shape_str(tokens.shape()) + " tokens inconsistent with a " +
                        std::to_string(grid.h) + "x" + std::to_string(grid.w) + " grid" +
                        (has_cls ? " plus CLS" : ""));
  }
}

template <typename T>
std::pair<std::optional<Tensor<T>>, Tensor<T>> split_cls(const Tensor<T>& tokens, bool has_cls) {
  if (!has_cls) return {std::nullopt, tokens};
  auto parts = split(tokens, 0, {1, tokens.dim(0) - 1});
  return {parts[0], parts[1]};
}

template <typename T>
Tensor<T> attach_cls(const std::optional<Tensor<T>>& cls, const Tensor<T>& spatial) {
  if (!cls) return spatial;
  return concat(std::vector<Tensor<T>>{*cls, spatial}, 0);
}

template <typename T>
Tensor<T> to_image(const Tensor<T>& spatial, Extent2 grid) {
  return reshape(transpose(spatial), Shape{spatial.dim(1), grid.h, grid.w});
}

template <typename T>
Tensor<T> from_image(const Tensor<T>& image) {
  return transpose(reshape(image, Shape{image.dim(0), image.dim(1) * image.dim(2)}));
}

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, int heads) {
  const std::int64_t l = x.dim(0), e = x.dim(1);
  return permute(reshape(x, Shape{l, heads, e / heads}), {1, 0, 2});
}

template <typename T>
std::optional<Tensor<T>> optional_param(const ParamStore<T>& store, const std::string& name, bool wanted) {
  if (!wanted) return std::nullopt;
  return store.get(name);
}

}  // namespace

std::string block_prefix(int layer_index, int view) {
  return "blocks." + std::to_string(layer_index) + ".view" + std::to_string(view) + ".";
}

std::vector<AttentionConfig> attention_configs(const MMViTConfig& cfg, const LayerPlan& layer) {
  AttentionConfig a;
  a.channels = layer.channels_in;
  a.heads = layer.heads;
  if (layer.kind == BlockKind::kCrossAttention) {
    a.q_pool = a.k_pool = a.v_pool = PoolingSpec{1, 1};
  } else {
    a.q_pool = layer.kind == BlockKind::kScaledSelfAttention ? cfg.q_pool_scaled : PoolingSpec{1, 1};
    a.k_pool = a.v_pool = cfg.kv_pool;
  }
  return std::vector<AttentionConfig>(static_cast<std::size_t>(cfg.num_views()), a);
}

template <typename T>
AttentionParams<T> AttentionParams<T>::from_store(const ParamStore<T>& store, const std::string& prefix,
                                                  const AttentionConfig& cfg) {
  AttentionParams<T> p;
  p.qkv_weight = store.get(prefix + "qkv.weight");
  p.qkv_bias = store.get(prefix + "qkv.bias");
  p.pool_q = optional_param(store, prefix + "pool_q.weight", !cfg.q_pool.identity());
  p.pool_k = optional_param(store, prefix + "pool_k.weight", !cfg.k_pool.identity());
  p.pool_v = optional_param(store, prefix + "pool_v.weight", !cfg.v_pool.identity());
  p.proj_weight = store.get(prefix + "proj.weight");
  p.proj_bias = store.get(prefix + "proj.bias");
  return p;
}

template <typename T>
ViewBlockParams<T> ViewBlockParams<T>::from_store(const ParamStore<T>& store, const std::string& prefix,
                                                  const AttentionConfig& cfg, BlockKind kind) {
  ViewBlockParams<T> p;
  p.norm1_gain = store.get(prefix + "norm1.gain");
  p.norm1_shift = store.get(prefix + "norm1.shift");
  p.attn = AttentionParams<T>::from_store(store, prefix + "attn.", cfg);
  p.norm2_gain = store.get(prefix + "norm2.gain");
  p.norm2_shift = store.get(prefix + "norm2.shift");
  p.fc1_weight = store.get(prefix + "mlp.fc1.weight");
  p.fc1_bias = store.get(prefix + "mlp.fc1.bias");
  p.fc2_weight = store.get(prefix + "mlp.fc2.weight");
  p.fc2_bias = store.get(prefix + "mlp.fc2.bias");
  if (kind == BlockKind::kScaledSelfAttention) {
    p.shortcut_weight = store.get(prefix + "shortcut.weight");
    p.shortcut_bias = store.get(prefix + "shortcut.bias");
  }
  return p;
}

template <typename T>
PooledTokens<T> pool_tokens(const Tensor<T>& tokens, Extent2 grid, bool has_cls, const PoolingSpec& spec,
                            const std::optional<Tensor<T>>& weight) {
  check_tokens(tokens, grid, has_cls, "pool_tokens");
  if (spec.identity()) return {tokens, grid};
  if (!weight) throw ContractError("pool_tokens: non-identity pooling needs a weight");
  auto [cls, spatial] = split_cls(tokens, has_cls);
  const std::int64_t e = tokens.dim(1);
  Conv2dOptions opts;
  opts.stride_h = opts.stride_w = spec.stride;
  opts.pad_h = opts.pad_w = spec.padding();
  opts.groups = e;
  auto pooled = conv2d(to_image(spatial, grid), *weight, std::optional<Tensor<T>>(), opts);
  return {attach_cls(cls, from_image(pooled)), {pooled.dim(1), pooled.dim(2)}};
}

template <typename T>
PooledTokens<T> max_pool_tokens(const Tensor<T>& tokens, Extent2 grid, bool has_cls, const PoolingSpec& spec) {
  check_tokens(tokens, grid, has_cls, "max_pool_tokens");
  if (spec.identity()) return {tokens, grid};
  auto [cls, spatial] = split_cls(tokens, has_cls);
  auto pooled = max_pool2d(to_image(spatial, grid), spec.kernel, spec.stride, spec.padding());
  return {attach_cls(cls, from_image(pooled)), {pooled.dim(1), pooled.dim(2)}};
}

template <typename T>
HeadProjections<T> project_qkv(const Tensor<T>& tokens, Extent2 grid, bool has_cls, const AttentionConfig& cfg,
                               const AttentionParams<T>& params) {
  check_tokens(tokens, grid, has_cls, "attention");
  const std::int64_t e = cfg.channels;
  if (tokens.dim(1) != e) {
    throw ContractError("attention: tokens have " + std::to_string(tokens.dim(1)) + " channels, config expects " +
                        std::to_string(e));
  }
  if (cfg.heads < 1 || e % cfg.heads != 0) throw ConfigError("attention: channels not divisible by heads");
  auto qkv = split(linear(tokens, params.qkv_weight, params.qkv_bias), 1, {e, e, e});
  auto q = pool_tokens(qkv[0], grid, has_cls, cfg.q_pool, params.pool_q);
  auto k = pool_tokens(qkv[1], grid, has_cls, cfg.k_pool, params.pool_k);
  auto v = pool_tokens(qkv[2], grid, has_cls, cfg.v_pool, params.pool_v);
  return {split_heads(q.tokens, cfg.heads), split_heads(k.tokens, cfg.heads), split_heads(v.tokens, cfg.heads),
          q.grid};
}

template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                       Tensor<T>* weights) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(-1)));
  if (!weights) return fused_attention(q, k, v, inv_sqrt_d);
  auto w = softmax(scale(matmul(q, transpose(k)), inv_sqrt_d), -1);
  *weights = w;
  return matmul(w, v);
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const std::int64_t h = x.dim(0), l = x.dim(1), d = x.dim(2);
  return reshape(permute(x, {1, 0, 2}), Shape{l, h * d});
}

template <typename T>
AttentionOutput<T> pooling_attention(const Tensor<T>& tokens, const AttentionConfig& cfg,
                                     const AttentionParams<T>& params, Extent2 grid, bool has_cls) {
  auto hp = project_qkv(tokens, grid, has_cls, cfg, params);
  auto o = merge_heads(scaled_dot_product_attention(hp.q, hp.k, hp.v));
  return {linear(o, params.proj_weight, params.proj_bias), hp.q_grid};
}

template <typename T>
ViewSet<T> cross_pooling_attention(const ViewSet<T>& views, const std::vector<AttentionConfig>& cfgs,
                                   const std::vector<AttentionParams<T>>& params) {
  const int n = views.size();
  if (n < 1 || static_cast<int>(cfgs.size()) != n || static_cast<int>(params.size()) != n) {
    throw ContractError("cross_pooling_attention: need one config and parameter set per view");
  }
  for (int i = 1; i < n; ++i) {
    if (cfgs[static_cast<std::size_t>(i)].heads != cfgs[0].heads ||
        cfgs[static_cast<std::size_t>(i)].head_dim() != cfgs[0].head_dim()) {
      throw ConfigError("cross_pooling_attention: view " + std::to_string(i) +
                        " disagrees with view 0 on head count or head_dim");
    }
  }
  std::vector<Tensor<T>> qs, ks, vs;
  std::vector<std::int64_t> q_lens;
  ViewSet<T> out;
  out.has_cls = views.has_cls;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    auto hp = project_qkv(views.tokens[ui], views.grids[ui], views.view_has_cls(i), cfgs[ui], params[ui]);
    q_lens.push_back(hp.q.dim(1));
    qs.push_back(hp.q);
    ks.push_back(hp.k);
    vs.push_back(hp.v);
    out.grids.push_back(hp.q_grid);
  }
  auto joint = scaled_dot_product_attention(concat(qs, 1), concat(ks, 1), concat(vs, 1));
  auto per_view = split(joint, 1, q_lens);
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    out.tokens.push_back(linear(merge_heads(per_view[ui]), params[ui].proj_weight, params[ui].proj_bias));
  }
  return out;
}

template <typename T>
ViewSet<T> transformer_block(const ViewSet<T>& views, BlockKind kind, const std::vector<AttentionConfig>& cfgs,
                             const std::vector<ViewBlockParams<T>>& params, const BlockOptions& opts) {
  const int n = views.size();
  if (static_cast<int>(cfgs.size()) != n || static_cast<int>(params.size()) != n) {
    throw ContractError("transformer_block: need one config and parameter set per view");
  }
  ViewSet<T> normed;
  normed.has_cls = views.has_cls;
  normed.grids = views.grids;
  for (int i = 0; i < n; ++i) {
    const auto& p = params[static_cast<std::size_t>(i)];
    normed.tokens.push_back(layernorm(views.tokens[static_cast<std::size_t>(i)], p.norm1_gain, p.norm1_shift));
  }

  ViewSet<T> attended;
  if (kind == BlockKind::kCrossAttention) {
    std::vector<AttentionParams<T>> ap;
    for (const auto& p : params) ap.push_back(p.attn);
    attended = cross_pooling_attention(normed, cfgs, ap);
  } else {
    attended.has_cls = views.has_cls;
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      auto a = pooling_attention(normed.tokens[ui], cfgs[ui], params[ui].attn, views.grids[ui], views.view_has_cls(i));
      attended.tokens.push_back(a.tokens);
      attended.grids.push_back(a.grid);
    }
  }

  const bool drop = opts.training && opts.dropout > 0.0 && opts.rng != nullptr;
  ViewSet<T> out;
  out.has_cls = views.has_cls;
  out.grids = attended.grids;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& p = params[ui];
    Tensor<T> residual = views.tokens[ui];
    if (kind == BlockKind::kScaledSelfAttention) {
      auto pooled = max_pool_tokens(residual, views.grids[ui], views.view_has_cls(i), opts.residual_pool);
      if (!(pooled.grid == attended.grids[ui])) {
        throw ContractError("transformer_block: residual pooling and Q pooling disagree on the output grid");
      }
      residual = pooled.tokens;
    }
    Tensor<T> a = attended.tokens[ui];
    if (drop) a = dropout(a, opts.dropout, *opts.rng);
    auto y = add(residual, a);
    auto hidden = gelu(linear(layernorm(y, p.norm2_gain, p.norm2_shift), p.fc1_weight, p.fc1_bias));
    auto m = linear(hidden, p.fc2_weight, p.fc2_bias);
    if (drop) m = dropout(m, opts.dropout, *opts.rng);
    auto base = p.shortcut_weight ? linear(y, *p.shortcut_weight, *p.shortcut_bias) : y;
    out.tokens.push_back(add(base, m));
  }
  return out;
}

#define MMVIT_INSTANTIATE_ATTENTION(T)                                                                             \
  template struct AttentionParams<T>;                                                                              \
  template struct ViewBlockParams<T>;                                                                              \
  template PooledTokens<T> pool_tokens(const Tensor<T>&, Extent2, bool, const PoolingSpec&,                        \
                                       const std::optional<Tensor<T>>&);                                           \
  template PooledTokens<T> max_pool_tokens(const Tensor<T>&, Extent2, bool, const PoolingSpec&);                   \
  template HeadProjections<T> project_qkv(const Tensor<T>&, Extent2, bool, const AttentionConfig&,                 \
                                          const AttentionParams<T>&);                                              \
  template Tensor<T> scaled_dot_product_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                                  Tensor<T>*);                                                     \
  template Tensor<T> merge_heads(const Tensor<T>&);                                                                \
  template AttentionOutput<T> pooling_attention(const Tensor<T>&, const AttentionConfig&,                          \
                                                const AttentionParams<T>&, Extent2, bool);                         \
  template ViewSet<T> cross_pooling_attention(const ViewSet<T>&, const std::vector<AttentionConfig>&,              \
                                              const std::vector<AttentionParams<T>>&);                             \
  template ViewSet<T> transformer_block(const ViewSet<T>&, BlockKind, const std::vector<AttentionConfig>&,         \
                                        const std::vector<ViewBlockParams<T>>&, const BlockOptions&);

MMVIT_INSTANTIATE_ATTENTION(float)
MMVIT_INSTANTIATE_ATTENTION(double)

#undef MMVIT_INSTANTIATE_ATTENTION

}  // namespace mmvit
