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

#include "mmvit/model.hpp"

namespace mmvit {

namespace {

void add_pool_spec(std::vector<ParamSpec>& specs, const std::string& name, std::int64_t channels,
                   const PoolingSpec& pool) {
  if (pool.identity()) return;
  specs.push_back({name, Shape{channels, 1, pool.kernel, pool.kernel}, ParamInit::kAverage});
}

}  // namespace

std::vector<ParamSpec> parameter_specs(const MMViTConfig& cfg) {
  const StageSchedule sched = build_schedule(cfg);
  const std::int64_t e = cfg.embed_dim;
  std::vector<ParamSpec> specs;
  for (int v = 0; v < cfg.num_views(); ++v) {
    const std::string p = embed_prefix(v);
    const auto& view = cfg.views[static_cast<std::size_t>(v)];
    const Extent2 g = cfg.view_grid(v);
    specs.push_back({p + "proj.weight", Shape{e, cfg.in_channels, view.kernel.h, view.kernel.w}});
    specs.push_back({p + "proj.bias", Shape{e}, ParamInit::kZeros});
    specs.push_back({p + "pos.spatial_h", Shape{e, g.h}});
    specs.push_back({p + "pos.spatial_w", Shape{e, g.w}});
    specs.push_back({p + "pos.temporal", Shape{e, 1}});
    if (v == 0) specs.push_back({p + "pos.cls", Shape{e}});
  }
  specs.push_back({"embed.cls_token", Shape{e}, ParamInit::kZeros});

  for (const auto& layer : sched.layers) {
    const auto cfgs = attention_configs(cfg, layer);
    const std::int64_t c = layer.channels_in, c_out = layer.channels_out, hidden = c * cfg.mlp_ratio;
    for (int v = 0; v < cfg.num_views(); ++v) {
      const std::string p = block_prefix(layer.index, v);
      const auto& a = cfgs[static_cast<std::size_t>(v)];
      specs.push_back({p + "norm1.gain", Shape{c}, ParamInit::kOnes});
      specs.push_back({p + "norm1.shift", Shape{c}, ParamInit::kZeros});
      specs.push_back({p + "attn.qkv.weight", Shape{c, 3 * c}});
      specs.push_back({p + "attn.qkv.bias", Shape{3 * c}, ParamInit::kZeros});
      add_pool_spec(specs, p + "attn.pool_q.weight", c, a.q_pool);
      add_pool_spec(specs, p + "attn.pool_k.weight", c, a.k_pool);
      add_pool_spec(specs, p + "attn.pool_v.weight", c, a.v_pool);
      specs.push_back({p + "attn.proj.weight", Shape{c, c}});
      specs.push_back({p + "attn.proj.bias", Shape{c}, ParamInit::kZeros});
      specs.push_back({p + "norm2.gain", Shape{c}, ParamInit::kOnes});
      specs.push_back({p + "norm2.shift", Shape{c}, ParamInit::kZeros});
      specs.push_back({p + "mlp.fc1.weight", Shape{c, hidden}});
      specs.push_back({p + "mlp.fc1.bias", Shape{hidden}, ParamInit::kZeros});
      specs.push_back({p + "mlp.fc2.weight", Shape{hidden, c_out}});
      specs.push_back({p + "mlp.fc2.bias", Shape{c_out}, ParamInit::kZeros});
      if (layer.kind == BlockKind::kScaledSelfAttention) {
        specs.push_back({p + "shortcut.weight", Shape{c, c_out}});
        specs.push_back({p + "shortcut.bias", Shape{c_out}, ParamInit::kZeros});
      }
    }
  }
  const std::int64_t e_final = sched.layers.empty() ? e : sched.layers.back().channels_out;
  specs.push_back({"norm.gain", Shape{e_final}, ParamInit::kOnes});
  specs.push_back({"norm.shift", Shape{e_final}, ParamInit::kZeros});
  specs.push_back({"head.weight", Shape{e_final, cfg.num_classes}});
  specs.push_back({"head.bias", Shape{cfg.num_classes}, ParamInit::kZeros});
  return specs;
}

std::int64_t count_params(const MMViTConfig& cfg) {
  std::int64_t n = 0;
  for (const auto& s : parameter_specs(cfg)) n += shape_numel(s.shape);
  return n;
}

std::int64_t embedding_flops(const MMViTConfig& cfg) {
  std::int64_t madds = 0;
  for (int v = 0; v < cfg.num_views(); ++v) {
    const auto& k = cfg.views[static_cast<std::size_t>(v)].kernel;
    madds += cfg.embed_dim * cfg.in_channels * k.h * k.w * cfg.view_grid(v).count();
  }
  return 2 * madds;
}

std::int64_t layer_flops(const MMViTConfig& cfg, const LayerPlan& layer) {
  const auto cfgs = attention_configs(cfg, layer);
  const std::int64_t c = layer.channels_in, c_out = layer.channels_out, hidden = c * cfg.mlp_ratio;
  std::int64_t madds = 0, joint_q = 0, joint_k = 0;
  for (int v = 0; v < cfg.num_views(); ++v) {
    const auto uv = static_cast<std::size_t>(v);
    const auto& a = cfgs[uv];
    const std::int64_t cls = v == 0 ? 1 : 0;
    const std::int64_t l = layer.grids_in[uv].count() + cls;
    const std::int64_t lq = layer.grids_out[uv].count() + cls;
    const Extent2 gk{a.k_pool.pooled(layer.grids_in[uv].h), a.k_pool.pooled(layer.grids_in[uv].w)};
    const std::int64_t lk = gk.count() + cls;
    madds += l * c * 3 * c;
    if (!a.q_pool.identity()) madds += c * a.q_pool.kernel * a.q_pool.kernel * layer.grids_out[uv].count();
    if (!a.k_pool.identity()) madds += 2 * c * a.k_pool.kernel * a.k_pool.kernel * gk.count();
    if (layer.kind == BlockKind::kCrossAttention) {
      joint_q += lq;
      joint_k += lk;
    } else {
      madds += 2 * lq * lk * c;  // QK^T and AV summed over heads
    }
    madds += lq * c * c + lq * c * hidden + lq * hidden * c_out;
    if (layer.kind == BlockKind::kScaledSelfAttention) madds += lq * c * c_out;
  }
  if (layer.kind == BlockKind::kCrossAttention) madds += 2 * joint_q * joint_k * c;
  return 2 * madds;
}

std::int64_t estimate_flops(const MMViTConfig& cfg) {
  const StageSchedule sched = build_schedule(cfg);
  std::int64_t flops = embedding_flops(cfg);
  for (const auto& layer : sched.layers) flops += layer_flops(cfg, layer);
  const std::int64_t e_final = sched.layers.empty() ? cfg.embed_dim : sched.layers.back().channels_out;
  return flops + 2 * e_final * cfg.num_classes;
}

std::int64_t layer_params(const MMViTConfig& cfg, int layer_index) {
  const std::string prefix = "blocks." + std::to_string(layer_index) + ".";
  std::int64_t n = 0;
  for (const auto& s : parameter_specs(cfg)) {
    if (s.name.rfind(prefix, 0) == 0) n += shape_numel(s.shape);
  }
  return n;
}

template <typename T>
Tensor<T> init_param(const ParamSpec& spec, std::mt19937_64& rng) {
  switch (spec.init) {
    case ParamInit::kZeros:
      return Tensor<T>::zeros(spec.shape);
    case ParamInit::kOnes:
      return Tensor<T>::ones(spec.shape);
    case ParamInit::kAverage: {
      const std::int64_t taps = spec.shape[2] * spec.shape[3];
      return Tensor<T>::full(spec.shape, static_cast<T>(1.0 / static_cast<double>(taps)));
    }
    case ParamInit::kTruncNormal:
      break;
  }
  return Tensor<T>::trunc_normal(spec.shape, static_cast<T>(kInitStd), rng);
}

template <typename T>
ParamStore<T> init_params(const MMViTConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore<T> store;
  for (const auto& spec : parameter_specs(cfg)) {
    auto t = init_param<T>(spec, rng);
    t.set_requires_grad(true);
    store.add(spec.name, std::move(t));
  }
  return store;
}

template <typename T>
MMViT<T>::MMViT(MMViTConfig cfg, ParamStore<T> params)
    : cfg_(std::move(cfg)), schedule_(build_schedule(cfg_)), params_(std::move(params)) {
  const auto specs = parameter_specs(cfg_);
  for (const auto& s : specs) {
    if (!params_.contains(s.name)) throw ContractError("missing parameter '" + s.name + "'");
    const auto& got = params_.get(s.name).shape();
    if (got != s.shape) {
      throw ContractError("parameter '" + s.name + "' has shape " + shape_str(got) + ", expected " +
                          shape_str(s.shape));
    }
  }
  if (params_.size() != specs.size()) {
    for (const auto& [name, _] : params_) {
      bool known = false;
      for (const auto& s : specs) known = known || s.name == name;
      if (!known) throw ContractError("unexpected parameter '" + name + "' for this configuration");
    }
  }
}

template <typename T>
Tensor<T> MMViT<T>::forward(const Tensor<T>& x, const ForwardOptions& opts, std::vector<LayerTrace>* trace) const {
  auto record = [&](int index, BlockKind kind, const ViewSet<T>& vs) {
    if (!trace) return;
    LayerTrace t;
    t.index = index;
    t.kind = kind;
    t.channels = vs.channels();
    t.grids = vs.grids;
    for (int v = 0; v < vs.size(); ++v) t.token_counts.push_back(vs.tokens[static_cast<std::size_t>(v)].dim(0));
    trace->push_back(std::move(t));
  };

  ViewSet<T> views = embed(x, cfg_, params_);
  record(0, BlockKind::kSelfAttention, views);
  for (const auto& layer : schedule_.layers) {
    const auto cfgs = attention_configs(cfg_, layer);
    std::vector<ViewBlockParams<T>> bp;
    for (int v = 0; v < cfg_.num_views(); ++v) {
      bp.push_back(ViewBlockParams<T>::from_store(params_, block_prefix(layer.index, v), cfgs[static_cast<std::size_t>(v)],
                                                  layer.kind));
    }
    BlockOptions bo;
    bo.residual_pool = cfg_.q_pool_scaled;
    bo.training = opts.training;
    bo.dropout = cfg_.dropout;
    bo.rng = opts.rng;
    try {
      views = transformer_block(views, layer.kind, cfgs, bp, bo);
    } catch (const DimensionError& e) {
      throw ContractError("layer " + std::to_string(layer.index) + " (" + to_string(layer.kind) + "): " + e.what());
    } catch (const ContractError& e) {
      throw ContractError("layer " + std::to_string(layer.index) + " (" + to_string(layer.kind) + "): " + e.what());
    }
    record(layer.index, layer.kind, views);
  }
  const auto& v0 = views.tokens.front();
  auto cls = v0.dim(0) > 1 ? split(v0, 0, {1, v0.dim(0) - 1})[0] : v0;
  auto normed = layernorm(cls, params_.get("norm.gain"), params_.get("norm.shift"));
  auto logits = linear(normed, params_.get("head.weight"), params_.get("head.bias"));
  return reshape(logits, Shape{cfg_.num_classes});
}

template Tensor<float> init_param<float>(const ParamSpec&, std::mt19937_64&);
template Tensor<double> init_param<double>(const ParamSpec&, std::mt19937_64&);
template ParamStore<float> init_params<float>(const MMViTConfig&, std::uint64_t);
template ParamStore<double> init_params<double>(const MMViTConfig&, std::uint64_t);
template class MMViT<float>;
template class MMViT<double>;

}  // namespace mmvit
