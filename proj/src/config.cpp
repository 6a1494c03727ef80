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

#include "mmvit/config.hpp"

#include <sstream>

namespace mmvit {

std::int64_t derive_padding(std::int64_t kernel, std::int64_t stride) {
  if (stride < 1) throw ConfigError("stride must be >= 1, got " + std::to_string(stride));
  if (kernel <= stride) {
    throw ConfigError("kernel " + std::to_string(kernel) + " must exceed stride " + std::to_string(stride) +
                      " so neighbouring patches overlap");
  }
  return (kernel - stride + 1) / 2;
}

const char* to_string(Task task) { return task == Task::kMultilabel ? "multilabel" : "single_label"; }

const char* to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::kSelfAttention:
      return "self";
    case BlockKind::kCrossAttention:
      return "cross";
    case BlockKind::kScaledSelfAttention:
      return "scaled";
  }
  return "?";
}

MMViTConfig MMViTConfig::audio() { return MMViTConfig{}; }

MMViTConfig MMViTConfig::image() {
  MMViTConfig c;
  c.in_channels = 3;
  c.input_h = 224;
  c.input_w = 224;
  c.num_classes = 1000;
  c.task = Task::kSingleLabel;
  return c;
}

MMViTConfig MMViTConfig::tiny() {
  MMViTConfig c;
  c.input_h = 64;
  c.input_w = 32;
  c.embed_dim = 48;
  c.stage_self_counts = {0, 0, 1, 1};
  c.num_classes = 4;
  c.task = Task::kSingleLabel;
  return c;
}

MMViTConfig MMViTConfig::preset(const std::string& name) {
  if (name == "audio") return audio();
  if (name == "image") return image();
  if (name == "tiny") return tiny();
  throw ConfigError("unknown preset '" + name + "' (expected audio, image or tiny)");
}

Extent2 MMViTConfig::view_grid(int view) const {
  const auto& s = views.at(static_cast<std::size_t>(view)).stride;
  return {input_h / s.h, input_w / s.w};
}

void MMViTConfig::validate() const {
  if (in_channels < 1) throw ConfigError("model.in_channels must be >= 1");
  if (input_h < 1 || input_w < 1) throw ConfigError("model.input_h / model.input_w must be positive");
  if (views.size() < 2) throw ConfigError("model needs at least two views, got " + std::to_string(views.size()));
  for (std::size_t i = 0; i < views.size(); ++i) {
    try {
      (void)views[i].padding();
    } catch (const ConfigError& e) {
      throw ConfigError("view " + std::to_string(i) + ": " + e.what());
    }
    if (i > 0 && (views[i].stride.h != 2 * views[i - 1].stride.h || views[i].stride.w != 2 * views[i - 1].stride.w)) {
      throw ConfigError("view " + std::to_string(i) + ": stride must double the previous view's stride");
    }
  }
  if (stage_self_counts.empty()) throw ConfigError("model.stage_self_counts must name at least one stage");
  for (int n : stage_self_counts) {
    if (n < 0) throw ConfigError("model.stage_self_counts entries must be >= 0");
  }
  if (heads.size() != stage_self_counts.size()) {
    throw ConfigError("model.heads has " + std::to_string(heads.size()) + " entries but there are " +
                      std::to_string(stage_self_counts.size()) + " stages");
  }
  if (embed_dim < 1) throw ConfigError("model.embed_dim must be positive");
  for (int s = 0; s < num_stages(); ++s) {
    const std::int64_t ch = embed_dim << s;
    const int h = heads[static_cast<std::size_t>(s)];
    if (h < 1 || ch % h != 0) {
      throw ConfigError("stage " + std::to_string(s + 1) + ": " + std::to_string(ch) +
                        " channels not divisible by " + std::to_string(h) + " heads");
    }
  }
  if (num_classes < 1) throw ConfigError("model.num_classes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (mlp_ratio < 1) throw ConfigError("model.mlp_ratio must be >= 1");
  if (q_pool_scaled.stride != 2 || q_pool_scaled.kernel < 2) {
    throw ConfigError("model.q_pool_kernel must be >= 2 and the scaled Q-pool stride is fixed at 2");
  }
  if (kv_pool.stride < 1 || kv_pool.kernel < kv_pool.stride) {
    throw ConfigError("model.kv_pool_kernel must be >= model.kv_pool_stride >= 1");
  }
  const std::int64_t lcm_h = views.back().stride.h, lcm_w = views.back().stride.w;
  if (input_h % lcm_h != 0 || input_w % lcm_w != 0) {
    throw ConfigError("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                      " is not divisible by the largest view stride " + std::to_string(lcm_h) + "x" +
                      std::to_string(lcm_w));
  }
  // Every scaled layer must halve every view grid exactly.
  for (int v = 0; v < num_views(); ++v) {
    Extent2 g = view_grid(v);
    for (int s = 0; s + 1 < num_stages(); ++s) {
      if (g.h % 2 != 0 || g.w % 2 != 0) {
        throw ConfigError("stage " + std::to_string(s + 1) + ": view " + std::to_string(v) + " grid " +
                          std::to_string(g.h) + "x" + std::to_string(g.w) +
                          " cannot be halved by the scaled layer; input must be divisible by " +
                          std::to_string(views.back().stride.h << (num_stages() - 1)));
      }
      g = {g.h / 2, g.w / 2};
    }
  }
}

std::string MMViTConfig::canonical() const {
  std::ostringstream os;
  os << "in_channels=" << in_channels << ";input=" << input_h << 'x' << input_w << ";views=";
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (i) os << ',';
    os << views[i].kernel.h << 'x' << views[i].kernel.w << '/' << views[i].stride.h << 'x' << views[i].stride.w;
  }
  os << ";embed_dim=" << embed_dim << ";stages=";
  for (std::size_t i = 0; i < stage_self_counts.size(); ++i) os << (i ? "," : "") << stage_self_counts[i];
  os << ";heads=";
  for (std::size_t i = 0; i < heads.size(); ++i) os << (i ? "," : "") << heads[i];
  os << ";num_classes=" << num_classes << ";task=" << to_string(task) << ";mlp_ratio=" << mlp_ratio
     << ";q_pool=" << q_pool_scaled.kernel << '/' << q_pool_scaled.stride << ";kv_pool=" << kv_pool.kernel << '/'
     << kv_pool.stride;
  return os.str();
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t MMViTConfig::fingerprint() const { return fnv1a64(canonical()); }

StageSchedule build_schedule(const MMViTConfig& cfg) {
  cfg.validate();
  StageSchedule sched;
  std::vector<Extent2> grids;
  for (int v = 0; v < cfg.num_views(); ++v) grids.push_back(cfg.view_grid(v));
  std::int64_t ch = cfg.embed_dim;
  int index = 1;
  auto push = [&](BlockKind kind, int stage, std::int64_t ch_out, std::vector<Extent2> out) {
    LayerPlan p;
    p.index = index++;
    p.kind = kind;
    p.stage = stage;
    p.channels_in = ch;
    p.channels_out = ch_out;
    p.heads = cfg.heads[static_cast<std::size_t>(stage - 1)];
    p.grids_in = grids;
    p.grids_out = out;
    sched.layers.push_back(std::move(p));
    grids = std::move(out);
    ch = ch_out;
  };
  for (int s = 0; s < cfg.num_stages(); ++s) {
    const std::size_t before = sched.layers.size();
    for (int j = 0; j < cfg.stage_self_counts[static_cast<std::size_t>(s)]; ++j) {
      push(BlockKind::kSelfAttention, s + 1, ch, grids);
    }
    if (s + 1 < cfg.num_stages()) {
      push(BlockKind::kCrossAttention, s + 1, ch, grids);
      std::vector<Extent2> pooled;
      for (const auto& g : grids) pooled.push_back({cfg.q_pool_scaled.pooled(g.h), cfg.q_pool_scaled.pooled(g.w)});
      push(BlockKind::kScaledSelfAttention, s + 1, 2 * ch, std::move(pooled));
    }
    sched.stage_sizes.push_back(static_cast<int>(sched.layers.size() - before));
  }
  int last_cross = 0;
  for (const auto& p : sched.layers) {
    if (p.kind == BlockKind::kCrossAttention) last_cross = p.index;
  }
  for (auto& p : sched.layers) {
    p.observable.assign(static_cast<std::size_t>(cfg.num_views()), true);
    for (int v = 1; v < cfg.num_views(); ++v) p.observable[static_cast<std::size_t>(v)] = p.index <= last_cross;
  }
  return sched;
}

}  // namespace mmvit
