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

// Architecture configuration and the per-layer stage schedule derived from it.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmvit/errors.hpp"

namespace mmvit {

struct Extent2 {
  std::int64_t h = 0, w = 0;
  std::int64_t count() const { return h * w; }
  friend bool operator==(const Extent2&, const Extent2&) = default;
};

/// Padding that makes a strided convolution map L to exactly L/stride:
/// ceil((kernel - stride) / 2). Requires kernel > stride.
std::int64_t derive_padding(std::int64_t kernel, std::int64_t stride);

/// Patchifier geometry for one view. Padding is always derived.
struct ViewSpec {
  Extent2 kernel;
  Extent2 stride;

  Extent2 padding() const { return {derive_padding(kernel.h, stride.h), derive_padding(kernel.w, stride.w)}; }
  friend bool operator==(const ViewSpec&, const ViewSpec&) = default;
};

/// (kernel, stride) of a pooling convolution. kernel == stride == 1 is the identity.
struct PoolingSpec {
  std::int64_t kernel = 1;
  std::int64_t stride = 1;

  bool identity() const { return kernel == 1 && stride == 1; }
  std::int64_t padding() const { return kernel > stride ? derive_padding(kernel, stride) : 0; }
  std::int64_t pooled(std::int64_t extent) const { return (extent + 2 * padding() - kernel) / stride + 1; }
  friend bool operator==(const PoolingSpec&, const PoolingSpec&) = default;
};

enum class Task { kMultilabel, kSingleLabel };

enum class BlockKind { kSelfAttention, kCrossAttention, kScaledSelfAttention };

const char* to_string(Task task);
const char* to_string(BlockKind kind);

struct MMViTConfig {
  std::int64_t in_channels = 1;
  std::int64_t input_h = 1024;
  std::int64_t input_w = 128;
  std::vector<ViewSpec> views = {{{9, 9}, {2, 2}}, {{13, 13}, {4, 4}}};
  std::int64_t embed_dim = 96;
  std::vector<int> stage_self_counts = {0, 0, 9, 1};
  std::vector<int> heads = {1, 2, 4, 8};
  std::int64_t num_classes = 527;
  Task task = Task::kMultilabel;
  double dropout = 0.0;
  int mlp_ratio = 4;
  PoolingSpec q_pool_scaled = {3, 2};
  PoolingSpec kv_pool = {1, 1};

  /// The audio configuration: (1, 1024, 128) log-mel input, 527 classes.
  static MMViTConfig audio();
  /// The image configuration: (3, 224, 224) input, 1000 classes.
  static MMViTConfig image();
  /// Desk-scale preset: E=48, n=[0,0,1,1], (1, 64, 32) input.
  static MMViTConfig tiny();
  static MMViTConfig preset(const std::string& name);

  int num_stages() const { return static_cast<int>(stage_self_counts.size()); }
  int num_views() const { return static_cast<int>(views.size()); }
  Extent2 view_grid(int view) const;
  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
  /// Stable text form of every architecture field; input to fingerprint().
  std::string canonical() const;
  std::uint64_t fingerprint() const;
};

struct LayerPlan {
  int index = 0;  // 1-based
  BlockKind kind = BlockKind::kSelfAttention;
  int stage = 0;  // 1-based
  std::int64_t channels_in = 0;
  std::int64_t channels_out = 0;
  int heads = 1;
  std::vector<Extent2> grids_in;
  std::vector<Extent2> grids_out;
  /// Per view: whether this layer's output for that view can still reach the
  /// classification head (views other than 0 stop mattering after the last
  /// cross-attention layer).
  std::vector<bool> observable;
};

struct StageSchedule {
  std::vector<LayerPlan> layers;
  std::vector<int> stage_sizes;

  std::size_t size() const { return layers.size(); }
  const LayerPlan& operator[](std::size_t i) const { return layers[i]; }
};

StageSchedule build_schedule(const MMViTConfig& cfg);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace mmvit
