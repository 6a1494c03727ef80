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

// Adapting image-trained weights to an audio configuration: patchifiers are
// averaged over input channels, positional tables resampled to the new token
// grids, block weights copied, and the head re-initialized.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmvit/checkpoint.hpp"
#include "mmvit/config.hpp"
#include "mmvit/params.hpp"

namespace mmvit::transfer {

enum class Action { kCopy, kChannelAverage, kInterpolate, kReinitialize, kDrop };
const char* to_string(Action a);

struct PlanEntry {
  std::string name;
  Action action = Action::kCopy;
  Shape from;  // empty for Reinitialize
  Shape to;    // empty for Drop
};

struct TransferPlan {
  std::uint64_t source_fingerprint = 0;
  MMViTConfig target;
  std::vector<PlanEntry> entries;  // target parameters in canonical order, then dropped source tensors

  std::size_t count(Action a) const;
  /// One line per entry, e.g. "interpolate  embed.view0.pos.spatial_h  [96,112] -> [96,512]".
  std::string audit() const;
};

/// [E, 3, kh, kw] -> [E, 1, kh, kw], the mean over input channels.
Tensor<float> channel_average(const Tensor<float>& w);

struct PosEncTables {
  Tensor<float> spatial_h;  // [E, h]
  Tensor<float> spatial_w;  // [E, w]
  Tensor<float> temporal;   // [E, t]
  std::optional<Tensor<float>> cls;  // [E]
};

/// Corner-aligned linear resampling of each table to the target grid; the CLS
/// entry is copied unchanged.
PosEncTables interpolate_posenc(const PosEncTables& src, Extent2 src_grid, Extent2 dst_grid,
                                std::int64_t dst_temporal = 1);

struct TransferResult {
  ParamStore<float> params;
  TransferPlan plan;
};

/// `src_cfg` must be the configuration `src` was saved under; the two configs
/// must share every field that determines block shapes.
TransferResult apply_transfer(const Checkpoint& src, const MMViTConfig& src_cfg, const MMViTConfig& dst_cfg,
                              std::uint64_t seed = 0);

}  // namespace mmvit::transfer
