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

// Multiview patch embedding: overlapping convolutional patchifiers, separable
// learnable positional encodings and the view-0 CLS token.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmvit/config.hpp"
#include "mmvit/params.hpp"
#include "mmvit/tensor.hpp"

namespace mmvit {

/// Token grids of every view. Tokens of view v are [L_v, E] in row-major grid
/// order; when has_cls is set, row 0 of view 0 is the CLS token.
template <typename T>
struct ViewSet {
  std::vector<Tensor<T>> tokens;
  std::vector<Extent2> grids;
  bool has_cls = true;

  int size() const { return static_cast<int>(tokens.size()); }
  bool view_has_cls(int v) const { return v == 0 && has_cls; }
  std::int64_t token_count(int v) const {
    return grids[static_cast<std::size_t>(v)].count() + (view_has_cls(v) ? 1 : 0);
  }
  std::int64_t channels() const { return tokens.front().dim(-1); }
};

/// Separable table: encoding(t, i, j) = spatial_h[:, i] + spatial_w[:, j] + temporal[:, t].
template <typename T>
struct PositionalEncoding {
  Tensor<T> spatial_h;  // [E, h]
  Tensor<T> spatial_w;  // [E, w]
  Tensor<T> temporal;   // [E, t]; t == 1 for 2-D inputs
};

/// Per-token encodings [h*w, E] for temporal index 0.
template <typename T>
Tensor<T> encoding_grid(const PositionalEncoding<T>& pe);

/// Strided convolution with derived padding; x[C, H, W] -> [E, H/sh, W/sw].
template <typename T>
Tensor<T> patchify(const Tensor<T>& x, const ViewSpec& spec, const Tensor<T>& weight, const Tensor<T>& bias);

/// Patchifies every view, adds its positional encoding, and prepends
/// cls_token + cls_pos to view 0.
template <typename T>
ViewSet<T> embed(const Tensor<T>& x, const MMViTConfig& cfg, const ParamStore<T>& params);

std::string embed_prefix(int view);

}  // namespace mmvit
