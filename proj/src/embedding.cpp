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

#include "mmvit/embedding.hpp"

namespace mmvit {

std::string embed_prefix(int view) { return "embed.view" + std::to_string(view) + "."; }

template <typename T>
Tensor<T> encoding_grid(const PositionalEncoding<T>& pe) {
  const std::int64_t e = pe.spatial_h.dim(0);
  const std::int64_t h = pe.spatial_h.dim(1);
  const std::int64_t w = pe.spatial_w.dim(1);
  if (pe.spatial_w.dim(0) != e || pe.temporal.dim(0) != e) {
    throw DimensionError("positional tables disagree on channel width");
  }
  auto rows = reshape(transpose(pe.spatial_h), Shape{h, 1, e});
  auto cols = reshape(transpose(pe.spatial_w), Shape{1, w, e});
  auto t0 = split(pe.temporal, 1, pe.temporal.dim(1) == 1 ? std::vector<std::int64_t>{1}
                                                         : std::vector<std::int64_t>{1, pe.temporal.dim(1) - 1})[0];
  auto grid = add(add(rows, cols), reshape(t0, Shape{1, 1, e}));
  return reshape(grid, Shape{h * w, e});
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& x, const ViewSpec& spec, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Extent2 pad = spec.padding();
  Conv2dOptions opts;
  opts.stride_h = spec.stride.h;
  opts.stride_w = spec.stride.w;
  opts.pad_h = pad.h;
  opts.pad_w = pad.w;
  auto out = conv2d(x, weight, std::optional<Tensor<T>>(bias), opts);
  if (x.dim(1) % spec.stride.h != 0 || x.dim(2) % spec.stride.w != 0 || out.dim(1) != x.dim(1) / spec.stride.h ||
      out.dim(2) != x.dim(2) / spec.stride.w) {
    throw DimensionError("patchify: input " + shape_str(x.shape()) + " is not divisible by stride " +
                         std::to_string(spec.stride.h) + "x" + std::to_string(spec.stride.w));
  }
  return out;
}

template <typename T>
ViewSet<T> embed(const Tensor<T>& x, const MMViTConfig& cfg, const ParamStore<T>& params) {
  if (x.rank() != 3 || x.dim(0) != cfg.in_channels) {
    throw ConfigError("input of shape " + shape_str(x.shape()) + " does not match the configured " +
                      std::to_string(cfg.in_channels) + " input channel(s)");
  }
  if (x.dim(1) != cfg.input_h || x.dim(2) != cfg.input_w) {
    throw ContractError("input of shape " + shape_str(x.shape()) + " does not match the configured " +
                        std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w) + " input");
  }
  ViewSet<T> out;
  out.has_cls = true;
  for (int v = 0; v < cfg.num_views(); ++v) {
    const std::string p = embed_prefix(v);
    auto grid = patchify(x, cfg.views[static_cast<std::size_t>(v)], params.get(p + "proj.weight"),
                         params.get(p + "proj.bias"));
    const std::int64_t e = grid.dim(0), h = grid.dim(1), w = grid.dim(2);
    auto tokens = transpose(reshape(grid, Shape{e, h * w}));
    PositionalEncoding<T> pe{params.get(p + "pos.spatial_h"), params.get(p + "pos.spatial_w"),
                             params.get(p + "pos.temporal")};
    tokens = add(tokens, encoding_grid(pe));
    if (v == 0) {
      auto cls = add(params.get("embed.cls_token"), params.get(p + "pos.cls"));
      tokens = concat(std::vector<Tensor<T>>{reshape(cls, Shape{1, e}), tokens}, 0);
    }
    out.tokens.push_back(tokens);
    out.grids.push_back({h, w});
  }
  return out;
}

template Tensor<float> encoding_grid(const PositionalEncoding<float>&);
template Tensor<double> encoding_grid(const PositionalEncoding<double>&);
template Tensor<float> patchify(const Tensor<float>&, const ViewSpec&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> patchify(const Tensor<double>&, const ViewSpec&, const Tensor<double>&, const Tensor<double>&);
template ViewSet<float> embed(const Tensor<float>&, const MMViTConfig&, const ParamStore<float>&);
template ViewSet<double> embed(const Tensor<double>&, const MMViTConfig&, const ParamStore<double>&);

}  // namespace mmvit
