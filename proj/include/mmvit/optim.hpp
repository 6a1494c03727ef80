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

#pragma once

#include <cstdint>

#include "mmvit/params.hpp"

namespace mmvit::trainkit {

struct AdamWConfig {
  double lr = 1e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::int64_t step = 0;
  ParamStore<float> m;  // first moments, named like the parameters
  ParamStore<float> v;  // second moments

  /// Zero moments shaped like `params`.
  static OptimizerState like(const ParamStore<float>& params);
};

/// One decoupled-weight-decay Adam update of every parameter:
///   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
/// Throws ContractError naming the first parameter without a gradient.
void adamw_step(ParamStore<float>& params, OptimizerState& state, const AdamWConfig& cfg);

/// Global L2 norm of all gradients (absent gradients count as zero).
double grad_norm(const ParamStore<float>& params);
/// Rescales gradients so their global norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(ParamStore<float>& params, double max_norm);

/// Constant rate after a linear warmup over the first `warmup_fraction` of `total_steps`.
struct LrSchedule {
  double base_lr = 1e-5;
  double warmup_fraction = 0.05;
  std::int64_t total_steps = 1;

  double at(std::int64_t step) const;
};

}  // namespace mmvit::trainkit
