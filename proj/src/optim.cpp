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

#include "mmvit/optim.hpp"

#include <algorithm>
#include <cmath>

namespace mmvit::trainkit {

OptimizerState OptimizerState::like(const ParamStore<float>& params) {
  OptimizerState s;
  for (const auto& [name, t] : params) {
    s.m.add(name, Tensor<float>::zeros(t.shape()));
    s.v.add(name, Tensor<float>::zeros(t.shape()));
  }
  return s;
}

void adamw_step(ParamStore<float>& params, OptimizerState& state, const AdamWConfig& cfg) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw ContractError("adamw_step: parameter '" + name + "' has no gradient");
    if (!state.m.contains(name) || state.m.get(name).shape() != t.shape()) {
      throw ContractError("adamw_step: optimizer state does not match parameter '" + name + "'");
    }
  }
  ++state.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (auto& [name, t] : params) {
    auto theta = t.mutable_data();
    const auto g = t.grad();
    auto m = state.m.get(name).mutable_data();
    auto v = state.v.get(name).mutable_data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = (mi / c1) / (std::sqrt(vi / c2) + cfg.eps) + cfg.weight_decay * theta[i];
      theta[i] = static_cast<float>(theta[i] - cfg.lr * update);
    }
  }
}

double grad_norm(const ParamStore<float>& params) {
  double total = 0.0;
  for (const auto& [_, t] : params) {
    if (!t.has_grad()) continue;
    for (float g : t.grad()) total += static_cast<double>(g) * g;
  }
  return std::sqrt(total);
}

double clip_grad_norm(ParamStore<float>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& [_, t] : params) {
      if (!t.has_grad()) continue;
      for (float& g : t.mutable_grad()) g *= s;
    }
  }
  return norm;
}

double LrSchedule::at(std::int64_t step) const {
  const auto warmup = static_cast<std::int64_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
  if (warmup <= 0 || step >= warmup) return base_lr;
  return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

}  // namespace mmvit::trainkit
