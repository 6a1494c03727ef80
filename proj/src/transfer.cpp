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

#include "mmvit/transfer.hpp"

#include <random>
#include <set>
#include <sstream>

#include "mmvit/model.hpp"

namespace mmvit::transfer {

namespace {

std::string ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return "[" + s + "]";
}

std::string pool(const PoolingSpec& p) { return "k" + std::to_string(p.kernel) + "s" + std::to_string(p.stride); }

// Names of architecture fields that differ in ways transfer cannot bridge.
std::vector<std::string> divergent_fields(const MMViTConfig& a, const MMViTConfig& b) {
  std::vector<std::string> out;
  auto check = [&](bool same, const std::string& field, const std::string& va, const std::string& vb) {
    if (!same) out.push_back(field + " (" + va + " vs " + vb + ")");
  };
  check(a.embed_dim == b.embed_dim, "model.embed_dim", std::to_string(a.embed_dim), std::to_string(b.embed_dim));
  check(a.stage_self_counts == b.stage_self_counts, "model.stage_self_counts", ints(a.stage_self_counts),
        ints(b.stage_self_counts));
  check(a.heads == b.heads, "model.heads", ints(a.heads), ints(b.heads));
  check(a.mlp_ratio == b.mlp_ratio, "model.mlp_ratio", std::to_string(a.mlp_ratio), std::to_string(b.mlp_ratio));
  check(a.q_pool_scaled == b.q_pool_scaled, "model.q_pool", pool(a.q_pool_scaled), pool(b.q_pool_scaled));
  check(a.kv_pool == b.kv_pool, "model.kv_pool", pool(a.kv_pool), pool(b.kv_pool));
  check(a.num_views() == b.num_views(), "model.views", std::to_string(a.num_views()), std::to_string(b.num_views()));
  if (a.num_views() == b.num_views()) {
    for (int v = 0; v < a.num_views(); ++v) {
      const auto& ka = a.views[static_cast<std::size_t>(v)].kernel;
      const auto& kb = b.views[static_cast<std::size_t>(v)].kernel;
      check(ka == kb, "model.view" + std::to_string(v) + ".kernel",
            std::to_string(ka.h) + "x" + std::to_string(ka.w), std::to_string(kb.h) + "x" + std::to_string(kb.w));
    }
  }
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

const char* to_string(Action a) {
  switch (a) {
    case Action::kCopy:
      return "copy";
    case Action::kChannelAverage:
      return "channel-average";
    case Action::kInterpolate:
      return "interpolate";
    case Action::kReinitialize:
      return "reinitialize";
    case Action::kDrop:
      return "drop";
  }
  return "?";
}

std::size_t TransferPlan::count(Action a) const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.action == a ? 1 : 0;
  return n;
}

std::string TransferPlan::audit() const {
  std::ostringstream os;
  os << "# transfer plan: source " << fingerprint_hex(source_fingerprint) << " -> target "
     << fingerprint_hex(target.fingerprint()) << "\n";
  for (const auto& e : entries) {
    os << to_string(e.action) << "\t" << e.name << "\t" << (e.from.empty() ? "-" : shape_str(e.from)) << " -> "
       << (e.to.empty() ? "-" : shape_str(e.to)) << "\n";
  }
  os << "# copy=" << count(Action::kCopy) << " channel-average=" << count(Action::kChannelAverage)
     << " interpolate=" << count(Action::kInterpolate) << " reinitialize=" << count(Action::kReinitialize)
     << " drop=" << count(Action::kDrop) << "\n";
  return os.str();
}

Tensor<float> channel_average(const Tensor<float>& w) {
  if (w.rank() != 4) throw TransferError("channel_average expects [E, C, kh, kw], got " + shape_str(w.shape()));
  if (w.dim(1) != 3) {
    throw TransferError("channel_average expects 3 input channels, got " + std::to_string(w.dim(1)));
  }
  const std::int64_t e = w.dim(0), taps = w.dim(2) * w.dim(3);
  std::vector<float> out(static_cast<std::size_t>(e * taps));
  const auto src = w.data();
  for (std::int64_t o = 0; o < e; ++o) {
    for (std::int64_t t = 0; t < taps; ++t) {
      const std::size_t base = static_cast<std::size_t>(o * 3 * taps + t);
      const double sum = static_cast<double>(src[base]) + src[base + static_cast<std::size_t>(taps)] +
                         src[base + static_cast<std::size_t>(2 * taps)];
      out[static_cast<std::size_t>(o * taps + t)] = static_cast<float>(sum / 3.0);
    }
  }
  return Tensor<float>(Shape{e, 1, w.dim(2), w.dim(3)}, std::move(out));
}

PosEncTables interpolate_posenc(const PosEncTables& src, Extent2 src_grid, Extent2 dst_grid,
                                std::int64_t dst_temporal) {
  if (src_grid.h <= 0 || src_grid.w <= 0 || dst_grid.h <= 0 || dst_grid.w <= 0 || dst_temporal <= 0) {
    throw TransferError("interpolate_posenc: grids must be positive");
  }
  if (src.spatial_h.dim(1) != src_grid.h || src.spatial_w.dim(1) != src_grid.w) {
    throw TransferError("interpolate_posenc: tables " + shape_str(src.spatial_h.shape()) + " / " +
                        shape_str(src.spatial_w.shape()) + " do not match the source grid");
  }
  PosEncTables out;
  out.spatial_h = interp_linear_1d(src.spatial_h.detach(), dst_grid.h);
  out.spatial_w = interp_linear_1d(src.spatial_w.detach(), dst_grid.w);
  out.temporal = interp_linear_1d(src.temporal.detach(), dst_temporal);
  if (src.cls) out.cls = src.cls->detach();
  return out;
}

TransferResult apply_transfer(const Checkpoint& src, const MMViTConfig& src_cfg, const MMViTConfig& dst_cfg,
                              std::uint64_t seed) {
  src_cfg.validate();
  dst_cfg.validate();
  if (src.fingerprint != src_cfg.fingerprint()) {
    throw TransferError("source checkpoint fingerprint " + fingerprint_hex(src.fingerprint) +
                        " does not match the source configuration " + fingerprint_hex(src_cfg.fingerprint()));
  }
  const auto diverging = divergent_fields(src_cfg, dst_cfg);
  if (!diverging.empty()) {
    std::string msg = "schedules differ, cannot transfer:";
    for (const auto& d : diverging) msg += " " + d + ";";
    throw TransferError(msg);
  }
  if (src_cfg.in_channels != dst_cfg.in_channels && !(src_cfg.in_channels == 3 && dst_cfg.in_channels == 1)) {
    throw TransferError("cannot adapt " + std::to_string(src_cfg.in_channels) + "-channel patchifiers to " +
                        std::to_string(dst_cfg.in_channels) + " channel(s)");
  }
  const bool modality_change = src_cfg.in_channels != dst_cfg.in_channels;

  TransferResult result;
  result.plan.source_fingerprint = src.fingerprint;
  result.plan.target = dst_cfg;
  std::mt19937_64 rng(seed);
  std::set<std::string> used;

  for (const auto& spec : parameter_specs(dst_cfg)) {
    const std::string& name = spec.name;
    const bool is_head = name == "head.weight" || name == "head.bias";
    PlanEntry entry{name, Action::kCopy, {}, spec.shape};
    Tensor<float> value;
    if (is_head && (modality_change || !src.params.contains(name) || src.params.get(name).shape() != spec.shape)) {
      entry.action = Action::kReinitialize;
      value = init_param<float>(spec, rng);
    } else {
      if (!src.params.contains(name)) throw TransferError("source checkpoint lacks parameter '" + name + "'");
      const auto& s = src.params.get(name);
      entry.from = s.shape();
      used.insert(name);
      if (ends_with(name, ".proj.weight") && name.rfind("embed.", 0) == 0 && s.dim(1) != spec.shape[1]) {
        entry.action = Action::kChannelAverage;
        value = channel_average(s);
      } else if ((ends_with(name, ".pos.spatial_h") || ends_with(name, ".pos.spatial_w") ||
                  ends_with(name, ".pos.temporal")) &&
                 s.shape() != spec.shape) {
        if (s.rank() != 2 || s.dim(0) != spec.shape[0]) {
          throw TransferError("positional table '" + name + "' has incompatible shape " + shape_str(s.shape()));
        }
        entry.action = Action::kInterpolate;
        value = interp_linear_1d(s.detach(), spec.shape[1]);
      } else {
        if (s.shape() != spec.shape) {
          throw TransferError("parameter '" + name + "' has shape " + shape_str(s.shape()) + " in the source but " +
                              shape_str(spec.shape) + " in the target");
        }
        value = s.detach();
      }
    }
    value.set_requires_grad(true);
    result.params.add(name, std::move(value));
    result.plan.entries.push_back(std::move(entry));
  }
  for (const auto& [name, t] : src.params) {
    if (!used.count(name)) result.plan.entries.push_back({name, Action::kDrop, t.shape(), {}});
  }
  return result;
}

}  // namespace mmvit::transfer
