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

#include "mmvit/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmvit::augment {

namespace {

struct Layout {
  std::int64_t planes, frames, bins;
};

Layout layout_of(const Tensor<float>& t) {
  if (t.rank() < 2) throw DimensionError("augment: features need (time, frequency) axes, got " + shape_str(t.shape()));
  return {t.numel() / (t.dim(-2) * t.dim(-1)), t.dim(-2), t.dim(-1)};
}

void check_pair(const LabeledExample& a, const LabeledExample& b, const char* op) {
  if (a.features.shape() != b.features.shape()) {
    throw DimensionError(std::string(op) + ": feature shapes differ, " + shape_str(a.features.shape()) + " vs " +
                         shape_str(b.features.shape()));
  }
  if (a.label.size() != b.label.size()) {
    throw DimensionError(std::string(op) + ": label lengths differ");
  }
}

void check_lambda(double lambda, const char* op) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError(std::string(op) + ": lambda must lie in [0, 1]");
}

std::vector<float> mix_labels(const std::vector<float>& a, const std::vector<float>& b, double lambda) {
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = static_cast<float>(lambda * a[i] + (1.0 - lambda) * b[i]);
  }
  return out;
}

std::int64_t uniform_int(std::int64_t lo, std::int64_t hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

}  // namespace

double sample_beta(double alpha, std::mt19937_64& rng) {
  if (alpha <= 0.0) throw ConfigError("augment: mixup alpha must be positive");
  std::gamma_distribution<double> g(alpha, 1.0);
  const double x = g(rng), y = g(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

LabeledExample mixup(const LabeledExample& a, const LabeledExample& b, double lambda) {
  check_pair(a, b, "mixup");
  check_lambda(lambda, "mixup");
  if (lambda == 1.0) return {a.features.detach(), a.label};
  std::vector<float> out(a.features.data().size());
  const auto& x = a.features.data();
  const auto& y = b.features.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(lambda * x[i] + (1.0 - lambda) * y[i]);
  return {Tensor<float>(a.features.shape(), std::move(out)), mix_labels(a.label, b.label, lambda)};
}

std::int64_t cutmix_width(std::int64_t frames, double lambda) {
  return std::clamp<std::int64_t>(std::llround((1.0 - lambda) * static_cast<double>(frames)), 0, frames);
}

LabeledExample audio_cutmix(const LabeledExample& a, const LabeledExample& b, double lambda, std::int64_t t0) {
  check_pair(a, b, "audio_cutmix");
  check_lambda(lambda, "audio_cutmix");
  const Layout l = layout_of(a.features);
  const std::int64_t w = cutmix_width(l.frames, lambda);
  if (t0 < 0 || t0 + w > l.frames) throw ContractError("audio_cutmix: cut start outside [0, T - w]");
  std::vector<float> out(a.features.data().begin(), a.features.data().end());
  const auto& y = b.features.data();
  for (std::int64_t p = 0; p < l.planes; ++p) {
    const std::int64_t base = (p * l.frames + t0) * l.bins;
    std::copy(y.begin() + base, y.begin() + base + w * l.bins, out.begin() + base);
  }
  const double kept = 1.0 - static_cast<double>(w) / static_cast<double>(l.frames);
  return {Tensor<float>(a.features.shape(), std::move(out)), mix_labels(a.label, b.label, kept)};
}

LabeledExample audio_cutmix(const LabeledExample& a, const LabeledExample& b, double lambda, std::mt19937_64& rng) {
  const Layout l = layout_of(a.features);
  const std::int64_t w = cutmix_width(l.frames, lambda);
  return audio_cutmix(a, b, lambda, uniform_int(0, l.frames - w, rng));
}

SpecMask draw_spec_mask(std::int64_t frames, std::int64_t bins, const AugmentConfig& cfg, std::mt19937_64& rng) {
  SpecMask m;
  m.time_width = uniform_int(0, std::min(cfg.specaug_max_time, frames), rng);
  m.t0 = uniform_int(0, frames - m.time_width, rng);
  m.freq_width = uniform_int(0, std::min(cfg.specaug_max_freq, bins), rng);
  m.f0 = uniform_int(0, bins - m.freq_width, rng);
  return m;
}

Tensor<float> apply_spec_mask(const Tensor<float>& features, const SpecMask& mask) {
  const Layout l = layout_of(features);
  if (mask.t0 < 0 || mask.t0 + mask.time_width > l.frames || mask.f0 < 0 || mask.f0 + mask.freq_width > l.bins) {
    throw ContractError("apply_spec_mask: mask outside the spectrogram");
  }
  std::vector<float> out(features.data().begin(), features.data().end());
  for (std::int64_t p = 0; p < l.planes; ++p) {
    float* plane = out.data() + p * l.frames * l.bins;
    for (std::int64_t t = mask.t0; t < mask.t0 + mask.time_width; ++t) {
      std::fill(plane + t * l.bins, plane + (t + 1) * l.bins, 0.0f);
    }
    for (std::int64_t t = 0; t < l.frames; ++t) {
      std::fill(plane + t * l.bins + mask.f0, plane + t * l.bins + mask.f0 + mask.freq_width, 0.0f);
    }
  }
  return Tensor<float>(features.shape(), std::move(out));
}

Tensor<float> specaugment(const Tensor<float>& features, const AugmentConfig& cfg, std::mt19937_64& rng) {
  const Layout l = layout_of(features);
  return apply_spec_mask(features, draw_spec_mask(l.frames, l.bins, cfg, rng));
}

frontend::Spectrogram specaugment(const frontend::Spectrogram& s, const AugmentConfig& cfg, std::mt19937_64& rng) {
  return frontend::Spectrogram::from_tensor(specaugment(s.to_tensor(), cfg, rng));
}

Tensor<float> random_roll(const Tensor<float>& features, std::int64_t shift) {
  const Layout l = layout_of(features);
  std::vector<float> out(features.data().size());
  const auto& x = features.data();
  const std::int64_t s = l.frames == 0 ? 0 : ((shift % l.frames) + l.frames) % l.frames;
  for (std::int64_t p = 0; p < l.planes; ++p) {
    const std::int64_t base = p * l.frames * l.bins;
    for (std::int64_t t = 0; t < l.frames; ++t) {
      const std::int64_t src = (t - s + l.frames) % l.frames;
      std::copy(x.begin() + base + src * l.bins, x.begin() + base + (src + 1) * l.bins,
                out.begin() + base + t * l.bins);
    }
  }
  return Tensor<float>(features.shape(), std::move(out));
}

Tensor<float> random_roll(const Tensor<float>& features, std::mt19937_64& rng) {
  const Layout l = layout_of(features);
  return random_roll(features, uniform_int(0, l.frames - 1, rng));
}

frontend::Spectrogram random_roll(const frontend::Spectrogram& s, std::int64_t shift) {
  return frontend::Spectrogram::from_tensor(random_roll(s.to_tensor(), shift));
}

const char* to_string(MixKind kind) {
  switch (kind) {
    case MixKind::kMixup:
      return "mixup";
    case MixKind::kCutmix:
      return "cutmix";
    case MixKind::kNone:
      break;
  }
  return "none";
}

std::vector<LabeledExample> augment_batch(const std::vector<LabeledExample>& batch, const AugmentConfig& cfg,
                                          std::mt19937_64& rng, AugmentLog* log) {
  std::vector<LabeledExample> out;
  out.reserve(batch.size());
  for (const auto& e : batch) out.push_back({e.features.detach(), e.label});
  if (log) log->records.assign(batch.size(), AugmentRecord{});
  if (!cfg.enabled) return out;
  const int n = static_cast<int>(batch.size());
  if (n < 2) {
    if (log) log->notices.push_back("batch of " + std::to_string(n) + ": augmentation skipped");
    return out;
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int pos = 0; pos < n; ++pos) {
    const int i = order[static_cast<std::size_t>(pos)];
    const auto ui = static_cast<std::size_t>(i);
    const bool first_half = pos < n / 2;
    AugmentRecord rec;
    if (first_half || cfg.cutmix) {
      int j = static_cast<int>(uniform_int(0, n - 2, rng));
      if (j >= i) ++j;
      const double lambda = sample_beta(cfg.mixup_alpha, rng);
      rec.partner = j;
      if (first_half) {
        rec.kind = MixKind::kMixup;
        rec.lambda = lambda;
        out[ui] = mixup(batch[ui], batch[static_cast<std::size_t>(j)], lambda);
      } else {
        rec.kind = MixKind::kCutmix;
        const std::int64_t frames = batch[ui].features.dim(-2);
        rec.cut_width = cutmix_width(frames, lambda);
        rec.cut_start = uniform_int(0, frames - rec.cut_width, rng);
        rec.lambda = 1.0 - static_cast<double>(rec.cut_width) / static_cast<double>(frames);
        out[ui] = audio_cutmix(batch[ui], batch[static_cast<std::size_t>(j)], lambda, rec.cut_start);
      }
    }
    if (log) log->records[ui] = rec;
  }
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    auto& f = out[ui].features;
    if (cfg.specaug) {
      const SpecMask m = draw_spec_mask(f.dim(-2), f.dim(-1), cfg, rng);
      f = apply_spec_mask(f, m);
      if (log) log->records[ui].mask = m;
    }
    if (cfg.roll) {
      const std::int64_t shift = uniform_int(0, f.dim(-2) - 1, rng);
      f = random_roll(f, shift);
      if (log) log->records[ui].roll_shift = shift;
    }
  }
  return out;
}

}  // namespace mmvit::augment
