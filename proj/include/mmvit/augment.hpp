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

// Training-time augmentations for spectrogram inputs.
//
// Features are tensors whose last two axes are (time, frequency); any leading
// axes (channels) are treated alike. Every random choice comes from the
// generator passed in, so results are a pure function of inputs and seed.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mmvit/frontend.hpp"
#include "mmvit/tensor.hpp"

namespace mmvit::augment {

struct AugmentConfig {
  bool enabled = true;
  double mixup_alpha = 0.5;
  bool cutmix = true;  // false: the mixup-only ablation, the other half is left unaltered
  bool specaug = true;
  std::int64_t specaug_max_time = 192;
  std::int64_t specaug_max_freq = 48;
  bool roll = true;
  std::uint64_t seed = 0;
};

struct LabeledExample {
  Tensor<float> features;    // [..., T, F]
  std::vector<float> label;  // class weights
};

/// Draws from Beta(alpha, alpha).
double sample_beta(double alpha, std::mt19937_64& rng);

/// lambda * a + (1 - lambda) * b for both features and labels.
LabeledExample mixup(const LabeledExample& a, const LabeledExample& b, double lambda);

/// Frames taken from b: round((1 - lambda) * T).
std::int64_t cutmix_width(std::int64_t frames, double lambda);

/// Replaces frames [t0, t0 + w) of a with b's, across every frequency bin.
/// The label weight follows the fraction of frames kept from a.
LabeledExample audio_cutmix(const LabeledExample& a, const LabeledExample& b, double lambda, std::int64_t t0);
LabeledExample audio_cutmix(const LabeledExample& a, const LabeledExample& b, double lambda, std::mt19937_64& rng);

/// One time mask and one frequency mask; widths may be zero.
struct SpecMask {
  std::int64_t t0 = 0, time_width = 0;
  std::int64_t f0 = 0, freq_width = 0;
};

SpecMask draw_spec_mask(std::int64_t frames, std::int64_t bins, const AugmentConfig& cfg, std::mt19937_64& rng);
Tensor<float> apply_spec_mask(const Tensor<float>& features, const SpecMask& mask);
Tensor<float> specaugment(const Tensor<float>& features, const AugmentConfig& cfg, std::mt19937_64& rng);
frontend::Spectrogram specaugment(const frontend::Spectrogram& s, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Circular shift along time: out[t] = in[(t - shift) mod T].
Tensor<float> random_roll(const Tensor<float>& features, std::int64_t shift);
Tensor<float> random_roll(const Tensor<float>& features, std::mt19937_64& rng);
frontend::Spectrogram random_roll(const frontend::Spectrogram& s, std::int64_t shift);

enum class MixKind { kNone, kMixup, kCutmix };
const char* to_string(MixKind kind);

/// What augment_batch did to one output example.
struct AugmentRecord {
  MixKind kind = MixKind::kNone;
  int partner = -1;
  double lambda = 1.0;  // effective weight of the example's own label
  std::int64_t cut_start = 0, cut_width = 0;
  std::int64_t roll_shift = 0;
  SpecMask mask;
};

struct AugmentLog {
  std::vector<AugmentRecord> records;
  std::vector<std::string> notices;
};

/// Seeded half/half split: one half mixed with Mixup, the other with audio
/// CutMix (or left unaltered when cfg.cutmix is false), each with a random
/// partner from the batch; then SpecAugment and roll on every example.
std::vector<LabeledExample> augment_batch(const std::vector<LabeledExample>& batch, const AugmentConfig& cfg,
                                          std::mt19937_64& rng, AugmentLog* log = nullptr);

}  // namespace mmvit::augment
