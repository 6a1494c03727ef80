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

// Binary checkpoint files.
//
//   "MMVC" | u32 version | u64 fingerprint | u32 count |
//   count x ( u16 name_len | name | u32 rank | rank x u32 extent | f32 payload )
//
// All integers and floats are little-endian. Tensors whose names start with
// "state." carry trainer state (optimizer moments, counters) and are kept apart
// from the model parameters.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmvit/config.hpp"
#include "mmvit/params.hpp"

namespace mmvit {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kStatePrefix = "state.";

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t fingerprint = 0;
  ParamStore<float> params;
  ParamStore<float> state;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void save_checkpoint(const ParamStore<float>& params, const MMViTConfig& cfg, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws CheckpointError(kFingerprintMismatch) quoting both fingerprints.
void verify_fingerprint(const Checkpoint& ckpt, const MMViTConfig& cfg);

std::string fingerprint_hex(std::uint64_t fp);

}  // namespace mmvit
