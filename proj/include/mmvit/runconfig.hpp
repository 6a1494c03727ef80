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

// Flat key=value run configuration: `preset`, `model.*`, `train.*`, `augment.*`.
// Lines starting with '#' and blank lines are ignored. A `preset` line is
// applied before every other key regardless of where it appears.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mmvit/config.hpp"
#include "mmvit/train.hpp"

namespace mmvit {

struct RunConfig {
  std::string preset = "audio";
  MMViTConfig model = MMViTConfig::audio();
  trainkit::TrainOptions train;

  /// Sets one dotted key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Applies "key=value" assignments, `preset` first.
  void apply(const std::vector<std::string>& assignments);
  /// Every key with its resolved value, one per line, in a stable order.
  std::string render() const;

  static RunConfig from_preset(const std::string& name);
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  static std::vector<std::string> keys();
};

}  // namespace mmvit
