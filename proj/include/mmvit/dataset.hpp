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

// Dataset manifests and in-memory datasets.
//
// A manifest is a TSV file with one `path<TAB>id,id,...` line per example;
// relative paths resolve against the manifest's directory. A sibling
// `classes.txt` maps ids to names, one `id<TAB>name` per line.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mmvit/config.hpp"
#include "mmvit/tensor.hpp"

namespace mmvit::trainkit {

struct DatasetEntry {
  std::string path;
  std::vector<int> labels;
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;
  std::vector<std::string> class_names;
  std::vector<std::int64_t> frequencies;  // examples carrying each class
  std::vector<double> weights;            // sum over an example's classes of 1 / frequency
  std::filesystem::path root;             // directory relative paths resolve against

  int num_classes() const { return static_cast<int>(class_names.size()); }
  bool multilabel() const;
  /// Recomputes frequencies and weights; throws InputError on unlabeled or out-of-range entries.
  void reindex();
};

DatasetIndex load_manifest(const std::filesystem::path& manifest, const std::filesystem::path& classes = {});
void save_manifest(const DatasetIndex& index, const std::filesystem::path& manifest,
                   const std::filesystem::path& classes = {});

/// n draws with replacement, each index chosen with probability proportional to its weight.
std::vector<std::size_t> weighted_sampler(const DatasetIndex& index, std::mt19937_64& rng, std::size_t n);

struct Example {
  Tensor<float> features;     // [C, H, W] model input
  std::vector<float> target;  // one-hot / multi-hot class weights
  std::vector<int> labels;
};

struct Dataset {
  std::vector<Example> examples;
  int num_classes = 0;
  Task task = Task::kSingleLabel;

  std::size_t size() const { return examples.size(); }
};

/// Loads every entry as a model input for `cfg`: .ntc tensors as stored,
/// .wav through the log-mel front-end, .ppm through the image front-end.
/// Throws ConfigError (naming `task`) when multi-label entries meet a
/// single-label configuration, and InputError for unreadable or mis-shaped files.
Dataset load_dataset(const DatasetIndex& index, const MMViTConfig& cfg);

/// Class-separable random spectrograms: Gaussian noise plus a class-specific
/// frequency band. `per_class` examples of each of cfg.num_classes classes.
Dataset make_synthetic(const MMViTConfig& cfg, int per_class, std::uint64_t seed);

/// Writes examples as NTC files plus manifest.tsv and classes.txt in `dir`.
DatasetIndex write_dataset(const Dataset& data, const std::filesystem::path& dir);

}  // namespace mmvit::trainkit
