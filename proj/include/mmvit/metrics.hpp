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
#include <optional>
#include <string>
#include <vector>

#include "mmvit/config.hpp"

namespace mmvit::trainkit {

/// Row-major N x C score matrix.
struct ScoreMatrix {
  std::int64_t rows = 0, cols = 0;
  std::vector<double> values;

  ScoreMatrix() = default;
  ScoreMatrix(std::int64_t r, std::int64_t c) : rows(r), cols(c), values(static_cast<std::size_t>(r * c), 0.0) {}
  double& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * cols + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
};

struct EvalReport {
  Task task = Task::kMultilabel;
  double metric = 0.0;  // mAP or top-1 accuracy
  std::vector<std::optional<double>> per_class_ap;  // empty for single-label; nullopt where a class has no positives
  std::int64_t count = 0;

  std::string metric_name() const { return task == Task::kMultilabel ? "mAP" : "top1"; }
  /// One JSON object on a single line.
  std::string to_json() const;
};

/// Mean precision at the rank of each positive, ranking by score descending
/// with ties kept in original order. nullopt when there are no positives.
std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

/// labels is a binary N x C matrix. Classes with no positives are excluded
/// from the mean and reported as nullopt. Throws InputError if no class has a positive.
EvalReport mean_average_precision(const ScoreMatrix& scores, const ScoreMatrix& labels);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double top1_accuracy(const ScoreMatrix& scores, const std::vector<int>& labels);

}  // namespace mmvit::trainkit
