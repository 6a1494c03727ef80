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

#include "mmvit/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

namespace mmvit::trainkit {

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["task"] = to_string(task);
  j["metric"] = metric_name();
  j["value"] = metric;
  j["count"] = count;
  if (!per_class_ap.empty()) {
    nlohmann::json ap = nlohmann::json::array();
    for (const auto& a : per_class_ap) ap.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
    j["per_class_ap"] = ap;
  }
  return j.dump();
}

std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("average_precision: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0.0, total = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] != 0) {
      hits += 1.0;
      total += hits / static_cast<double>(k + 1);
    }
  }
  if (hits == 0.0) return std::nullopt;
  return total / hits;
}

EvalReport mean_average_precision(const ScoreMatrix& scores, const ScoreMatrix& labels) {
  if (scores.rows != labels.rows || scores.cols != labels.cols) {
    throw DimensionError("mean_average_precision: scores and labels shapes differ");
  }
  EvalReport r;
  r.task = Task::kMultilabel;
  r.count = scores.rows;
  double sum = 0.0;
  int present = 0;
  for (std::int64_t c = 0; c < scores.cols; ++c) {
    std::vector<double> s(static_cast<std::size_t>(scores.rows));
    std::vector<int> l(static_cast<std::size_t>(scores.rows));
    for (std::int64_t i = 0; i < scores.rows; ++i) {
      s[static_cast<std::size_t>(i)] = scores.at(i, c);
      l[static_cast<std::size_t>(i)] = labels.at(i, c) > 0.5 ? 1 : 0;
    }
    auto ap = average_precision(s, l);
    r.per_class_ap.push_back(ap);
    if (ap) {
      sum += *ap;
      ++present;
    }
  }
  if (present == 0) throw InputError("mean_average_precision: no class has a positive label");
  r.metric = sum / present;
  return r;
}

double top1_accuracy(const ScoreMatrix& scores, const std::vector<int>& labels) {
  if (static_cast<std::int64_t>(labels.size()) != scores.rows) {
    throw DimensionError("top1_accuracy: one label per row required");
  }
  if (scores.rows == 0) return 0.0;
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < scores.rows; ++i) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < scores.cols; ++c) {
      if (scores.at(i, c) > scores.at(i, best)) best = c;
    }
    correct += best == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows);
}

}  // namespace mmvit::trainkit
