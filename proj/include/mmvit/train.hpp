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

// Training and evaluation loops.
//
// Every epoch and batch draws from its own generator seeded by (seed, epoch,
// batch), so a run is a deterministic function of its inputs. Batches may be
// prepared by loader threads (num_workers > 1); the optimizer step is serial.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmvit/augment.hpp"
#include "mmvit/checkpoint.hpp"
#include "mmvit/dataset.hpp"
#include "mmvit/metrics.hpp"
#include "mmvit/model.hpp"
#include "mmvit/optim.hpp"

namespace mmvit::trainkit {

struct EarlyStop {
  double loss_below = 0.0;        // epoch mean training loss strictly below this
  double metric_at_least = 1.0;   // and evaluation metric at least this
};

struct TrainOptions {
  int epochs = 1;
  std::int64_t max_steps = 0;  // 0: no cap
  int batch_size = 8;
  AdamWConfig optim;
  double warmup_fraction = 0.05;
  std::optional<double> clip_norm;  // global gradient-norm clipping threshold
  bool weighted_sampling = false;
  augment::AugmentConfig augment;
  std::uint64_t seed = 0;
  int eval_every = 1;  // epochs
  int num_workers = 1;
  std::optional<EarlyStop> early_stop;
  std::filesystem::path out_dir;  // best.ckpt, last.ckpt and metrics.csv when set
};

struct EpochRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
  double metric = 0.0;  // NaN when not evaluated this epoch
  double lr = 0.0;
  double wall_ms = 0.0;

  std::string csv() const;
};

inline constexpr const char* kMetricsHeader = "epoch,step,loss,metric,lr,wall_ms";

/// Resumable progress, persisted as "state.*" tensors next to the parameters.
struct TrainState {
  int epoch = 0;  // completed epochs
  double best_metric = -1.0;
  OptimizerState optim;

  void store(ParamStore<float>& state) const;
  static TrainState load(const ParamStore<float>& state, const ParamStore<float>& params);
};

struct TrainResult {
  std::vector<EpochRecord> log;
  TrainState state;
  std::optional<EvalReport> last_eval;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mean task loss of one example: softmax cross-entropy against the soft
/// target (single-label) or mean binary cross-entropy with logits (multi-label).
Tensor<float> task_loss(const Tensor<float>& logits, const std::vector<float>& target, Task task);

EvalReport evaluate(const MMViT<float>& model, const Dataset& data);

/// Trains `model` in place. `val` defaults to the training set (without
/// augmentation). Throws NumericError if the loss becomes non-finite.
TrainResult train(MMViT<float>& model, const Dataset& data, const TrainOptions& opts, const Dataset* val = nullptr,
                  std::optional<TrainState> resume = std::nullopt, const EpochCallback& on_epoch = {});

/// Number of loader threads from MMVIT_NUM_WORKERS (default 1).
int workers_from_env();

}  // namespace mmvit::trainkit
