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

#include "mmvit/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>

namespace mmvit::trainkit {

namespace fs = std::filesystem;

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

Tensor<float> scalar(double v) { return Tensor<float>(Shape{1}, {static_cast<float>(v)}); }

double read_scalar(const ParamStore<float>& s, const std::string& name) {
  if (!s.contains(name)) throw CheckpointError(CheckpointError::Kind::kCorruptPayload, "missing '" + name + "'");
  return s.get(name).data()[0];
}

using Batch = std::vector<augment::LabeledExample>;

}  // namespace

std::string EpochRecord::csv() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%lld,%.6f,%s,%.3g,%.1f", epoch, static_cast<long long>(step), loss,
                std::isnan(metric) ? "" : std::to_string(metric).c_str(), lr, wall_ms);
  return buf;
}

void TrainState::store(ParamStore<float>& state) const {
  state.add("state.epoch", scalar(epoch));
  state.add("state.best_metric", scalar(best_metric));
  state.add("state.optim.step", scalar(static_cast<double>(optim.step)));
  for (const auto& [name, t] : optim.m) state.add("state.optim.m." + name, t.detach());
  for (const auto& [name, t] : optim.v) state.add("state.optim.v." + name, t.detach());
}

TrainState TrainState::load(const ParamStore<float>& state, const ParamStore<float>& params) {
  TrainState s;
  s.epoch = static_cast<int>(read_scalar(state, "state.epoch"));
  s.best_metric = read_scalar(state, "state.best_metric");
  s.optim.step = static_cast<std::int64_t>(read_scalar(state, "state.optim.step"));
  for (const auto& [name, t] : params) {
    for (const char* which : {"m", "v"}) {
      const std::string key = std::string("state.optim.") + which + "." + name;
      if (!state.contains(key) || state.get(key).shape() != t.shape()) {
        throw CheckpointError(CheckpointError::Kind::kCorruptPayload, "optimizer state '" + key + "' missing or mis-shaped");
      }
      (which[0] == 'm' ? s.optim.m : s.optim.v).add(name, state.get(key).detach());
    }
  }
  return s;
}

Tensor<float> task_loss(const Tensor<float>& logits, const std::vector<float>& target, Task task) {
  std::span<const float> t(target);
  return task == Task::kSingleLabel ? softmax_cross_entropy(logits, t) : bce_with_logits(logits, t);
}

EvalReport evaluate(const MMViT<float>& model, const Dataset& data) {
  if (data.examples.empty()) throw InputError("evaluate: empty dataset");
  ScoreMatrix scores(static_cast<std::int64_t>(data.size()), data.num_classes);
  ScoreMatrix labels(static_cast<std::int64_t>(data.size()), data.num_classes);
  std::vector<int> top;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto logits = model.forward(data.examples[i].features);
    for (int c = 0; c < data.num_classes; ++c) {
      scores.at(static_cast<std::int64_t>(i), c) = logits.data()[static_cast<std::size_t>(c)];
      labels.at(static_cast<std::int64_t>(i), c) = data.examples[i].target[static_cast<std::size_t>(c)];
    }
    top.push_back(data.examples[i].labels.empty() ? -1 : data.examples[i].labels.front());
  }
  if (data.task == Task::kMultilabel) return mean_average_precision(scores, labels);
  EvalReport r;
  r.task = Task::kSingleLabel;
  r.count = scores.rows;
  r.metric = top1_accuracy(scores, top);
  return r;
}

int workers_from_env() {
  const char* v = std::getenv("MMVIT_NUM_WORKERS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 256) throw ConfigError("MMVIT_NUM_WORKERS must be an integer in [1, 256]");
  return static_cast<int>(n);
}

TrainResult train(MMViT<float>& model, const Dataset& data, const TrainOptions& opts, const Dataset* val,
                  std::optional<TrainState> resume, const EpochCallback& on_epoch) {
  if (data.examples.empty()) throw InputError("train: dataset is empty");
  if (opts.batch_size < 1 || opts.epochs < 0 || opts.eval_every < 1) {
    throw ConfigError("train: batch_size and eval_every must be >= 1, epochs >= 0");
  }
  const MMViTConfig& cfg = model.config();
  if (data.task != cfg.task) throw ConfigError("task: dataset task does not match model.task");
  auto& params = model.params();
  params.set_requires_grad(true);

  TrainResult result;
  result.state = resume ? std::move(*resume) : TrainState{0, -1.0, OptimizerState::like(params)};
  TrainState& st = result.state;

  DatasetIndex index;
  if (opts.weighted_sampling) {
    for (int c = 0; c < data.num_classes; ++c) index.class_names.push_back(std::to_string(c));
    for (const auto& e : data.examples) index.entries.push_back({"", e.labels});
    index.reindex();
  }
  const std::size_t n = data.size();
  const std::int64_t batches_per_epoch = static_cast<std::int64_t>((n + opts.batch_size - 1) / opts.batch_size);
  std::int64_t total_steps = batches_per_epoch * opts.epochs;
  if (opts.max_steps > 0) total_steps = std::min(total_steps, opts.max_steps);
  const LrSchedule schedule{opts.optim.lr, opts.warmup_fraction, std::max<std::int64_t>(1, total_steps)};

  std::ofstream csv;
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    const fs::path log_path = opts.out_dir / "metrics.csv";
    const bool fresh = !fs::exists(log_path) || fs::file_size(log_path) == 0;
    csv.open(log_path, std::ios::app);
    if (!csv) throw InputError("cannot open '" + log_path.string() + "' for appending");
    if (fresh) csv << kMetricsHeader << "\n";
  }
  auto save = [&](const fs::path& path, bool with_state) {
    Checkpoint c;
    c.fingerprint = cfg.fingerprint();
    c.params = params.clone();
    if (with_state) st.store(c.state);
    save_checkpoint(c, path);
  };

  const auto t_start = std::chrono::steady_clock::now();
  const int workers = std::max(1, opts.num_workers);
  for (int epoch = st.epoch + 1; epoch <= opts.epochs; ++epoch) {
    if (opts.max_steps > 0 && st.optim.step >= opts.max_steps) break;
    auto erng = stream(opts.seed, static_cast<std::uint64_t>(epoch), 0);
    std::vector<std::size_t> order;
    if (opts.weighted_sampling) {
      order = weighted_sampler(index, erng, n);
    } else {
      order.resize(n);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), erng);
    }
    auto make_batch = [&, epoch](std::int64_t b) {
      Batch batch;
      const std::size_t lo = static_cast<std::size_t>(b) * static_cast<std::size_t>(opts.batch_size);
      for (std::size_t k = lo; k < std::min(n, lo + static_cast<std::size_t>(opts.batch_size)); ++k) {
        const auto& ex = data.examples[order[k]];
        batch.push_back({ex.features, ex.target});
      }
      auto brng = stream(opts.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(b) + 1);
      return augment::augment_batch(batch, opts.augment, brng);
    };

    std::deque<std::future<Batch>> pending;
    std::int64_t next = 0;
    auto refill = [&] {
      while (next < batches_per_epoch && static_cast<int>(pending.size()) < workers) {
        pending.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, make_batch, next++));
      }
    };
    double loss_sum = 0.0;
    std::int64_t loss_count = 0;
    double lr = schedule.at(st.optim.step);
    refill();
    for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
      if (opts.max_steps > 0 && st.optim.step >= opts.max_steps) break;
      Batch batch = pending.front().get();
      pending.pop_front();
      refill();
      params.zero_grad();
      double batch_loss = 0.0;
      auto drng = stream(opts.seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(epoch),
                         static_cast<std::uint64_t>(b));
      for (const auto& ex : batch) {
        Tape<float> tape;
        TapeScope<float> scope(tape);
        ForwardOptions fo{true, &drng};
        auto loss = task_loss(model.forward(ex.features, fo), ex.label, cfg.task);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(st.optim.step + 1) + ": loss is " + std::to_string(value));
        }
        batch_loss += value;
        tape.backward(scale(loss, 1.0 / static_cast<double>(batch.size())));
      }
      if (opts.clip_norm) clip_grad_norm(params, *opts.clip_norm);
      lr = schedule.at(st.optim.step);
      AdamWConfig step_cfg = opts.optim;
      step_cfg.lr = lr;
      adamw_step(params, st.optim, step_cfg);
      loss_sum += batch_loss;
      loss_count += static_cast<std::int64_t>(batch.size());
    }
    for (auto& f : pending) f.wait();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = st.optim.step;
    rec.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    rec.lr = lr;
    rec.metric = std::numeric_limits<double>::quiet_NaN();
    const bool last = epoch == opts.epochs || (opts.max_steps > 0 && st.optim.step >= opts.max_steps);
    if (epoch % opts.eval_every == 0 || last) {
      auto report = evaluate(model, val ? *val : data);
      rec.metric = report.metric;
      result.last_eval = report;
      if (report.metric > st.best_metric) {
        st.best_metric = report.metric;
        if (!opts.out_dir.empty()) save(opts.out_dir / "best.ckpt", false);
      }
    }
    st.epoch = epoch;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    result.log.push_back(rec);
    if (csv) csv << rec.csv() << "\n" << std::flush;
    if (!opts.out_dir.empty()) save(opts.out_dir / "last.ckpt", true);
    if (on_epoch) on_epoch(rec);
    if (opts.early_stop && !std::isnan(rec.metric) && rec.loss < opts.early_stop->loss_below &&
        rec.metric >= opts.early_stop->metric_at_least) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace mmvit::trainkit
