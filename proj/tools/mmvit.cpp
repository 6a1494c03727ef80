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

// mmvit: command-line front end.
//
// Exit codes: 0 success, 1 data error, 2 usage or configuration error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmvit/augment.hpp"
#include "mmvit/checkpoint.hpp"
#include "mmvit/dataset.hpp"
#include "mmvit/frontend.hpp"
#include "mmvit/model.hpp"
#include "mmvit/runconfig.hpp"
#include "mmvit/train.hpp"
#include "mmvit/transfer.hpp"

namespace fs = std::filesystem;
using namespace mmvit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct ConfigArgs {
  std::string file;
  std::string preset;
  std::vector<std::string> overrides;

  void attach(CLI::App* app, const std::string& default_preset) {
    preset = default_preset;
    app->add_option("--config", file, "run configuration file (key=value lines)");
    app->add_option("--preset", preset, "preset used when no --config is given (audio, image, tiny)")
        ->capture_default_str();
    app->add_option("--set", overrides, "override a config key, e.g. --set model.embed_dim=48");
  }

  RunConfig resolve() const {
    RunConfig rc = file.empty() ? RunConfig::from_preset(preset) : RunConfig::load(file);
    rc.apply(overrides);
    rc.model.validate();
    return rc;
  }
};

void print_config(const RunConfig& rc) {
  std::cout << "# resolved config\n" << rc.render() << std::flush;
}

// Accepts a dataset directory (manifest.tsv inside) or a manifest path.
trainkit::Dataset open_dataset(const std::string& where, const MMViTConfig& cfg) {
  fs::path p(where);
  if (fs::is_directory(p)) p /= "manifest.tsv";
  if (!fs::exists(p)) throw InputError("no dataset manifest at '" + p.string() + "'");
  return trainkit::load_dataset(trainkit::load_manifest(p), cfg);
}

std::string stamp(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string grids_str(const std::vector<Extent2>& grids) {
  std::string s;
  for (std::size_t i = 0; i < grids.size(); ++i) {
    s += (i ? "," : "") + std::to_string(grids[i].h) + "x" + std::to_string(grids[i].w);
  }
  return s;
}

int cmd_extract(const std::vector<std::string>& wavs, const std::string& wav_dir, const std::string& out,
                std::int64_t frames) {
  std::vector<fs::path> inputs(wavs.begin(), wavs.end());
  if (!wav_dir.empty()) {
    if (!fs::is_directory(wav_dir)) throw InputError("'" + wav_dir + "' is not a directory");
    for (const auto& e : fs::directory_iterator(wav_dir)) {
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (e.is_regular_file() && ext == ".wav") inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());
  }
  if (inputs.empty()) {
    std::cerr << "warning: no WAV files found; nothing to do\n";
    return kExitOk;
  }
  fs::create_directories(out);
  int failures = 0;
  for (const auto& in : inputs) {
    try {
      auto wave = frontend::load_wav(in);
      if (wave.sample_rate_hz != frontend::kSampleRateHz) wave = frontend::resample_linear(wave, frontend::kSampleRateHz);
      const auto spec = frontend::fit_length(frontend::logmel_fbank(wave), frames);
      const fs::path dst = fs::path(out) / (in.stem().string() + ".ntc");
      frontend::save_ntc(dst, spec.to_tensor());
      std::cout << in.string() << " -> " << dst.string() << " [" << spec.frames << "x" << spec.bins << "]\n";
    } catch (const Error& e) {
      std::cerr << "error: " << in.string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  std::cout << (inputs.size() - static_cast<std::size_t>(failures)) << " of " << inputs.size() << " files converted\n";
  return failures ? kExitData : kExitOk;
}

int cmd_train(const ConfigArgs& ca, const std::string& data_dir, std::optional<int> epochs,
              std::optional<std::uint64_t> seed, const std::string& resume, bool no_cutmix, const std::string& out,
              std::optional<std::int64_t> max_steps) {
  RunConfig rc = ca.resolve();
  if (epochs) rc.train.epochs = *epochs;
  if (seed) rc.train.seed = *seed;
  if (max_steps) rc.train.max_steps = *max_steps;
  if (no_cutmix) rc.train.augment.cutmix = false;
  rc.train.num_workers = trainkit::workers_from_env();
  rc.train.out_dir = out;
  print_config(rc);
  std::cout << "num_workers=" << rc.train.num_workers << (rc.train.num_workers > 1 ? " (non-deterministic)" : "")
            << "\n";

  const auto data = open_dataset(data_dir, rc.model);
  std::optional<trainkit::TrainState> state;
  ParamStore<float> params;
  if (!resume.empty()) {
    const auto ck = load_checkpoint(resume);
    verify_fingerprint(ck, rc.model);
    params = ck.params.clone();
    state = trainkit::TrainState::load(ck.state, params);
    std::cout << "resuming after epoch " << state->epoch << ", step " << state->optim.step << "\n";
  } else {
    params = init_params<float>(rc.model, rc.train.seed);
  }
  MMViT<float> model(rc.model, std::move(params));
  std::cout << trainkit::kMetricsHeader << "\n";
  const auto result = trainkit::train(model, data, rc.train, nullptr, state,
                                      [](const trainkit::EpochRecord& r) { std::cout << r.csv() << std::endl; });
  if (result.last_eval) {
    std::cout << "final " << result.last_eval->metric_name() << "=" << result.last_eval->metric
              << " best=" << result.state.best_metric << (result.stopped_early ? " (early stop)" : "") << "\n";
  }
  std::cout << "wrote " << (fs::path(out) / "best.ckpt").string() << ", " << (fs::path(out) / "last.ckpt").string()
            << ", " << (fs::path(out) / "metrics.csv").string() << "\n";
  return kExitOk;
}

int cmd_eval(const ConfigArgs& ca, const std::string& ckpt_path, const std::string& data_dir, const std::string& json_out) {
  RunConfig rc = ca.resolve();
  print_config(rc);
  if (!fs::exists(ckpt_path)) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint '" + ckpt_path + "' not found");
  const auto ck = load_checkpoint(ckpt_path);
  verify_fingerprint(ck, rc.model);
  const auto data = open_dataset(data_dir, rc.model);
  MMViT<float> model(rc.model, ck.params.clone());
  const auto report = trainkit::evaluate(model, data);
  std::cout << report.metric_name() << "=" << report.metric << " over " << report.count << " examples\n";
  const std::string line = report.to_json();
  std::cout << line << "\n";
  if (!json_out.empty()) {
    std::ofstream os(json_out, std::ios::app);
    if (!os) throw InputError("cannot append to '" + json_out + "'");
    os << line << "\n";
  }
  return kExitOk;
}

int cmd_inspect(const ConfigArgs& ca) {
  RunConfig rc = ca.resolve();
  print_config(rc);
  const auto& cfg = rc.model;
  const auto sched = build_schedule(cfg);
  std::cout << "\n"
            << stamp("layer", 7) << stamp("stage", 7) << stamp("kind", 8) << stamp("channels", 12) << stamp("heads", 7)
            << stamp("grids", 22) << stamp("tokens", 18) << stamp("params", 12) << "flops\n";
  for (const auto& l : sched.layers) {
    std::string tokens;
    for (std::size_t v = 0; v < l.grids_out.size(); ++v) {
      tokens += (v ? "," : "") + std::to_string(l.grids_out[v].count() + (v == 0 ? 1 : 0));
    }
    std::cout << stamp(std::to_string(l.index), 7) << stamp(std::to_string(l.stage), 7) << stamp(to_string(l.kind), 8)
              << stamp(std::to_string(l.channels_in) + "->" + std::to_string(l.channels_out), 12)
              << stamp(std::to_string(l.heads), 7) << stamp(grids_str(l.grids_out), 22) << stamp(tokens, 18)
              << stamp(std::to_string(layer_params(cfg, l.index)), 12) << layer_flops(cfg, l) << "\n";
  }
  std::string sizes;
  for (std::size_t i = 0; i < sched.stage_sizes.size(); ++i) sizes += (i ? "/" : "") + std::to_string(sched.stage_sizes[i]);
  std::cout << "\nlayers=" << sched.size() << " stage_sizes=" << sizes << "\n"
            << "total_params=" << count_params(cfg) << "\n"
            << "total_flops=" << estimate_flops(cfg) << "\n"
            << "fingerprint=" << fingerprint_hex(cfg.fingerprint()) << "\n";
  return kExitOk;
}

int cmd_transfer(const std::string& from, const ConfigArgs& src_args, const ConfigArgs& dst_args,
                 const std::string& out, std::uint64_t seed, bool check_forward) {
  const RunConfig src = src_args.resolve();
  const RunConfig dst = dst_args.resolve();
  std::cout << "# source model\n" << src.render() << "# target model\n" << dst.render();
  const auto ck = load_checkpoint(from);
  auto result = transfer::apply_transfer(ck, src.model, dst.model, seed);
  std::cout << "\n" << result.plan.audit();
  if (check_forward) {
    MMViT<float> model(dst.model, result.params.clone());
    const auto& c = dst.model;
    const auto logits = model.forward(Tensor<float>::zeros(Shape{c.in_channels, c.input_h, c.input_w}));
    std::cout << "forward check: logits " << shape_str(logits.shape()) << "\n";
  }
  save_checkpoint(result.params, dst.model, out);
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_augment_preview(const ConfigArgs& ca, const std::string& data_dir, std::uint64_t seed, int batch,
                        const std::string& out, bool no_cutmix) {
  RunConfig rc = ca.resolve();
  rc.train.augment.enabled = true;
  if (no_cutmix) rc.train.augment.cutmix = false;
  print_config(rc);
  const auto data = open_dataset(data_dir, rc.model);
  std::vector<augment::LabeledExample> examples;
  for (std::size_t i = 0; i < std::min<std::size_t>(data.size(), static_cast<std::size_t>(batch)); ++i) {
    examples.push_back({data.examples[i].features, data.examples[i].target});
  }
  std::mt19937_64 rng(seed);
  augment::AugmentLog log;
  const auto mixed = augment::augment_batch(examples, rc.train.augment, rng, &log);
  for (const auto& n : log.notices) std::cout << "notice: " << n << "\n";
  if (!out.empty()) fs::create_directories(out);
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    const auto& r = log.records[i];
    std::printf("example %zu: %s partner=%d lambda=%.6f cut=[%lld,+%lld) roll=%lld time_mask=[%lld,+%lld) freq_mask=[%lld,+%lld)\n",
                i, augment::to_string(r.kind), r.partner, r.lambda, static_cast<long long>(r.cut_start),
                static_cast<long long>(r.cut_width), static_cast<long long>(r.roll_shift),
                static_cast<long long>(r.mask.t0), static_cast<long long>(r.mask.time_width),
                static_cast<long long>(r.mask.f0), static_cast<long long>(r.mask.freq_width));
    if (!out.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "preview_%04zu.ntc", i);
      frontend::save_ntc(fs::path(out) / name, mixed[i].features);
    }
  }
  std::fflush(stdout);
  return kExitOk;
}

int cmd_make_synthetic(const ConfigArgs& ca, int per_class, std::uint64_t seed, const std::string& out) {
  RunConfig rc = ca.resolve();
  print_config(rc);
  const auto data = trainkit::make_synthetic(rc.model, per_class, seed);
  const auto index = trainkit::write_dataset(data, out);
  std::cout << "wrote " << index.entries.size() << " examples to " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view multiscale vision transformer toolkit"};
  app.require_subcommand(1);

  auto* ex = app.add_subcommand("extract-features", "WAV files to 1024x128 log-mel NTC tensors");
  std::vector<std::string> wavs;
  std::string wav_dir, ex_out;
  std::int64_t frames = frontend::kModelFrames;
  ex->add_option("--wav", wavs, "input WAV file (repeatable)");
  ex->add_option("--wav-dir", wav_dir, "directory of WAV files");
  ex->add_option("--out", ex_out, "output directory")->required();
  ex->add_option("--frames", frames, "frames per clip after padding/cropping")->capture_default_str();

  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  ConfigArgs tr_cfg;
  tr_cfg.attach(tr, "tiny");
  std::string tr_data, tr_resume, tr_out = "run";
  std::optional<int> tr_epochs;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::int64_t> tr_max_steps;
  bool tr_no_cutmix = false;
  tr->add_option("--data", tr_data, "dataset directory or manifest.tsv")->required();
  tr->add_option("--epochs", tr_epochs, "override train.epochs");
  tr->add_option("--seed", tr_seed, "override train.seed");
  tr->add_option("--max-steps", tr_max_steps, "override train.max_steps");
  tr->add_option("--resume", tr_resume, "continue from a last.ckpt");
  tr->add_flag("--no-cutmix", tr_no_cutmix, "Mixup on half the batch only; the other half is left unaltered");
  tr->add_option("--out", tr_out, "output directory")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ConfigArgs ev_cfg;
  ev_cfg.attach(ev, "tiny");
  std::string ev_ckpt, ev_data, ev_json = "eval.jsonl";
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory or manifest.tsv")->required();
  ev->add_option("--json-out", ev_json, "JSON-lines file to append the report to")->capture_default_str();

  auto* in = app.add_subcommand("inspect", "print the layer schedule");
  ConfigArgs in_cfg;
  in_cfg.attach(in, "audio");

  auto* tf = app.add_subcommand("transfer", "initialize a model from a checkpoint of another configuration");
  ConfigArgs tf_src, tf_dst;
  std::string tf_from, tf_out;
  std::uint64_t tf_seed = 0;
  bool tf_check = false;
  tf_src.preset = "image";
  tf_dst.preset = "audio";
  tf->add_option("--from", tf_from, "source checkpoint")->required();
  tf->add_option("--from-config", tf_src.file, "source run configuration");
  tf->add_option("--from-preset", tf_src.preset, "source preset when no --from-config")->capture_default_str();
  tf->add_option("--to-config", tf_dst.file, "target run configuration");
  tf->add_option("--to-preset", tf_dst.preset, "target preset when no --to-config")->capture_default_str();
  tf->add_option("--out", tf_out, "output checkpoint")->required();
  tf->add_option("--seed", tf_seed, "seed for reinitialized parameters")->capture_default_str();
  tf->add_flag("--check-forward", tf_check, "run one forward pass of the target model on a zero input");

  auto* ap = app.add_subcommand("augment-preview", "apply one augmented batch and report what was done");
  ConfigArgs ap_cfg;
  ap_cfg.attach(ap, "tiny");
  std::string ap_data, ap_out;
  std::uint64_t ap_seed = 0;
  int ap_batch = 8;
  bool ap_no_cutmix = false;
  ap->add_option("--data", ap_data, "dataset directory or manifest.tsv")->required();
  ap->add_option("--seed", ap_seed)->capture_default_str();
  ap->add_option("--batch", ap_batch, "examples taken from the start of the dataset")->capture_default_str();
  ap->add_option("--out", ap_out, "directory for the augmented NTC tensors");
  ap->add_flag("--no-cutmix", ap_no_cutmix);

  auto* ms = app.add_subcommand("make-synthetic", "write a labeled synthetic dataset");
  ConfigArgs ms_cfg;
  ms_cfg.attach(ms, "tiny");
  int ms_per_class = 2;
  std::uint64_t ms_seed = 0;
  std::string ms_out;
  ms->add_option("--per-class", ms_per_class)->capture_default_str();
  ms->add_option("--seed", ms_seed)->capture_default_str();
  ms->add_option("--out", ms_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (ex->parsed()) {
      if (wavs.empty() && wav_dir.empty()) throw ConfigError("extract-features needs --wav or --wav-dir");
      return cmd_extract(wavs, wav_dir, ex_out, frames);
    }
    if (tr->parsed()) {
      return cmd_train(tr_cfg, tr_data, tr_epochs, tr_seed, tr_resume, tr_no_cutmix, tr_out, tr_max_steps);
    }
    if (ev->parsed()) return cmd_eval(ev_cfg, ev_ckpt, ev_data, ev_json);
    if (in->parsed()) return cmd_inspect(in_cfg);
    if (tf->parsed()) return cmd_transfer(tf_from, tf_src, tf_dst, tf_out, tf_seed, tf_check);
    if (ap->parsed()) return cmd_augment_preview(ap_cfg, ap_data, ap_seed, ap_batch, ap_out, ap_no_cutmix);
    if (ms->parsed()) return cmd_make_synthetic(ms_cfg, ms_per_class, ms_seed, ms_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TransferError& e) {
    std::cerr << "transfer error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    const bool usage = e.kind() == CheckpointError::Kind::kIo || e.kind() == CheckpointError::Kind::kFingerprintMismatch;
    return usage ? kExitUsage : kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
