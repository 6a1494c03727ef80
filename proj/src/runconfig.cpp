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

#include "mmvit/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mmvit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError(key + ": cannot parse '" + value + "' as " + expected);
}

template <typename I>
I to_int(const std::string& key, const std::string& v) {
  I out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "an integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  bad(key, v, "a number");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, v, "a boolean");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_on(v, ',')) out.push_back(to_int<int>(key, item));
  return out;
}

Extent2 to_extent(const std::string& key, const std::string& v) {
  const auto parts = split_on(v, 'x');
  if (parts.size() != 2) bad(key, v, "HxW");
  return {to_int<std::int64_t>(key, parts[0]), to_int<std::int64_t>(key, parts[1])};
}

// "KHxKW/SHxSW,..."
std::vector<ViewSpec> to_views(const std::string& key, const std::string& v) {
  std::vector<ViewSpec> out;
  for (const auto& item : split_on(v, ',')) {
    const auto parts = split_on(item, '/');
    if (parts.size() != 2) bad(key, item, "KHxKW/SHxSW");
    out.push_back({to_extent(key, parts[0]), to_extent(key, parts[1])});
  }
  return out;
}

std::string fmt(double d) {
  std::ostringstream os;
  os.precision(10);
  os << d;
  return os.str();
}

std::string join(const std::vector<int>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_FIELD(k, member, T)                                                                \
  Field {                                                                                      \
    k, [](RunConfig& c, const std::string& key, const std::string& v) { c.member = to_int<T>(key, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                            \
  }
#define DBL_FIELD(k, member)                                                                   \
  Field {                                                                                      \
    k, [](RunConfig& c, const std::string& key, const std::string& v) { c.member = to_double(key, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }                                       \
  }
#define BOOL_FIELD(k, member)                                                                  \
  Field {                                                                                      \
    k, [](RunConfig& c, const std::string& key, const std::string& v) { c.member = to_bool(key, v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      INT_FIELD("model.in_channels", model.in_channels, std::int64_t),
      INT_FIELD("model.input_h", model.input_h, std::int64_t),
      INT_FIELD("model.input_w", model.input_w, std::int64_t),
      Field{"model.views",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.model.views = to_views(k, v); },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.model.views.size(); ++i) {
                const auto& vs = c.model.views[i];
                s += (i ? "," : "") + std::to_string(vs.kernel.h) + "x" + std::to_string(vs.kernel.w) + "/" +
                     std::to_string(vs.stride.h) + "x" + std::to_string(vs.stride.w);
              }
              return s;
            }},
      INT_FIELD("model.embed_dim", model.embed_dim, std::int64_t),
      Field{"model.stage_self_counts",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.model.stage_self_counts = to_int_list(k, v); },
            [](const RunConfig& c) { return join(c.model.stage_self_counts); }},
      Field{"model.heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.heads = to_int_list(k, v); },
            [](const RunConfig& c) { return join(c.model.heads); }},
      INT_FIELD("model.num_classes", model.num_classes, std::int64_t),
      Field{"model.task",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "multilabel") {
                c.model.task = Task::kMultilabel;
              } else if (v == "single_label") {
                c.model.task = Task::kSingleLabel;
              } else {
                bad(k, v, "multilabel or single_label");
              }
            },
            [](const RunConfig& c) { return std::string(to_string(c.model.task)); }},
      DBL_FIELD("model.dropout", model.dropout),
      INT_FIELD("model.mlp_ratio", model.mlp_ratio, int),
      INT_FIELD("model.q_pool_kernel", model.q_pool_scaled.kernel, std::int64_t),
      INT_FIELD("model.kv_pool_kernel", model.kv_pool.kernel, std::int64_t),
      INT_FIELD("model.kv_pool_stride", model.kv_pool.stride, std::int64_t),
      INT_FIELD("train.epochs", train.epochs, int),
      INT_FIELD("train.max_steps", train.max_steps, std::int64_t),
      INT_FIELD("train.batch_size", train.batch_size, int),
      DBL_FIELD("train.lr", train.optim.lr),
      DBL_FIELD("train.weight_decay", train.optim.weight_decay),
      DBL_FIELD("train.beta1", train.optim.beta1),
      DBL_FIELD("train.beta2", train.optim.beta2),
      DBL_FIELD("train.eps", train.optim.eps),
      DBL_FIELD("train.warmup_fraction", train.warmup_fraction),
      Field{"train.clip_norm",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              const double d = to_double(k, v);
              if (d > 0) {
                c.train.clip_norm = d;
              } else {
                c.train.clip_norm.reset();
              }
            },
            [](const RunConfig& c) { return c.train.clip_norm ? fmt(*c.train.clip_norm) : std::string("0"); }},
      BOOL_FIELD("train.weighted_sampling", train.weighted_sampling),
      INT_FIELD("train.seed", train.seed, std::uint64_t),
      INT_FIELD("train.eval_every", train.eval_every, int),
      Field{"train.early_stop_loss",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              const double d = to_double(k, v);
              if (d > 0) {
                if (!c.train.early_stop) c.train.early_stop = trainkit::EarlyStop{};
                c.train.early_stop->loss_below = d;
              } else {
                c.train.early_stop.reset();
              }
            },
            [](const RunConfig& c) { return c.train.early_stop ? fmt(c.train.early_stop->loss_below) : std::string("0"); }},
      Field{"train.early_stop_metric",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (!c.train.early_stop) c.train.early_stop = trainkit::EarlyStop{};
              c.train.early_stop->metric_at_least = to_double(k, v);
            },
            [](const RunConfig& c) {
              return fmt(c.train.early_stop ? c.train.early_stop->metric_at_least : trainkit::EarlyStop{}.metric_at_least);
            }},
      BOOL_FIELD("augment.enabled", train.augment.enabled),
      DBL_FIELD("augment.mixup_alpha", train.augment.mixup_alpha),
      BOOL_FIELD("augment.cutmix", train.augment.cutmix),
      BOOL_FIELD("augment.specaug", train.augment.specaug),
      INT_FIELD("augment.specaug_max_time", train.augment.specaug_max_time, std::int64_t),
      INT_FIELD("augment.specaug_max_freq", train.augment.specaug_max_freq, std::int64_t),
      BOOL_FIELD("augment.roll", train.augment.roll),
  };
  return table;
}

#undef INT_FIELD
#undef DBL_FIELD
#undef BOOL_FIELD

std::pair<std::string, std::string> split_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
  return {trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
}

}  // namespace

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.model = MMViTConfig::preset(name);
  if (name == "tiny") {
    c.train.epochs = 30;
    c.train.optim.lr = 1e-4;
    c.train.optim.weight_decay = 0.0;
    c.train.augment.enabled = false;
    c.train.augment.specaug_max_time = 12;
    c.train.augment.specaug_max_freq = 6;
  }
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "preset") {
    *this = from_preset(value);
    return;
  }
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply(const std::vector<std::string>& assignments) {
  std::vector<std::pair<std::string, std::string>> kv;
  for (const auto& a : assignments) kv.push_back(split_assignment(a));
  for (const auto& [k, v] : kv) {
    if (k == "preset") set(k, v);
  }
  for (const auto& [k, v] : kv) {
    if (k != "preset") set(k, v);
  }
}

std::string RunConfig::render() const {
  std::string out = "preset=" + preset + "\n";
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.find('=') == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    lines.push_back(line);
  }
  RunConfig c;
  c.apply(lines);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out{"preset"};
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

}  // namespace mmvit
