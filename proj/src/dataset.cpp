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

#include "mmvit/dataset.hpp"

#include <fstream>
#include <sstream>

#include "mmvit/frontend.hpp"

namespace mmvit::trainkit {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_id(const std::string& text, const fs::path& file, int line) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InputError(file.string() + ":" + std::to_string(line) + ": invalid class id '" + text + "'");
  }
}

fs::path default_classes(const fs::path& manifest) { return manifest.parent_path() / "classes.txt"; }

}  // namespace

bool DatasetIndex::multilabel() const {
  for (const auto& e : entries) {
    if (e.labels.size() > 1) return true;
  }
  return false;
}

void DatasetIndex::reindex() {
  frequencies.assign(class_names.size(), 0);
  for (const auto& e : entries) {
    if (e.labels.empty()) throw InputError("dataset entry '" + e.path + "' has no labels");
    for (int c : e.labels) {
      if (c < 0 || c >= num_classes()) {
        throw InputError("dataset entry '" + e.path + "' has class id " + std::to_string(c) + " outside [0, " +
                         std::to_string(num_classes()) + ")");
      }
      ++frequencies[static_cast<std::size_t>(c)];
    }
  }
  weights.clear();
  for (const auto& e : entries) {
    double w = 0.0;
    for (int c : e.labels) w += 1.0 / static_cast<double>(frequencies[static_cast<std::size_t>(c)]);
    weights.push_back(w);
  }
}

DatasetIndex load_manifest(const fs::path& manifest, const fs::path& classes) {
  DatasetIndex idx;
  idx.root = manifest.parent_path();
  const fs::path cpath = classes.empty() ? default_classes(manifest) : classes;
  std::ifstream cf(cpath);
  if (!cf) throw InputError("cannot open class list '" + cpath.string() + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(cf, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const int id = tab == std::string::npos ? static_cast<int>(idx.class_names.size())
                                            : parse_id(trim(line.substr(0, tab)), cpath, lineno);
    const std::string name = tab == std::string::npos ? line : trim(line.substr(tab + 1));
    if (id != static_cast<int>(idx.class_names.size())) {
      throw InputError(cpath.string() + ":" + std::to_string(lineno) + ": class ids must be consecutive from 0");
    }
    idx.class_names.push_back(name);
  }
  std::ifstream mf(manifest);
  if (!mf) throw InputError("cannot open manifest '" + manifest.string() + "'");
  lineno = 0;
  while (std::getline(mf, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw InputError(manifest.string() + ":" + std::to_string(lineno) + ": expected path<TAB>class-ids");
    }
    DatasetEntry e;
    e.path = trim(line.substr(0, tab));
    std::stringstream ids(trim(line.substr(tab + 1)));
    std::string id;
    while (std::getline(ids, id, ',')) {
      if (!trim(id).empty()) e.labels.push_back(parse_id(trim(id), manifest, lineno));
    }
    idx.entries.push_back(std::move(e));
  }
  idx.reindex();
  return idx;
}

void save_manifest(const DatasetIndex& index, const fs::path& manifest, const fs::path& classes) {
  std::ofstream mf(manifest);
  if (!mf) throw InputError("cannot write manifest '" + manifest.string() + "'");
  for (const auto& e : index.entries) {
    mf << e.path << '\t';
    for (std::size_t i = 0; i < e.labels.size(); ++i) mf << (i ? "," : "") << e.labels[i];
    mf << '\n';
  }
  const fs::path cpath = classes.empty() ? default_classes(manifest) : classes;
  std::ofstream cf(cpath);
  if (!cf) throw InputError("cannot write class list '" + cpath.string() + "'");
  for (std::size_t i = 0; i < index.class_names.size(); ++i) cf << i << '\t' << index.class_names[i] << '\n';
}

std::vector<std::size_t> weighted_sampler(const DatasetIndex& index, std::mt19937_64& rng, std::size_t n) {
  if (index.entries.empty()) throw InputError("weighted_sampler: empty dataset");
  if (index.weights.size() != index.entries.size()) throw ContractError("weighted_sampler: weights not computed");
  std::discrete_distribution<std::size_t> pick(index.weights.begin(), index.weights.end());
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = pick(rng);
  return out;
}

namespace {

Tensor<float> load_features(const fs::path& path, const MMViTConfig& cfg) {
  const std::string ext = path.extension().string();
  Tensor<float> t;
  if (ext == ".wav") {
    frontend::FbankOptions opts;
    opts.n_mels = static_cast<int>(cfg.input_w);
    t = frontend::fit_length(frontend::logmel_fbank(frontend::load_wav(path), opts), cfg.input_h).to_tensor();
  } else if (ext == ".ppm") {
    if (cfg.input_h != cfg.input_w) throw InputError("image inputs need a square model input");
    t = frontend::load_image(path, cfg.input_h).pixels;
  } else {
    t = frontend::load_ntc(path);
    if (t.rank() == 2) t = reshape(t, Shape{1, t.dim(0), t.dim(1)});
    if (t.rank() == 3 && t.dim(0) == 1 && cfg.in_channels == 1 && t.dim(2) == cfg.input_w && t.dim(1) != cfg.input_h) {
      t = frontend::fit_length(frontend::Spectrogram::from_tensor(t), cfg.input_h).to_tensor();
    }
  }
  const Shape want{cfg.in_channels, cfg.input_h, cfg.input_w};
  if (t.shape() != want) {
    throw InputError("'" + path.string() + "' has shape " + shape_str(t.shape()) + ", model expects " +
                     shape_str(want));
  }
  return t;
}

}  // namespace

Dataset load_dataset(const DatasetIndex& index, const MMViTConfig& cfg) {
  if (index.entries.empty()) throw InputError("dataset is empty");
  if (index.num_classes() != cfg.num_classes) {
    throw ConfigError("model.num_classes is " + std::to_string(cfg.num_classes) + " but the dataset has " +
                      std::to_string(index.num_classes()) + " classes");
  }
  if (cfg.task == Task::kSingleLabel && index.multilabel()) {
    throw ConfigError("task: the dataset has multi-label entries but model.task is single_label");
  }
  Dataset d;
  d.num_classes = cfg.num_classes;
  d.task = cfg.task;
  for (const auto& e : index.entries) {
    fs::path p(e.path);
    if (p.is_relative()) p = index.root / p;
    Example ex;
    try {
      ex.features = load_features(p, cfg);
    } catch (const FormatError& err) {
      throw InputError(std::string("cannot decode '") + p.string() + "': " + err.what());
    }
    ex.labels = e.labels;
    ex.target.assign(static_cast<std::size_t>(cfg.num_classes), 0.0f);
    for (int c : e.labels) ex.target[static_cast<std::size_t>(c)] = 1.0f;
    d.examples.push_back(std::move(ex));
  }
  return d;
}

Dataset make_synthetic(const MMViTConfig& cfg, int per_class, std::uint64_t seed) {
  if (per_class < 1) throw ConfigError("synthetic dataset needs at least one example per class");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.5f);
  Dataset d;
  d.num_classes = cfg.num_classes;
  d.task = cfg.task;
  const std::int64_t f = cfg.input_w, band = std::max<std::int64_t>(1, f / cfg.num_classes);
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < cfg.num_classes; ++c) {
      std::vector<float> v(static_cast<std::size_t>(cfg.in_channels * cfg.input_h * f));
      for (auto& x : v) x = noise(rng);
      const std::int64_t lo = (c * band) % f;
      for (std::int64_t ch = 0; ch < cfg.in_channels; ++ch) {
        for (std::int64_t t = 0; t < cfg.input_h; ++t) {
          for (std::int64_t b = lo; b < std::min(f, lo + band); ++b) {
            v[static_cast<std::size_t>((ch * cfg.input_h + t) * f + b)] += 2.0f;
          }
        }
      }
      Example ex;
      ex.features = Tensor<float>(Shape{cfg.in_channels, cfg.input_h, f}, std::move(v));
      ex.labels = {c};
      ex.target.assign(static_cast<std::size_t>(cfg.num_classes), 0.0f);
      ex.target[static_cast<std::size_t>(c)] = 1.0f;
      d.examples.push_back(std::move(ex));
    }
  }
  return d;
}

DatasetIndex write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  DatasetIndex idx;
  idx.root = dir;
  for (int c = 0; c < data.num_classes; ++c) idx.class_names.push_back("class_" + std::to_string(c));
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04zu.ntc", i);
    frontend::save_ntc(dir / name, data.examples[i].features);
    idx.entries.push_back({name, data.examples[i].labels});
  }
  idx.reindex();
  save_manifest(idx, dir / "manifest.tsv");
  return idx;
}

}  // namespace mmvit::trainkit
