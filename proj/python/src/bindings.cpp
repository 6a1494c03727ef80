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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mmvit/augment.hpp"
#include "mmvit/checkpoint.hpp"
#include "mmvit/frontend.hpp"
#include "mmvit/metrics.hpp"
#include "mmvit/model.hpp"
#include "mmvit/runconfig.hpp"
#include "mmvit/transfer.hpp"

namespace py = pybind11;
using namespace mmvit;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict params_to_dict(const ParamStore<float>& params) {
  py::dict d;
  for (const auto& [name, t] : params) d[py::str(name)] = to_array(t);
  return d;
}

ParamStore<float> dict_to_params(const py::dict& d) {
  ParamStore<float> p;
  for (const auto& [k, v] : d) p.add(py::cast<std::string>(k), to_tensor(py::cast<FloatArray>(v)));
  return p;
}

py::dict layer_dict(const LayerPlan& l, const MMViTConfig& cfg) {
  py::dict d;
  d["index"] = l.index;
  d["stage"] = l.stage;
  d["kind"] = to_string(l.kind);
  d["channels_in"] = l.channels_in;
  d["channels_out"] = l.channels_out;
  d["heads"] = l.heads;
  py::list grids;
  for (const auto& g : l.grids_out) grids.append(py::make_tuple(g.h, g.w));
  d["grids"] = grids;
  d["params"] = layer_params(cfg, l.index);
  d["flops"] = layer_flops(cfg, l);
  return d;
}

augment::LabeledExample example(const FloatArray& features, const std::vector<float>& label) {
  return {to_tensor(features), label};
}

}  // namespace

PYBIND11_MODULE(_mmvit, m) {
  m.doc() = "Multiscale multiview vision transformer kit";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<TransferError>(m, "TransferError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  py::class_<MMViTConfig>(m, "Config")
      .def(py::init<>())
      .def_static("preset", &MMViTConfig::preset, py::arg("name"))
      .def_static("from_overrides",
                  [](const std::string& preset, const std::vector<std::string>& assignments) {
                    std::vector<std::string> all{"preset=" + preset};
                    all.insert(all.end(), assignments.begin(), assignments.end());
                    RunConfig rc;
                    rc.apply(all);
                    return rc.model;
                  },
                  py::arg("preset"), py::arg("assignments") = std::vector<std::string>{},
                  "Preset plus dotted key=value overrides, e.g. 'model.embed_dim=32'.")
      .def_readwrite("in_channels", &MMViTConfig::in_channels)
      .def_readwrite("input_h", &MMViTConfig::input_h)
      .def_readwrite("input_w", &MMViTConfig::input_w)
      .def_readwrite("embed_dim", &MMViTConfig::embed_dim)
      .def_readwrite("stage_self_counts", &MMViTConfig::stage_self_counts)
      .def_readwrite("heads", &MMViTConfig::heads)
      .def_readwrite("num_classes", &MMViTConfig::num_classes)
      .def_readwrite("dropout", &MMViTConfig::dropout)
      .def_readwrite("mlp_ratio", &MMViTConfig::mlp_ratio)
      .def_property_readonly("task", [](const MMViTConfig& c) { return std::string(to_string(c.task)); })
      .def("validate", &MMViTConfig::validate)
      .def("canonical", &MMViTConfig::canonical)
      .def("fingerprint", &MMViTConfig::fingerprint)
      .def("view_grid", [](const MMViTConfig& c, int v) {
        const auto g = c.view_grid(v);
        return py::make_tuple(g.h, g.w);
      })
      .def("__repr__", [](const MMViTConfig& c) { return "Config(" + c.canonical() + ")"; });

  m.def("schedule", [](const MMViTConfig& cfg) {
    py::list out;
    for (const auto& l : build_schedule(cfg).layers) out.append(layer_dict(l, cfg));
    return out;
  });
  m.def("count_params", &count_params);
  m.def("estimate_flops", &estimate_flops);

  py::class_<MMViT<float>>(m, "Model")
      .def(py::init([](const MMViTConfig& cfg, std::uint64_t seed) { return MMViT<float>::random(cfg, seed); }),
           py::arg("config"), py::arg("seed") = 0)
      .def(py::init([](const MMViTConfig& cfg, const py::dict& params) {
             return MMViT<float>(cfg, dict_to_params(params));
           }),
           py::arg("config"), py::arg("params"))
      .def_property_readonly("config", &MMViT<float>::config)
      .def("params", [](const MMViT<float>& mdl) { return params_to_dict(mdl.params()); })
      .def("forward",
           [](const MMViT<float>& mdl, const FloatArray& x) {
             Tensor<float> logits;
             const auto input = to_tensor(x);
             {
               py::gil_scoped_release release;
               logits = mdl.forward(input);
             }
             return to_array(logits);
           },
           py::arg("x"), "x[C, H, W] -> logits[num_classes]")
      .def("save", [](const MMViT<float>& mdl, const std::filesystem::path& path) {
        save_checkpoint(mdl.params(), mdl.config(), path);
      });

  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    const auto ck = load_checkpoint(path);
    return py::make_tuple(params_to_dict(ck.params), ck.fingerprint);
  });
  m.def("fingerprint_hex", &fingerprint_hex);

  m.def("transfer",
        [](const std::filesystem::path& src, const MMViTConfig& src_cfg, const MMViTConfig& dst_cfg,
           std::uint64_t seed) {
          auto res = transfer::apply_transfer(load_checkpoint(src), src_cfg, dst_cfg, seed);
          return py::make_tuple(params_to_dict(res.params), res.plan.audit());
        },
        py::arg("checkpoint"), py::arg("source_config"), py::arg("target_config"), py::arg("seed") = 0);

  m.def("logmel_fbank",
        [](const FloatArray& samples, int sample_rate_hz) {
          frontend::Waveform w{std::vector<float>(samples.data(), samples.data() + samples.size()), sample_rate_hz};
          if (sample_rate_hz != frontend::kSampleRateHz) w = frontend::resample_linear(w, frontend::kSampleRateHz);
          return to_array(frontend::logmel_fbank(w).to_tensor());
        },
        py::arg("samples"), py::arg("sample_rate_hz") = frontend::kSampleRateHz, "mono samples -> [1, T, 128]");

  auto aug = m.def_submodule("augment", "Audio augmentations on [..., T, F] features");
  aug.def("mixup",
          [](const FloatArray& a, const std::vector<float>& la, const FloatArray& b, const std::vector<float>& lb,
             double lambda) {
            const auto r = augment::mixup(example(a, la), example(b, lb), lambda);
            return py::make_tuple(to_array(r.features), r.label);
          });
  aug.def("cutmix",
          [](const FloatArray& a, const std::vector<float>& la, const FloatArray& b, const std::vector<float>& lb,
             double lambda, std::int64_t start) {
            const auto r = augment::audio_cutmix(example(a, la), example(b, lb), lambda, start);
            return py::make_tuple(to_array(r.features), r.label);
          });
  aug.def("cutmix_width", &augment::cutmix_width);
  aug.def("spec_mask",
          [](const FloatArray& x, std::int64_t t0, std::int64_t tw, std::int64_t f0, std::int64_t fw) {
            return to_array(augment::apply_spec_mask(to_tensor(x), {t0, tw, f0, fw}));
          },
          py::arg("x"), py::arg("t0"), py::arg("time_width"), py::arg("f0"), py::arg("freq_width"));
  aug.def("roll", [](const FloatArray& x, std::int64_t shift) { return to_array(augment::random_roll(to_tensor(x), shift)); });

  auto met = m.def_submodule("metrics", "Evaluation metrics");
  met.def("average_precision", &trainkit::average_precision);
  met.def("mean_average_precision",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scores,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& labels) {
            if (scores.ndim() != 2 || labels.ndim() != 2) throw DimensionError("expected 2-D scores and labels");
            trainkit::ScoreMatrix s(scores.shape(0), scores.shape(1)), l(labels.shape(0), labels.shape(1));
            std::copy(scores.data(), scores.data() + scores.size(), s.values.begin());
            std::copy(labels.data(), labels.data() + labels.size(), l.values.begin());
            const auto rep = trainkit::mean_average_precision(s, l);
            return py::make_tuple(rep.metric, rep.per_class_ap);
          });
  met.def("top1_accuracy",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scores, const std::vector<int>& labels) {
            if (scores.ndim() != 2) throw DimensionError("expected 2-D scores");
            trainkit::ScoreMatrix s(scores.shape(0), scores.shape(1));
            std::copy(scores.data(), scores.data() + scores.size(), s.values.begin());
            return trainkit::top1_accuracy(s, labels);
          });
}
