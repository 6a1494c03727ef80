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

// Reference implementations written as plain loops over std::vector<double>.
// They share no code with the library and serve as test oracles.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "mmvit/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;

template <typename T>
Vec to_vec(const mmvit::Tensor<T>& t) {
  return Vec(t.data().begin(), t.data().end());
}

template <typename T>
mmvit::Tensor<T> random_tensor(mmvit::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<T> v(static_cast<std::size_t>(mmvit::shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(n(rng));
  return mmvit::Tensor<T>(std::move(shape), std::move(v));
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// a[m,k] b[k,n]
inline Vec matmul(const Vec& a, const Vec& b, int m, int k, int n) {
  Vec c(static_cast<std::size_t>(m * n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// x[l,e] W[e,f] + b[f]
inline Vec linear(const Vec& x, const Vec& w, const Vec& b, int l, int e, int f) {
  Vec y = matmul(x, w, l, e, f);
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < f; ++j) y[i * f + j] += b[j];
  return y;
}

// x[C,H,W], w[O, C/g, kh, kw]
inline Vec conv2d(const Vec& x, int c, int h, int w, const Vec& wt, int o, int kh, int kw, const Vec* bias, int sh,
                  int sw, int ph, int pw, int groups, int* out_h, int* out_w) {
  const int oh = (h + 2 * ph - kh) / sh + 1, ow = (w + 2 * pw - kw) / sw + 1;
  const int cg = c / groups, og = o / groups;
  Vec y(static_cast<std::size_t>(o * oh * ow), 0.0);
  for (int oc = 0; oc < o; ++oc) {
    const int g = oc / og;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = bias ? (*bias)[oc] : 0.0;
        for (int ic = 0; ic < cg; ++ic)
          for (int a = 0; a < kh; ++a)
            for (int b = 0; b < kw; ++b) {
              const int yy = i * sh - ph + a, xx = j * sw - pw + b;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += wt[((oc * cg + ic) * kh + a) * kw + b] * x[((g * cg + ic) * h + yy) * w + xx];
            }
        y[(oc * oh + i) * ow + j] = acc;
      }
  }
  if (out_h) *out_h = oh;
  if (out_w) *out_w = ow;
  return y;
}

/// Per-view projections, joint softmax over the keys of every view, split back
/// per view. Identity pooling. One view reduces to plain multi-head attention.
struct ViewWeights {
  Vec qkv_w, qkv_b, proj_w, proj_b;  // [E,3E], [3E], [E,E], [E]
};

inline std::vector<Vec> joint_attention(const std::vector<Vec>& tokens, const std::vector<int>& lens,
                                        const std::vector<ViewWeights>& wts, int e, int heads) {
  const int n = static_cast<int>(tokens.size()), d = e / heads;
  std::vector<Vec> q(n), k(n), v(n);
  for (int s = 0; s < n; ++s) {
    const Vec qkv = linear(tokens[s], wts[s].qkv_w, wts[s].qkv_b, lens[s], e, 3 * e);
    q[s].resize(lens[s] * e);
    k[s].resize(lens[s] * e);
    v[s].resize(lens[s] * e);
    for (int i = 0; i < lens[s]; ++i)
      for (int c = 0; c < e; ++c) {
        q[s][i * e + c] = qkv[i * 3 * e + c];
        k[s][i * e + c] = qkv[i * 3 * e + e + c];
        v[s][i * e + c] = qkv[i * 3 * e + 2 * e + c];
      }
  }
  std::vector<Vec> out(n);
  for (int s = 0; s < n; ++s) {
    Vec merged(lens[s] * e, 0.0);
    for (int hd = 0; hd < heads; ++hd)
      for (int i = 0; i < lens[s]; ++i) {
        std::vector<double> logits;
        for (int t = 0; t < n; ++t)
          for (int j = 0; j < lens[t]; ++j) {
            double dot = 0.0;
            for (int c = 0; c < d; ++c) dot += q[s][i * e + hd * d + c] * k[t][j * e + hd * d + c];
            logits.push_back(dot / std::sqrt(static_cast<double>(d)));
          }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        std::size_t idx = 0;
        for (int t = 0; t < n; ++t)
          for (int j = 0; j < lens[t]; ++j, ++idx)
            for (int c = 0; c < d; ++c) merged[i * e + hd * d + c] += logits[idx] / z * v[t][j * e + hd * d + c];
      }
    out[s] = linear(merged, wts[s].proj_w, wts[s].proj_b, lens[s], e, e);
  }
  return out;
}

/// Average precision by explicit ranking: an item's rank is 1 + the number of
/// items with a higher score, or an equal score and a smaller index.
inline std::optional<double> average_precision(const Vec& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ++r;
    }
    rank[i] = r;
  }
  double total = 0.0;
  int positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!labels[i]) continue;
    ++positives;
    int hits = 0;
    for (std::size_t j = 0; j < n; ++j) hits += (labels[j] && rank[j] <= rank[i]) ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(rank[i]);
  }
  if (positives == 0) return std::nullopt;
  return total / positives;
}

/// Central difference of f along `x[i]`.
inline double central_difference(const std::function<double()>& f, double& x, double eps) {
  const double keep = x;
  x = keep + eps;
  const double up = f();
  x = keep - eps;
  const double down = f();
  x = keep;
  return (up - down) / (2.0 * eps);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
