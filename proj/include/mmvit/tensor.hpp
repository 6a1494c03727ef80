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

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Tensor<float> is the training precision, Tensor<double> the gradient-check
// precision. Operations record themselves on the calling thread's active
// Tape (see TapeScope) whenever one of their inputs requires a gradient. With
// no active tape, operations run in inference mode and record nothing.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmvit/errors.hpp"

namespace mmvit {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty means "no gradient"
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

}  // namespace detail

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);
  /// Standard normal samples scaled by `std`, truncated to two standard deviations.
  static Tensor trunc_normal(Shape shape, T std, std::mt19937_64& rng);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  /// Extent of axis `axis`; negative axes count from the end.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

  std::span<const T> data() const { return node_->data; }
  /// Write access for leaves (parameter initialization, optimizer updates).
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  /// Allocates the gradient if needed and fills it with zeros.
  void zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }
  void clear_grad() { node_->grad.clear(); }

  /// Gradient as a standalone tensor; throws ContractError when absent.
  Tensor grad_tensor() const;
  /// Copy of the data, detached from any tape.
  Tensor detach() const;
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(node_->data.begin(), node_->data.end());
    return Tensor<U>(node_->shape, std::move(out));
  }

  const detail::NodePtr<T>& node() const { return node_; }
  static Tensor from_node(detail::NodePtr<T> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  detail::NodePtr<T> node_;
};

/// Ordered record of differentiable operations from one forward pass.
template <typename T>
class Tape {
 public:
  struct Entry {
    std::vector<detail::NodePtr<T>> inputs;
    detail::NodePtr<T> output;
    std::function<void()> backward;
  };

  void record(std::vector<detail::NodePtr<T>> inputs, detail::NodePtr<T> output,
              std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward step once, in
  /// reverse order. Gradients accumulate (+=) into leaves; callers zero them.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  void clear() {
    entries_.clear();
    consumed_ = false;
  }

 private:
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

template <typename T>
Tape<T>*& active_tape();

/// Makes `tape` the calling thread's active tape for the scope's lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(active_tape<T>()) { active_tape<T>() = &tape; }
  ~TapeScope() { active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Runs backward on the active tape. Throws ContractError if none is active.
template <typename T>
void backward(const Tensor<T>& loss);

/// Debug-mode NaN/Inf assertion on every op output (off by default).
void set_nan_check(bool enabled);
bool nan_check_enabled();

// ---------------------------------------------------------------------------
// Operations. All are differentiable with respect to every Tensor argument.

/// [.., m, k] x [.., k, n] -> [.., m, n]; batch dims broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

struct Conv2dOptions {
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t pad_h = 0, pad_w = 0;
  std::int64_t groups = 1;
};

/// x[C_in, H, W] * weight[C_out, C_in/groups, kh, kw] (+ bias[C_out]) with zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 const Conv2dOptions& opts);

/// Max pooling over x[C, H, W]; padded cells never win.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::int64_t kernel, std::int64_t stride, std::int64_t pad);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

/// softmax(q k^T * scale) v for q[h, Lq, d], k[h, Lk, d], v[h, Lk, dv]. Runs
/// over blocks of query rows and recomputes scores in backward, so the full
/// [h, Lq, Lk] score matrix is never materialized.
template <typename T>
Tensor<T> fused_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, double scale);

/// Normalizes over the last axis, then applies gain/shift of that extent.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, double eps = 1e-6);

template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// Elementwise with numpy-style broadcasting.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, const std::vector<std::int64_t>& sizes);

/// General axis permutation.
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm);
/// Swaps the last two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Linear resampling along the last axis, corners aligned.
template <typename T>
Tensor<T> interp_linear_1d(const Tensor<T>& x, std::int64_t target);
/// Bilinear resampling of the last two axes, corners aligned.
template <typename T>
Tensor<T> interp_bilinear_2d(const Tensor<T>& x, std::int64_t target_h, std::int64_t target_w);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Inverted dropout; identity when rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng);

/// -sum_c target_c * log_softmax(logits)_c for soft targets summing to 1.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const T> target);
/// Mean over classes of binary cross-entropy with logits.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> target);

/// x W + b for x[L, in], W[in, out], b[out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

}  // namespace mmvit
