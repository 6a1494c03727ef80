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

#include "mmvit/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tensor_internal.hpp"

namespace mmvit {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
std::atomic<bool> g_nan_check{false};
}  // namespace

void set_nan_check(bool enabled) { g_nan_check.store(enabled); }
bool nan_check_enabled() { return g_nan_check.load(std::memory_order_relaxed); }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) {
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                         " values but " + std::to_string(data.size()) + " were given");
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::ones(Shape shape) {
  return full(std::move(shape), T(1));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)), value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::trunc_normal(Shape shape, T std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) {
    double s;
    do {
      s = dist(rng);
    } while (std::abs(s) > 2.0);
    v = static_cast<T>(s * static_cast<double>(std));
  }
  return Tensor(std::move(shape), std::move(data));
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) {
    throw DimensionError("index rank does not match shape " + shape_str(shape()));
  }
  std::int64_t flat = 0;
  std::size_t i = 0;
  for (auto v : index) {
    const auto extent = node_->shape[i++];
    if (v < 0 || v >= extent) throw DimensionError("index out of range for shape " + shape_str(shape()));
    flat = flat * extent + v;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

template <typename T>
Tensor<T> Tensor<T>::grad_tensor() const {
  if (!has_grad()) throw ContractError("tensor of shape " + shape_str(shape()) + " has no gradient");
  return Tensor(node_->shape, node_->grad);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data);
}

template <typename T>
void Tape<T>::record(std::vector<detail::NodePtr<T>> inputs, detail::NodePtr<T> output,
                     std::function<void()> backward) {
  if (consumed_) throw ContractError("recording onto a tape whose backward pass already ran");
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (consumed_) throw ContractError("backward() already ran on this tape");
  const auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                               [&](const Entry& e) { return e.output == loss.node(); });
  if (it == entries_.rend()) throw ContractError("loss was not produced on this tape");
  consumed_ = true;
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto e = entries_.rbegin(); e != entries_.rend(); ++e) {
    if (e->output->grad.empty()) continue;
    e->backward();
  }
}

template <typename T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) throw ContractError("backward() called with no active tape");
  tape->backward(loss);
}

namespace detail {

template <typename T>
void check_finite(const std::vector<T>& data, const char* op) {
  if (!nan_check_enabled()) return;
  for (const auto& v : data) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

template void check_finite<float>(const std::vector<float>&, const char*);
template void check_finite<double>(const std::vector<double>&, const char*);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tape<float>*& active_tape<float>();
template Tape<double>*& active_tape<double>();
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace mmvit
