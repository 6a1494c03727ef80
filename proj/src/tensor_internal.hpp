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

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <utility>
#include <vector>

#include "mmvit/tensor.hpp"

namespace mmvit::detail {

template <typename T>
void check_finite(const std::vector<T>& data, const char* op);

// Wraps a freshly computed buffer as an op output and, when any input takes
// part in differentiation under an active tape, records `bw(out_node)`.
template <typename T, typename Backward>
Tensor<T> emit(const char* op, Shape shape, std::vector<T>&& data, std::vector<NodePtr<T>> inputs,
               Backward&& bw) {
  check_finite(data, op);
  auto out = std::make_shared<Node<T>>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  Tape<T>* tape = active_tape<T>();
  const bool record =
      tape != nullptr && std::any_of(inputs.begin(), inputs.end(), [](const NodePtr<T>& n) { return n->requires_grad; });
  if (record) {
    out->requires_grad = true;
    Node<T>* o = out.get();
    tape->record(std::move(inputs), out, [o, fn = std::forward<Backward>(bw)]() { fn(*o); });
  }
  return Tensor<T>::from_node(std::move(out));
}

// C = alpha * op(A) * op(B) + beta * C, row-major.
template <typename T>
void gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* a, int lda, const T* b, int ldb, T beta, T* c,
          int ldc) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Stride = Eigen::OuterStride<>;
  Eigen::Map<Mat, 0, Stride> cm(c, m, n, Stride(ldc));
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  Eigen::Map<const Mat, 0, Stride> am(a, ta ? k : m, ta ? m : k, Stride(lda));
  Eigen::Map<const Mat, 0, Stride> bm(b, tb ? n : k, tb ? k : n, Stride(ldb));
  if (ta && tb) {
    cm.noalias() += alpha * (am.transpose() * bm.transpose());
  } else if (ta) {
    cm.noalias() += alpha * (am.transpose() * bm);
  } else if (tb) {
    cm.noalias() += alpha * (am * bm.transpose());
  } else {
    cm.noalias() += alpha * (am * bm);
  }
}

}  // namespace mmvit::detail
