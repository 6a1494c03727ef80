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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mmvit/tensor.hpp"
#include "tensor_internal.hpp"

namespace mmvit {

using detail::emit;
using detail::gemm;
using detail::Node;
using detail::NodePtr;

namespace {

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return a;
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisView {
  std::int64_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
  v.extent = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

struct Broadcast {
  Shape out;
  std::vector<std::int64_t> stride_a, stride_b;  // 0 on broadcast axes
};

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * s[static_cast<std::size_t>(i) + 1];
  }
  return st;
}

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Broadcast bc;
  bc.out.assign(r, 1);
  bc.stride_a.assign(r, 0);
  bc.stride_b.assign(r, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t ia = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(r - a.size());
    const std::int64_t ib = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(r - b.size());
    const std::int64_t ea = ia >= 0 ? a[static_cast<std::size_t>(ia)] : 1;
    const std::int64_t eb = ib >= 0 ? b[static_cast<std::size_t>(ib)] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    }
    bc.out[i] = std::max(ea, eb);
    if (ia >= 0 && ea != 1) bc.stride_a[i] = sa[static_cast<std::size_t>(ia)];
    if (ib >= 0 && eb != 1) bc.stride_b[i] = sb[static_cast<std::size_t>(ib)];
  }
  return bc;
}

// Calls fn(out_index, a_index, b_index) over every output element. The
// innermost axis runs as a flat loop.
template <typename Fn>
void for_each_broadcast(const Broadcast& bc, Fn&& fn) {
  const std::size_t r = bc.out.size();
  const std::int64_t n = shape_numel(bc.out);
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  if (n == 0) return;
  const std::int64_t inner = bc.out[r - 1];
  const std::int64_t sa = bc.stride_a[r - 1], sb = bc.stride_b[r - 1];
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t i = 0; i < n; i += inner) {
    for (std::int64_t j = 0; j < inner; ++j) fn(i + j, ia + j * sa, ib + j * sb);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      ia += bc.stride_a[d];
      ib += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.stride_a[d] * bc.out[d];
      ib -= bc.stride_b[d] * bc.out[d];
      idx[d] = 0;
    }
  }
}

enum class Binary { kAdd, kSub, kMul };

template <typename T, Binary kKind>
Tensor<T> binary_impl(const NodePtr<T>& an, const NodePtr<T>& bn, const Shape& sa, const Shape& sb, const char* op) {
  auto apply = [](T x, T y) {
    if constexpr (kKind == Binary::kAdd) return x + y;
    if constexpr (kKind == Binary::kSub) return x - y;
    if constexpr (kKind == Binary::kMul) return x * y;
  };
  if (sa == sb) {
    std::vector<T> out(an->data.size());
    const T* x = an->data.data();
    const T* y = bn->data.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(x[i], y[i]);
    return emit<T>(op, Shape(sa), std::move(out), {an, bn}, [an, bn](const Node<T>& o) {
      const std::size_t n = o.grad.size();
      const T* g = o.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        T* ga = an->grad.data();
        if constexpr (kKind == Binary::kMul) {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bn->data[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        if constexpr (kKind == Binary::kMul) {
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * an->data[i];
        } else if constexpr (kKind == Binary::kSub) {
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        }
      }
    });
  }
  Broadcast bc = broadcast_shapes(sa, sb, op);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(bc.out)));
  const T* x = an->data.data();
  const T* y = bn->data.data();
  T* z = out.data();
  for_each_broadcast(bc, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { z[i] = apply(x[ia], y[ib]); });
  Shape out_shape = bc.out;
  return emit<T>(op, std::move(out_shape), std::move(out), {an, bn}, [an, bn, bc](const Node<T>& o) {
    const T* g = o.grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      T* ga = an->grad.data();
      const T* yb = bn->data.data();
      for_each_broadcast(bc, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
        if constexpr (kKind == Binary::kMul) {
          ga[ia] += g[i] * yb[ib];
        } else {
          (void)ib;
          ga[ia] += g[i];
        }
      });
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      T* gb = bn->grad.data();
      const T* xa = an->data.data();
      for_each_broadcast(bc, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
        if constexpr (kKind == Binary::kMul) {
          gb[ib] += g[i] * xa[ia];
        } else if constexpr (kKind == Binary::kSub) {
          (void)ia;
          gb[ib] -= g[i];
        } else {
          (void)ia;
          gb[ib] += g[i];
        }
      });
    }
  });
}

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Binary kind, const char* op) {
  switch (kind) {
    case Binary::kAdd:
      return binary_impl<T, Binary::kAdd>(a.node(), b.node(), a.shape(), b.shape(), op);
    case Binary::kSub:
      return binary_impl<T, Binary::kSub>(a.node(), b.node(), a.shape(), b.shape(), op);
    case Binary::kMul:
      break;
  }
  return binary_impl<T, Binary::kMul>(a.node(), b.node(), a.shape(), b.shape(), op);
}

// Unfolds one channel group of x[C, H, W] into cols[(c, i, j), (oh, ow)].
template <typename T>
void im2col(const T* x, std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
            const Conv2dOptions& o, std::int64_t oh, std::int64_t ow, T* cols) {
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t i = 0; i < kh; ++i) {
      for (std::int64_t j = 0; j < kw; ++j) {
        T* row = cols + ((c * kh + i) * kw + j) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t sy = y * o.stride_h - o.pad_h + i;
          for (std::int64_t xo = 0; xo < ow; ++xo) {
            const std::int64_t sx = xo * o.stride_w - o.pad_w + j;
            row[y * ow + xo] = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? x[(c * h + sy) * w + sx] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, const Conv2dOptions& o, std::int64_t oh, std::int64_t ow, T* dx) {
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t i = 0; i < kh; ++i) {
      for (std::int64_t j = 0; j < kw; ++j) {
        const T* row = cols + ((c * kh + i) * kw + j) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t sy = y * o.stride_h - o.pad_h + i;
          if (sy < 0 || sy >= h) continue;
          for (std::int64_t xo = 0; xo < ow; ++xo) {
            const std::int64_t sx = xo * o.stride_w - o.pad_w + j;
            if (sx >= 0 && sx < w) dx[(c * h + sy) * w + sx] += row[y * ow + xo];
          }
        }
      }
    }
  }
}

// Direct depthwise convolution (one input and one output channel per group).
template <typename T>
void depthwise_forward(const T* x, const T* wt, std::int64_t channels, std::int64_t h, std::int64_t w,
                       std::int64_t kh, std::int64_t kw, const Conv2dOptions& o, std::int64_t oh, std::int64_t ow,
                       T* out) {
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* xc = x + c * h * w;
    const T* wc = wt + c * kh * kw;
    T* oc = out + c * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        T acc = 0;
        for (std::int64_t i = 0; i < kh; ++i) {
          const std::int64_t sy = y * o.stride_h - o.pad_h + i;
          if (sy < 0 || sy >= h) continue;
          for (std::int64_t j = 0; j < kw; ++j) {
            const std::int64_t sx = xo * o.stride_w - o.pad_w + j;
            if (sx >= 0 && sx < w) acc += wc[i * kw + j] * xc[sy * w + sx];
          }
        }
        oc[y * ow + xo] = acc;
      }
    }
  }
}

template <typename T>
void depthwise_backward(const T* x, const T* wt, const T* dout, std::int64_t channels, std::int64_t h,
                        std::int64_t w, std::int64_t kh, std::int64_t kw, const Conv2dOptions& o, std::int64_t oh,
                        std::int64_t ow, T* dx, T* dw) {
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* xc = x + c * h * w;
    const T* wc = wt + c * kh * kw;
    const T* gc = dout + c * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        const T g = gc[y * ow + xo];
        for (std::int64_t i = 0; i < kh; ++i) {
          const std::int64_t sy = y * o.stride_h - o.pad_h + i;
          if (sy < 0 || sy >= h) continue;
          for (std::int64_t j = 0; j < kw; ++j) {
            const std::int64_t sx = xo * o.stride_w - o.pad_w + j;
            if (sx < 0 || sx >= w) continue;
            if (dx) dx[c * h * w + sy * w + sx] += g * wc[i * kw + j];
            if (dw) dw[c * kh * kw + i * kw + j] += g * xc[sy * w + sx];
          }
        }
      }
    }
  }
}

// Samples along one axis at corner-aligned positions: (index0, index1, frac).
struct InterpTap {
  std::int64_t i0, i1;
  double frac;
};

std::vector<InterpTap> interp_taps(std::int64_t source, std::int64_t target) {
  std::vector<InterpTap> taps(static_cast<std::size_t>(target));
  for (std::int64_t j = 0; j < target; ++j) {
    if (source == target) {
      taps[static_cast<std::size_t>(j)] = {j, j, 0.0};
      continue;
    }
    const double pos = target > 1 ? static_cast<double>(j) * static_cast<double>(source - 1) /
                                        static_cast<double>(target - 1)
                                  : 0.0;
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(pos));
    i0 = std::clamp<std::int64_t>(i0, 0, source - 1);
    const std::int64_t i1 = std::min(i0 + 1, source - 1);
    taps[static_cast<std::size_t>(j)] = {i0, i1, pos - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::kAdd, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::kSub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::kMul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor) {
  auto xn = x.node();
  const T f = static_cast<T>(factor);
  std::vector<T> out(xn->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xn->data[i] * f;
  return emit<T>("scale", x.shape(), std::move(out), {xn}, [xn, f](const Node<T>& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i] * f;
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Broadcast bc;
  try {
    bc = broadcast_shapes(batch_a, batch_b, "matmul");
  } catch (const DimensionError&) {
    throw DimensionError("matmul: batch dimensions of " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " are not broadcastable");
  }
  std::vector<std::int64_t> off_a, off_b;
  for_each_broadcast(bc, [&](std::int64_t, std::int64_t ia, std::int64_t ib) {
    off_a.push_back(ia);
    off_b.push_back(ib);
  });
  Shape out_shape = bc.out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  auto an = a.node();
  auto bn = b.node();
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const int im = static_cast<int>(m), ik = static_cast<int>(k), in = static_cast<int>(n);
  for (std::size_t i = 0; i < off_a.size(); ++i) {
    gemm(false, false, im, in, ik, T(1), an->data.data() + off_a[i] * m * k, ik, bn->data.data() + off_b[i] * k * n,
         in, T(0), out.data() + static_cast<std::int64_t>(i) * m * n, in);
  }
  return emit<T>("matmul", std::move(out_shape), std::move(out), {an, bn},
                 [an, bn, off_a, off_b, im, ik, in](const Node<T>& o) {
                   const std::int64_t m = im, k = ik, n = in;
                   if (an->requires_grad) an->ensure_grad();
                   if (bn->requires_grad) bn->ensure_grad();
                   for (std::size_t i = 0; i < off_a.size(); ++i) {
                     const T* dc = o.grad.data() + static_cast<std::int64_t>(i) * m * n;
                     if (an->requires_grad) {
                       gemm(false, true, im, ik, in, T(1), dc, in, bn->data.data() + off_b[i] * k * n, in, T(1),
                            an->grad.data() + off_a[i] * m * k, ik);
                     }
                     if (bn->requires_grad) {
                       gemm(true, false, ik, in, im, T(1), an->data.data() + off_a[i] * m * k, ik, dc, in, T(1),
                            bn->grad.data() + off_b[i] * k * n, in);
                     }
                   }
                 });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 const Conv2dOptions& opts) {
  if (x.rank() != 3 || weight.rank() != 4) {
    throw DimensionError("conv2d expects x[C,H,W] and weight[Co,Ci,kh,kw], got " + shape_str(x.shape()) + " and " +
                         shape_str(weight.shape()));
  }
  const std::int64_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::int64_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const std::int64_t groups = opts.groups;
  if (groups < 1 || cin % groups != 0 || cout % groups != 0 || weight.dim(1) != cin / groups) {
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(x.shape()) + " at groups=" + std::to_string(groups));
  }
  if (opts.stride_h < 1 || opts.stride_w < 1 || opts.pad_h < 0 || opts.pad_w < 0) {
    throw DimensionError("conv2d: strides must be >= 1 and padding >= 0");
  }
  if (kh > h + 2 * opts.pad_h || kw > w + 2 * opts.pad_w) {
    throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + std::to_string(h + 2 * opts.pad_h) + "x" +
                         std::to_string(w + 2 * opts.pad_w));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias->shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
  }
  const std::int64_t oh = (h + 2 * opts.pad_h - kh) / opts.stride_h + 1;
  const std::int64_t ow = (w + 2 * opts.pad_w - kw) / opts.stride_w + 1;
  const std::int64_t cg = cin / groups, og = cout / groups;
  const std::int64_t patch = cg * kh * kw, npix = oh * ow;

  auto xn = x.node();
  auto wn = weight.node();
  NodePtr<T> bn = bias ? bias->node() : nullptr;
  std::vector<T> out(static_cast<std::size_t>(cout * npix));
  const bool depthwise = cg == 1 && og == 1;
  std::vector<T> cols(depthwise ? 0 : static_cast<std::size_t>(patch * npix));
  if (depthwise) depthwise_forward(xn->data.data(), wn->data.data(), cin, h, w, kh, kw, opts, oh, ow, out.data());
  for (std::int64_t g = 0; g < (depthwise ? 0 : groups); ++g) {
    im2col(xn->data.data() + g * cg * h * w, cg, h, w, kh, kw, opts, oh, ow, cols.data());
    gemm(false, false, static_cast<int>(og), static_cast<int>(npix), static_cast<int>(patch), T(1),
         wn->data.data() + g * og * patch, static_cast<int>(patch), cols.data(), static_cast<int>(npix), T(0),
         out.data() + g * og * npix, static_cast<int>(npix));
  }
  if (bn) {
    for (std::int64_t c = 0; c < cout; ++c) {
      const T bv = bn->data[static_cast<std::size_t>(c)];
      for (std::int64_t p = 0; p < npix; ++p) out[static_cast<std::size_t>(c * npix + p)] += bv;
    }
  }
  std::vector<NodePtr<T>> inputs{xn, wn};
  if (bn) inputs.push_back(bn);
  return emit<T>("conv2d", Shape{cout, oh, ow}, std::move(out), std::move(inputs),
                 [=](const Node<T>& o) {
                   if (depthwise) {
                     if (xn->requires_grad) xn->ensure_grad();
                     if (wn->requires_grad) wn->ensure_grad();
                     depthwise_backward(xn->data.data(), wn->data.data(), o.grad.data(), cin, h, w, kh, kw, opts, oh,
                                        ow, xn->requires_grad ? xn->grad.data() : nullptr,
                                        wn->requires_grad ? wn->grad.data() : nullptr);
                   }
                   std::vector<T> cols(depthwise ? 0 : static_cast<std::size_t>(patch * npix));
                   std::vector<T> dcols;
                   if (xn->requires_grad && !depthwise) {
                     xn->ensure_grad();
                     dcols.resize(cols.size());
                   }
                   if (wn->requires_grad) wn->ensure_grad();
                   for (std::int64_t g = 0; g < (depthwise ? 0 : groups); ++g) {
                     const T* dout = o.grad.data() + g * og * npix;
                     if (wn->requires_grad) {
                       im2col(xn->data.data() + g * cg * h * w, cg, h, w, kh, kw, opts, oh, ow, cols.data());
                       gemm(false, true, static_cast<int>(og), static_cast<int>(patch), static_cast<int>(npix), T(1),
                            dout, static_cast<int>(npix), cols.data(), static_cast<int>(npix), T(1),
                            wn->grad.data() + g * og * patch, static_cast<int>(patch));
                     }
                     if (xn->requires_grad) {
                       gemm(true, false, static_cast<int>(patch), static_cast<int>(npix), static_cast<int>(og), T(1),
                            wn->data.data() + g * og * patch, static_cast<int>(patch), dout, static_cast<int>(npix),
                            T(0), dcols.data(), static_cast<int>(npix));
                       col2im_add(dcols.data(), cg, h, w, kh, kw, opts, oh, ow, xn->grad.data() + g * cg * h * w);
                     }
                   }
                   if (bn && bn->requires_grad) {
                     bn->ensure_grad();
                     for (std::int64_t c = 0; c < cout; ++c) {
                       T s = 0;
                       for (std::int64_t p = 0; p < npix; ++p) s += o.grad[static_cast<std::size_t>(c * npix + p)];
                       bn->grad[static_cast<std::size_t>(c)] += s;
                     }
                   }
                 });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::int64_t kernel, std::int64_t stride, std::int64_t pad) {
  if (x.rank() != 3) throw DimensionError("max_pool2d expects x[C,H,W], got " + shape_str(x.shape()));
  if (kernel < 1 || stride < 1 || pad < 0 || pad >= kernel) {
    throw DimensionError("max_pool2d: invalid kernel/stride/padding");
  }
  const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (kernel > h + 2 * pad || kernel > w + 2 * pad) throw DimensionError("max_pool2d: kernel larger than padded input");
  const std::int64_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - kernel) / stride + 1;
  auto xn = x.node();
  std::vector<T> out(static_cast<std::size_t>(c * oh * ow));
  std::vector<std::int64_t> arg(out.size());
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t best_i = -1;
        for (std::int64_t i = 0; i < kernel; ++i) {
          const std::int64_t sy = y * stride - pad + i;
          if (sy < 0 || sy >= h) continue;
          for (std::int64_t j = 0; j < kernel; ++j) {
            const std::int64_t sx = xo * stride - pad + j;
            if (sx < 0 || sx >= w) continue;
            const std::int64_t src = (ch * h + sy) * w + sx;
            if (best_i < 0 || xn->data[static_cast<std::size_t>(src)] > best) {
              best = xn->data[static_cast<std::size_t>(src)];
              best_i = src;
            }
          }
        }
        const auto o = static_cast<std::size_t>((ch * oh + y) * ow + xo);
        out[o] = best;
        arg[o] = best_i;
      }
    }
  }
  return emit<T>("max_pool2d", Shape{c, oh, ow}, std::move(out), {xn}, [xn, arg](const Node<T>& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i) xn->grad[static_cast<std::size_t>(arg[i])] += o.grad[i];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "softmax");
  const AxisView v = axis_view(x.shape(), a);
  auto xn = x.node();
  std::vector<T> out(xn->data.size());
  for (std::int64_t o = 0; o < v.outer; ++o) {
    for (std::int64_t in = 0; in < v.inner; ++in) {
      const std::int64_t base = o * v.extent * v.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t e = 0; e < v.extent; ++e) mx = std::max(mx, xn->data[static_cast<std::size_t>(base + e * v.inner)]);
      T total = 0;
      for (std::int64_t e = 0; e < v.extent; ++e) {
        const auto idx = static_cast<std::size_t>(base + e * v.inner);
        out[idx] = std::exp(xn->data[idx] - mx);
        total += out[idx];
      }
      for (std::int64_t e = 0; e < v.extent; ++e) out[static_cast<std::size_t>(base + e * v.inner)] /= total;
    }
  }
  return emit<T>("softmax", x.shape(), std::move(out), {xn}, [xn, v](const Node<T>& o) {
    xn->ensure_grad();
    for (std::int64_t ou = 0; ou < v.outer; ++ou) {
      for (std::int64_t in = 0; in < v.inner; ++in) {
        const std::int64_t base = ou * v.extent * v.inner + in;
        T dot = 0;
        for (std::int64_t e = 0; e < v.extent; ++e) {
          const auto idx = static_cast<std::size_t>(base + e * v.inner);
          dot += o.grad[idx] * o.data[idx];
        }
        for (std::int64_t e = 0; e < v.extent; ++e) {
          const auto idx = static_cast<std::size_t>(base + e * v.inner);
          xn->grad[idx] += o.data[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, double eps) {
  const std::int64_t e = x.dim(-1);
  if (gain.numel() != e || shift.numel() != e) {
    throw DimensionError("layernorm: gain " + shape_str(gain.shape()) + " / shift " + shape_str(shift.shape()) +
                         " must match last axis of " + shape_str(x.shape()));
  }
  const std::int64_t rows = x.numel() / e;
  auto xn = x.node();
  auto gn = gain.node();
  auto sn = shift.node();
  std::vector<T> out(xn->data.size());
  std::vector<T> xhat(xn->data.size());
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = xn->data.data() + r * e;
    double mu = 0;
    for (std::int64_t i = 0; i < e; ++i) mu += row[i];
    mu /= static_cast<double>(e);
    double var = 0;
    for (std::int64_t i = 0; i < e; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(e);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = static_cast<T>(is);
    for (std::int64_t i = 0; i < e; ++i) {
      const auto idx = static_cast<std::size_t>(r * e + i);
      xhat[idx] = static_cast<T>((row[i] - mu) * is);
      out[idx] = xhat[idx] * gn->data[static_cast<std::size_t>(i)] + sn->data[static_cast<std::size_t>(i)];
    }
  }
  return emit<T>("layernorm", x.shape(), std::move(out), {xn, gn, sn},
                 [xn, gn, sn, xhat = std::move(xhat), inv_std = std::move(inv_std), e, rows](const Node<T>& o) {
                   if (gn->requires_grad) gn->ensure_grad();
                   if (sn->requires_grad) sn->ensure_grad();
                   if (xn->requires_grad) xn->ensure_grad();
                   std::vector<T> dxhat(static_cast<std::size_t>(e));
                   for (std::int64_t r = 0; r < rows; ++r) {
                     T m1 = 0, m2 = 0;
                     for (std::int64_t i = 0; i < e; ++i) {
                       const auto idx = static_cast<std::size_t>(r * e + i);
                       const T dy = o.grad[idx];
                       if (gn->requires_grad) gn->grad[static_cast<std::size_t>(i)] += dy * xhat[idx];
                       if (sn->requires_grad) sn->grad[static_cast<std::size_t>(i)] += dy;
                       dxhat[static_cast<std::size_t>(i)] = dy * gn->data[static_cast<std::size_t>(i)];
                       m1 += dxhat[static_cast<std::size_t>(i)];
                       m2 += dxhat[static_cast<std::size_t>(i)] * xhat[idx];
                     }
                     if (!xn->requires_grad) continue;
                     m1 /= static_cast<T>(e);
                     m2 /= static_cast<T>(e);
                     const T is = inv_std[static_cast<std::size_t>(r)];
                     for (std::int64_t i = 0; i < e; ++i) {
                       const auto idx = static_cast<std::size_t>(r * e + i);
                       xn->grad[idx] += is * (dxhat[static_cast<std::size_t>(i)] - m1 - xhat[idx] * m2);
                     }
                   }
                 });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  auto xn = x.node();
  std::vector<T> out(xn->data.size());
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xn->data[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
  }
  return emit<T>("gelu", x.shape(), std::move(out), {xn}, [xn](const Node<T>& o) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double v = xn->data[i];
      const double d = 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      xn->grad[i] += static_cast<T>(o.grad[i] * d);
    }
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const int r = parts.front().rank();
  const int a = normalize_axis(axis, r, "concat");
  Shape out_shape = parts.front().shape();
  out_shape[static_cast<std::size_t>(a)] = 0;
  std::vector<NodePtr<T>> nodes;
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) {
    bool ok = p.rank() == r;
    for (int i = 0; ok && i < r; ++i) {
      if (i != a && p.shape()[static_cast<std::size_t>(i)] != parts.front().shape()[static_cast<std::size_t>(i)]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(p.shape()) + " incompatible with " +
                           shape_str(parts.front().shape()) + " along axis " + std::to_string(a));
    }
    out_shape[static_cast<std::size_t>(a)] += p.dim(a);
    extents.push_back(p.dim(a));
    nodes.push_back(p.node());
  }
  const AxisView v = axis_view(out_shape, a);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::int64_t offset = 0;
  for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
    const std::int64_t chunk = extents[pi] * v.inner;
    for (std::int64_t o = 0; o < v.outer; ++o) {
      std::copy_n(nodes[pi]->data.data() + o * chunk, chunk, out.data() + o * v.extent * v.inner + offset);
    }
    offset += chunk;
  }
  auto captured = nodes;
  return emit<T>("concat", std::move(out_shape), std::move(out), std::move(nodes),
                 [captured, extents, v](const Node<T>& o) {
                   std::int64_t offset = 0;
                   for (std::size_t pi = 0; pi < captured.size(); ++pi) {
                     const std::int64_t chunk = extents[pi] * v.inner;
                     auto& n = captured[pi];
                     if (n->requires_grad) {
                       n->ensure_grad();
                       for (std::int64_t ou = 0; ou < v.outer; ++ou) {
                         const T* src = o.grad.data() + ou * v.extent * v.inner + offset;
                         T* dst = n->grad.data() + ou * chunk;
                         for (std::int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
                       }
                     }
                     offset += chunk;
                   }
                 });
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, const std::vector<std::int64_t>& sizes) {
  const int a = normalize_axis(axis, x.rank(), "split");
  std::int64_t total = 0;
  for (auto s : sizes) {
    if (s <= 0) throw DimensionError("split: sizes must be positive");
    total += s;
  }
  if (total != x.dim(a)) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) + " but axis " + std::to_string(a) +
                         " of " + shape_str(x.shape()) + " has extent " + std::to_string(x.dim(a)));
  }
  const AxisView v = axis_view(x.shape(), a);
  auto xn = x.node();
  std::vector<Tensor<T>> outs;
  std::int64_t offset = 0;
  for (auto s : sizes) {
    Shape shape = x.shape();
    shape[static_cast<std::size_t>(a)] = s;
    const std::int64_t chunk = s * v.inner;
    std::vector<T> out(static_cast<std::size_t>(v.outer * chunk));
    for (std::int64_t o = 0; o < v.outer; ++o) {
      std::copy_n(xn->data.data() + o * v.extent * v.inner + offset, chunk, out.data() + o * chunk);
    }
    outs.push_back(emit<T>("split", std::move(shape), std::move(out), {xn}, [xn, v, offset, chunk](const Node<T>& o) {
      xn->ensure_grad();
      for (std::int64_t ou = 0; ou < v.outer; ++ou) {
        T* dst = xn->grad.data() + ou * v.extent * v.inner + offset;
        const T* src = o.grad.data() + ou * chunk;
        for (std::int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    }));
    offset += chunk;
  }
  return outs;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw DimensionError("permute: permutation rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)]) throw DimensionError("permute: invalid permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  const auto in_strides = contiguous_strides(x.shape());
  Shape out_shape(static_cast<std::size_t>(r));
  Broadcast walk;  // stride_a: source stride for each output axis
  walk.stride_a.resize(static_cast<std::size_t>(r));
  walk.stride_b.assign(static_cast<std::size_t>(r), 0);
  for (int i = 0; i < r; ++i) {
    out_shape[static_cast<std::size_t>(i)] = x.shape()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    walk.stride_a[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  walk.out = out_shape;
  auto xn = x.node();
  std::vector<T> out(xn->data.size());
  for_each_broadcast(walk, [&](std::int64_t i, std::int64_t src, std::int64_t) {
    out[static_cast<std::size_t>(i)] = xn->data[static_cast<std::size_t>(src)];
  });
  return emit<T>("permute", std::move(out_shape), std::move(out), {xn}, [xn, walk](const Node<T>& o) {
    xn->ensure_grad();
    for_each_broadcast(walk, [&](std::int64_t i, std::int64_t src, std::int64_t) {
      xn->grad[static_cast<std::size_t>(src)] += o.grad[static_cast<std::size_t>(i)];
    });
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  const int r = x.rank();
  if (r < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(x.shape()));
  std::vector<int> perm(static_cast<std::size_t>(r));
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[static_cast<std::size_t>(r - 1)], perm[static_cast<std::size_t>(r - 2)]);
  return permute(x, perm);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto xn = x.node();
  std::vector<T> out = xn->data;
  return emit<T>("reshape", std::move(shape), std::move(out), {xn}, [xn](const Node<T>& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> interp_linear_1d(const Tensor<T>& x, std::int64_t target) {
  if (target <= 0) throw DimensionError("interp_linear_1d: target must be positive");
  const std::int64_t n = x.dim(-1);
  const std::int64_t rows = x.numel() / n;
  const auto taps = interp_taps(n, target);
  Shape out_shape = x.shape();
  out_shape.back() = target;
  auto xn = x.node();
  std::vector<T> out(static_cast<std::size_t>(rows * target));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* src = xn->data.data() + r * n;
    for (std::int64_t j = 0; j < target; ++j) {
      const auto& t = taps[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(r * target + j)] =
          t.frac == 0.0 ? src[t.i0]
                        : static_cast<T>(static_cast<double>(src[t.i0]) +
                                         t.frac * (static_cast<double>(src[t.i1]) - static_cast<double>(src[t.i0])));
    }
  }
  return emit<T>("interp_linear_1d", std::move(out_shape), std::move(out), {xn},
                 [xn, taps, rows, n, target](const Node<T>& o) {
                   xn->ensure_grad();
                   for (std::int64_t r = 0; r < rows; ++r) {
                     T* dst = xn->grad.data() + r * n;
                     for (std::int64_t j = 0; j < target; ++j) {
                       const auto& t = taps[static_cast<std::size_t>(j)];
                       const T g = o.grad[static_cast<std::size_t>(r * target + j)];
                       dst[t.i0] += static_cast<T>((1.0 - t.frac) * g);
                       if (t.frac != 0.0) dst[t.i1] += static_cast<T>(t.frac * g);
                     }
                   }
                 });
}

template <typename T>
Tensor<T> interp_bilinear_2d(const Tensor<T>& x, std::int64_t target_h, std::int64_t target_w) {
  if (x.rank() < 2) throw DimensionError("interp_bilinear_2d needs rank >= 2");
  if (target_h <= 0 || target_w <= 0) throw DimensionError("interp_bilinear_2d: target must be positive");
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  const std::int64_t planes = x.numel() / (h * w);
  const auto th = interp_taps(h, target_h);
  const auto tw = interp_taps(w, target_w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = target_h;
  out_shape.back() = target_w;
  auto xn = x.node();
  std::vector<T> out(static_cast<std::size_t>(planes * target_h * target_w));
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = xn->data.data() + p * h * w;
    for (std::int64_t i = 0; i < target_h; ++i) {
      const auto& a = th[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < target_w; ++j) {
        const auto& b = tw[static_cast<std::size_t>(j)];
        T v;
        if (a.frac == 0.0 && b.frac == 0.0) {
          v = src[a.i0 * w + b.i0];
        } else {
          v = static_cast<T>((1 - a.frac) * ((1 - b.frac) * src[a.i0 * w + b.i0] + b.frac * src[a.i0 * w + b.i1]) +
                             a.frac * ((1 - b.frac) * src[a.i1 * w + b.i0] + b.frac * src[a.i1 * w + b.i1]));
        }
        out[static_cast<std::size_t>((p * target_h + i) * target_w + j)] = v;
      }
    }
  }
  return emit<T>("interp_bilinear_2d", std::move(out_shape), std::move(out), {xn},
                 [xn, th, tw, planes, h, w, target_h, target_w](const Node<T>& o) {
                   xn->ensure_grad();
                   for (std::int64_t p = 0; p < planes; ++p) {
                     T* dst = xn->grad.data() + p * h * w;
                     for (std::int64_t i = 0; i < target_h; ++i) {
                       const auto& a = th[static_cast<std::size_t>(i)];
                       for (std::int64_t j = 0; j < target_w; ++j) {
                         const auto& b = tw[static_cast<std::size_t>(j)];
                         const double g = o.grad[static_cast<std::size_t>((p * target_h + i) * target_w + j)];
                         dst[a.i0 * w + b.i0] += static_cast<T>(g * (1 - a.frac) * (1 - b.frac));
                         if (b.frac != 0.0) dst[a.i0 * w + b.i1] += static_cast<T>(g * (1 - a.frac) * b.frac);
                         if (a.frac != 0.0) {
                           dst[a.i1 * w + b.i0] += static_cast<T>(g * a.frac * (1 - b.frac));
                           if (b.frac != 0.0) dst[a.i1 * w + b.i1] += static_cast<T>(g * a.frac * b.frac);
                         }
                       }
                     }
                   }
                 });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto xn = x.node();
  double s = 0;
  for (auto v : xn->data) s += v;
  return emit<T>("sum", Shape{1}, std::vector<T>{static_cast<T>(s)}, {xn}, [xn](const Node<T>& o) {
    xn->ensure_grad();
    for (auto& g : xn->grad) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(static_cast<std::size_t>(x.numel()));
  for (auto& m : mask) m = keep(rng) ? s : T(0);
  return mul(x, Tensor<T>(x.shape(), std::move(mask)));
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const T> target) {
  if (static_cast<std::int64_t>(target.size()) != logits.numel()) {
    throw DimensionError("softmax_cross_entropy: target length " + std::to_string(target.size()) +
                         " vs logits " + shape_str(logits.shape()));
  }
  auto ln = logits.node();
  const std::size_t n = ln->data.size();
  T mx = *std::max_element(ln->data.begin(), ln->data.end());
  double z = 0;
  for (auto v : ln->data) z += std::exp(static_cast<double>(v - mx));
  const double lse = static_cast<double>(mx) + std::log(z);
  double loss = 0, tsum = 0;
  std::vector<T> prob(n);
  for (std::size_t i = 0; i < n; ++i) {
    prob[i] = static_cast<T>(std::exp(static_cast<double>(ln->data[i]) - lse));
    loss -= static_cast<double>(target[i]) * (static_cast<double>(ln->data[i]) - lse);
    tsum += target[i];
  }
  std::vector<T> tgt(target.begin(), target.end());
  return emit<T>("softmax_cross_entropy", Shape{1}, std::vector<T>{static_cast<T>(loss)}, {ln},
                 [ln, prob = std::move(prob), tgt = std::move(tgt), tsum](const Node<T>& o) {
                   ln->ensure_grad();
                   for (std::size_t i = 0; i < prob.size(); ++i) {
                     ln->grad[i] += o.grad[0] * (prob[i] * static_cast<T>(tsum) - tgt[i]);
                   }
                 });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> target) {
  if (static_cast<std::int64_t>(target.size()) != logits.numel()) {
    throw DimensionError("bce_with_logits: target length " + std::to_string(target.size()) + " vs logits " +
                         shape_str(logits.shape()));
  }
  auto ln = logits.node();
  const std::size_t n = ln->data.size();
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ln->data[i];
    loss += std::max(x, 0.0) - x * target[i] + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= static_cast<double>(n);
  std::vector<T> tgt(target.begin(), target.end());
  return emit<T>("bce_with_logits", Shape{1}, std::vector<T>{static_cast<T>(loss)}, {ln},
                 [ln, tgt = std::move(tgt)](const Node<T>& o) {
                   ln->ensure_grad();
                   const double inv = 1.0 / static_cast<double>(tgt.size());
                   for (std::size_t i = 0; i < tgt.size(); ++i) {
                     const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(ln->data[i])));
                     ln->grad[i] += static_cast<T>(o.grad[0] * (sig - tgt[i]) * inv);
                   }
                 });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return add(matmul(x, weight), bias);
}

namespace {

constexpr std::int64_t kAttentionBlock = 128;

// Row-wise softmax of s[rows, cols] in place.
template <typename T>
void softmax_rows(T* s, std::int64_t rows, std::int64_t cols) {
  for (std::int64_t r = 0; r < rows; ++r) {
    T* row = s + r * cols;
    T mx = row[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T total = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    const T inv = T(1) / total;
    for (std::int64_t c = 0; c < cols; ++c) row[c] *= inv;
  }
}

}  // namespace

template <typename T>
Tensor<T> fused_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, double scale) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 || q.dim(0) != k.dim(0) || k.dim(0) != v.dim(0) ||
      q.dim(2) != k.dim(2) || k.dim(1) != v.dim(1)) {
    throw DimensionError("fused_attention: incompatible q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                         ", v " + shape_str(v.shape()));
  }
  const std::int64_t heads = q.dim(0), lq = q.dim(1), lk = k.dim(1), d = q.dim(2), dv = v.dim(2);
  if (lk == 0) throw DimensionError("fused_attention: no keys");
  auto qn = q.node();
  auto kn = k.node();
  auto vn = v.node();
  const T s = static_cast<T>(scale);
  std::vector<T> out(static_cast<std::size_t>(heads * lq * dv));
  std::vector<T> p(static_cast<std::size_t>(std::min(lq, kAttentionBlock) * lk));
  for (std::int64_t h = 0; h < heads; ++h) {
    const T* qh = qn->data.data() + h * lq * d;
    const T* kh = kn->data.data() + h * lk * d;
    const T* vh = vn->data.data() + h * lk * dv;
    for (std::int64_t r0 = 0; r0 < lq; r0 += kAttentionBlock) {
      const int rows = static_cast<int>(std::min(kAttentionBlock, lq - r0));
      gemm(false, true, rows, static_cast<int>(lk), static_cast<int>(d), s, qh + r0 * d, static_cast<int>(d), kh,
           static_cast<int>(d), T(0), p.data(), static_cast<int>(lk));
      softmax_rows(p.data(), rows, lk);
      gemm(false, false, rows, static_cast<int>(dv), static_cast<int>(lk), T(1), p.data(), static_cast<int>(lk), vh,
           static_cast<int>(dv), T(0), out.data() + (h * lq + r0) * dv, static_cast<int>(dv));
    }
  }
  return emit<T>("fused_attention", Shape{heads, lq, dv}, std::move(out), {qn, kn, vn},
                 [qn, kn, vn, heads, lq, lk, d, dv, s](const Node<T>& o) {
                   for (const auto& n : {qn, kn, vn}) {
                     if (n->requires_grad) n->ensure_grad();
                   }
                   const std::int64_t block = std::min(lq, kAttentionBlock);
                   std::vector<T> p(static_cast<std::size_t>(block * lk));
                   std::vector<T> dp(p.size());
                   const int ik = static_cast<int>(lk), id = static_cast<int>(d), idv = static_cast<int>(dv);
                   for (std::int64_t h = 0; h < heads; ++h) {
                     const T* qh = qn->data.data() + h * lq * d;
                     const T* kh = kn->data.data() + h * lk * d;
                     const T* vh = vn->data.data() + h * lk * dv;
                     const T* go = o.grad.data() + h * lq * dv;
                     for (std::int64_t r0 = 0; r0 < lq; r0 += kAttentionBlock) {
                       const int rows = static_cast<int>(std::min(kAttentionBlock, lq - r0));
                       gemm(false, true, rows, ik, id, s, qh + r0 * d, id, kh, id, T(0), p.data(), ik);
                       softmax_rows(p.data(), rows, lk);
                       if (vn->requires_grad) {
                         gemm(true, false, ik, idv, rows, T(1), p.data(), ik, go + r0 * dv, idv, T(1),
                              vn->grad.data() + h * lk * dv, idv);
                       }
                       if (!qn->requires_grad && !kn->requires_grad) continue;
                       // dP = dO V^T, then dS = P * (dP - rowsum(dP * P)) * scale.
                       gemm(false, true, rows, ik, idv, T(1), go + r0 * dv, idv, vh, idv, T(0), dp.data(), ik);
                       for (int r = 0; r < rows; ++r) {
                         T* pr = p.data() + static_cast<std::int64_t>(r) * lk;
                         T* dr = dp.data() + static_cast<std::int64_t>(r) * lk;
                         T dot = 0;
                         for (std::int64_t c = 0; c < lk; ++c) dot += pr[c] * dr[c];
                         for (std::int64_t c = 0; c < lk; ++c) dr[c] = pr[c] * (dr[c] - dot) * s;
                       }
                       if (qn->requires_grad) {
                         gemm(false, false, rows, id, ik, T(1), dp.data(), ik, kh, id, T(1),
                              qn->grad.data() + (h * lq + r0) * d, id);
                       }
                       if (kn->requires_grad) {
                         gemm(true, false, ik, id, rows, T(1), dp.data(), ik, qh + r0 * d, id, T(1),
                              kn->grad.data() + h * lk * d, id);
                       }
                     }
                   }
                 });
}

#define MMVIT_INSTANTIATE_OPS(T)                                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&,                  \
                            const Conv2dOptions&);                                                                 \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t);                      \
  template Tensor<T> softmax(const Tensor<T>&, int);                                                              \
  template Tensor<T> fused_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);               \
  template Tensor<T> layernorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);                     \
  template Tensor<T> gelu(const Tensor<T>&);                                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> scale(const Tensor<T>&, double);                                                             \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                                  \
  template std::vector<Tensor<T>> split(const Tensor<T>&, int, const std::vector<std::int64_t>&);                 \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                                          \
  template Tensor<T> transpose(const Tensor<T>&);                                                                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                            \
  template Tensor<T> interp_linear_1d(const Tensor<T>&, std::int64_t);                                            \
  template Tensor<T> interp_bilinear_2d(const Tensor<T>&, std::int64_t, std::int64_t);                            \
  template Tensor<T> sum(const Tensor<T>&);                                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                                      \
  template Tensor<T> dropout(const Tensor<T>&, double, std::mt19937_64&);                                         \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const T>);                                 \
  template Tensor<T> bce_with_logits(const Tensor<T>&, std::span<const T>);                                       \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

MMVIT_INSTANTIATE_OPS(float)
MMVIT_INSTANTIATE_OPS(double)

#undef MMVIT_INSTANTIATE_OPS

}  // namespace mmvit
