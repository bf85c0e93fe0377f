// Copyright 2026 The M3D Attack Lab Authors
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

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "m3d/errors.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

// Space in which the two discriminators' outputs are compared by L_d.
enum class DiscrepancySpace { probability, logit };

// Stable softmax (max-subtracted).
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const T mx = *std::max_element(p.begin(), p.end());
  T sum = 0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

// A scalar loss and its gradients with respect to one or two logit batches.
template <typename T>
struct LossGrad {
  T value = 0;
  Tensor<T> grad_a;
  Tensor<T> grad_b;
};

namespace detail {

template <typename T>
void check_logits(const Tensor<T>& l, const char* what) {
  if (l.h() != 1 || l.w() != 1 || l.n() < 1) throw ShapeError(std::string(what) + ": expected (batch, classes, 1, 1)");
}

template <typename T>
T sign(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

}  // namespace detail

// Mean over the batch of the cross-entropy -log softmax(logits)[label].
template <typename T>
LossGrad<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  detail::check_logits(logits, "cross_entropy");
  const int n = logits.n(), k = logits.c();
  if (static_cast<int>(labels.size()) != n) throw ShapeError("cross_entropy: label count mismatch");
  LossGrad<T> out;
  out.grad_a = Tensor<T>(n, k, 1, 1);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k)
      throw ValidationError("class index " + std::to_string(labels[i]) + " outside [0, " + std::to_string(k) + ")");
    std::span<const T> row(logits.data.data() + static_cast<std::size_t>(i) * k, k);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum = 0;
    for (T v : row) sum += std::exp(v - mx);
    const T lse = mx + std::log(sum);
    out.value += lse - row[labels[i]];
    for (int c = 0; c < k; ++c)
      out.grad_a.data[static_cast<std::size_t>(i) * k + c] =
          (std::exp(row[c] - lse) - (c == labels[i] ? T(1) : T(0))) / static_cast<T>(n);
  }
  out.value /= static_cast<T>(n);
  return out;
}

// L_d: batch mean of the l1 distance between the two discriminators' outputs,
// summed over classes. In probability space the value lies in [0, 2]. The
// subgradient of |.| at 0 is taken as 0.
template <typename T>
LossGrad<T> discrepancy_loss(const Tensor<T>& a, const Tensor<T>& b,
                             DiscrepancySpace space = DiscrepancySpace::probability) {
  detail::check_logits(a, "discrepancy_loss");
  require_same_shape(a, b, "discrepancy_loss");
  const int n = a.n(), k = a.c();
  LossGrad<T> out;
  out.grad_a = Tensor<T>(n, k, 1, 1);
  out.grad_b = Tensor<T>(n, k, 1, 1);
  const T inv_n = T(1) / static_cast<T>(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * k;
    std::span<const T> ra(a.data.data() + off, k), rb(b.data.data() + off, k);
    if (space == DiscrepancySpace::logit) {
      for (int c = 0; c < k; ++c) {
        const T s = detail::sign(ra[c] - rb[c]);
        out.value += std::abs(ra[c] - rb[c]);
        out.grad_a.data[off + c] = s * inv_n;
        out.grad_b.data[off + c] = -s * inv_n;
      }
      continue;
    }
    const std::vector<T> pa = softmax(ra), pb = softmax(rb);
    std::vector<T> s(k);
    T dot_a = 0, dot_b = 0;
    for (int c = 0; c < k; ++c) {
      out.value += std::abs(pa[c] - pb[c]);
      s[c] = detail::sign(pa[c] - pb[c]);
      dot_a += s[c] * pa[c];
      dot_b += s[c] * pb[c];
    }
    // Softmax Jacobian-vector products: d/dl_a of sum_c s_c p_a,c and the
    // mirrored term for b (whose sign vector is -s).
    for (int c = 0; c < k; ++c) {
      out.grad_a.data[off + c] = pa[c] * (s[c] - dot_a) * inv_n;
      out.grad_b.data[off + c] = -pb[c] * (s[c] - dot_b) * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

// L_a: mean over the batch of CE(D1(z), target) + CE(D2(z), target).
template <typename T>
LossGrad<T> attack_loss(const Tensor<T>& d1_logits, const Tensor<T>& d2_logits, int target_class) {
  require_same_shape(d1_logits, d2_logits, "attack_loss");
  if (target_class < 0 || target_class >= d1_logits.c())
    throw ValidationError("target class " + std::to_string(target_class) + " outside [0, " +
                          std::to_string(d1_logits.c()) + ")");
  const std::vector<int> labels(d1_logits.n(), target_class);
  LossGrad<T> a = cross_entropy(d1_logits, labels);
  LossGrad<T> b = cross_entropy(d2_logits, labels);
  return {a.value + b.value, std::move(a.grad_a), std::move(b.grad_a)};
}

// L_c: mean over the batch of CE(D1(x), y) + CE(D2(x), y) on clean images.
template <typename T>
LossGrad<T> clean_classification_loss(const Tensor<T>& d1_logits, const Tensor<T>& d2_logits,
                                      std::span<const int> labels) {
  require_same_shape(d1_logits, d2_logits, "clean_classification_loss");
  LossGrad<T> a = cross_entropy(d1_logits, labels);
  LossGrad<T> b = cross_entropy(d2_logits, labels);
  return {a.value + b.value, std::move(a.grad_a), std::move(b.grad_a)};
}

// Generator minimizes L_a + L_d.
inline double generator_loss(double l_a, double l_d) { return l_a + l_d; }
// Discriminators minimize L_c - L_d, i.e. maximize L_d - L_c.
inline double discriminator_loss(double l_c, double l_d) { return l_c - l_d; }

struct LossBundle {
  double l_d = 0;
  double l_a = 0;
  double l_c = 0;
  double generator_objective = 0;
  double discriminator_objective = 0;

  static LossBundle make(double l_a, double l_d, double l_c) {
    return {l_d, l_a, l_c, generator_loss(l_a, l_d), discriminator_loss(l_c, l_d)};
  }
  bool finite() const { return std::isfinite(l_d) && std::isfinite(l_a) && std::isfinite(l_c); }
};

}  // namespace m3d
