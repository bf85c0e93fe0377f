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

#include <memory>
#include <string>
#include <vector>

#include "m3d/params.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

// LIFO store of activations recorded by forward passes and consumed in
// reverse order by backward passes.
template <typename T>
struct Tape {
  std::vector<std::vector<T>> buffers;
  std::vector<std::vector<int>> indices;

  void push(std::vector<T> v) { buffers.push_back(std::move(v)); }
  std::vector<T> pop() {
    std::vector<T> v = std::move(buffers.back());
    buffers.pop_back();
    return v;
  }
  void push_indices(std::vector<int> v) { indices.push_back(std::move(v)); }
  std::vector<int> pop_indices() {
    std::vector<int> v = std::move(indices.back());
    indices.pop_back();
    return v;
  }
  bool empty() const { return buffers.empty() && indices.empty(); }
};

// Stateless layer description. Parameters live in the owning network's
// ParamSet; a layer only remembers the indices of its entries. Passing a
// null tape to forward() skips recording (inference only).
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const = 0;
  // Accumulates parameter gradients into `grads` (skipped when null) and
  // returns dL/dx when `need_dx` is set (an empty tensor otherwise).
  virtual Tensor<T> backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                             bool need_dx) const = 0;
};

template <typename T>
using LayerPtr = std::shared_ptr<const Layer<T>>;

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, int weight, int bias)
      : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), pad_(pad), w_(weight), b_(bias) {}
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const override;
  Tensor<T> backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                     bool need_dx) const override;

 private:
  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
  int in_, out_, k_, stride_, pad_, w_, b_;
};

// Per-sample, per-channel normalization over the spatial extent, with a
// learned affine transform.
template <typename T>
class InstanceNorm final : public Layer<T> {
 public:
  InstanceNorm(int channels, int gamma, int beta) : ch_(channels), g_(gamma), b_(beta) {}
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const override;
  Tensor<T> backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                     bool need_dx) const override;

 private:
  int ch_, g_, b_;
  static constexpr double kEps = 1e-5;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const override;
  Tensor<T> backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                     bool need_dx) const override;
};

// 2x2 max pooling, stride 2. Ties resolve to the first element in raster order.
template <typename T>
class MaxPool2 final : public Layer<T> {
 public:
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const override;
  Tensor<T> backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                     bool need_dx) const override;
};

// Nearest-neighbour 2x upsampling.
template <typename T>
class Upsample2 final : public Layer<T> {
 public:
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const override;
  Tensor<T> backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                     bool need_dx) const override;
};

// Global average pooling to (n, c, 1, 1).
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const override;
  Tensor<T> backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                     bool need_dx) const override;
};

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in, int out, int weight, int bias) : in_(in), out_(out), w_(weight), b_(bias) {}
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const override;
  Tensor<T> backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                     bool need_dx) const override;

 private:
  int in_, out_, w_, b_;
};

// y = x + body(x). Used both for residual blocks and for the generator's
// image-level skip connection.
template <typename T>
class Residual final : public Layer<T> {
 public:
  explicit Residual(std::vector<LayerPtr<T>> body) : body_(std::move(body)) {}
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const override;
  Tensor<T> backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                     bool need_dx) const override;

 private:
  std::vector<LayerPtr<T>> body_;
};

}  // namespace m3d
