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

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "m3d/models.hpp"
#include "m3d/network.hpp"

namespace m3d {

// Fixed low-pass operator W applied per channel with edge-replicating
// padding. Weights are non-negative and sum to one.
struct SmoothingKernel {
  int size = 3;
  std::vector<double> weights;  // size*size, row-major

  static SmoothingKernel gaussian(int size, double sigma);
  static SmoothingKernel identity();
  // "gaussian3" (sigma 1), "gaussian5:1.5", or "none".
  static SmoothingKernel parse(const std::string& desc);
};

template <typename T>
Tensor<T> smooth(const SmoothingKernel& k, const Tensor<T>& raw);

// Adjoint of smooth(): maps dL/d(smoothed) to dL/d(raw).
template <typename T>
Tensor<T> smooth_backward(const SmoothingKernel& k, const Tensor<T>& grad);

// Adversaries paired with their clean sources, produced under budget epsilon.
template <typename T>
struct AdversarialBatch {
  Tensor<T> z;
  std::shared_ptr<const Tensor<T>> source;
  double epsilon = 0;

  // max_i |z_i - x_i|
  double max_linf() const;
};

// z = clip_[0,1](min(x + eps, max(smoothed, x - eps))), elementwise.
// When `pass` is given it receives 1 for coordinates whose derivative
// dz/d(smoothed) is 1 (strictly inside the band and inside (0,1)), else 0.
template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& smoothed, double epsilon,
                  std::vector<std::uint8_t>* pass = nullptr);

// F(x): unconstrained image-shaped output of the backbone.
template <typename T>
Tensor<T> backbone_forward(const Network<T>& gen, const Tensor<T>& x, Tape<T>* tape = nullptr);

// Full G = C o W o F. Pure function of its inputs.
template <typename T>
AdversarialBatch<T> generate(const Network<T>& gen, const SmoothingKernel& kernel, const Tensor<T>& x,
                             double epsilon);

// Recorded state of a differentiable generate() call.
template <typename T>
struct GenerateTrace {
  Tape<T> tape;
  std::vector<std::uint8_t> pass;
};

template <typename T>
Tensor<T> generate_recorded(const Network<T>& gen, const SmoothingKernel& kernel, const Tensor<T>& x,
                            double epsilon, GenerateTrace<T>& trace);

// Back-propagates dL/dz into generator parameter gradients.
template <typename T>
void generate_backward(const Network<T>& gen, const SmoothingKernel& kernel, GenerateTrace<T>& trace,
                       const Tensor<T>& grad_z, ParamSet<T>& grads);

// Fresh randomly initialized generator.
Network<float> make_generator(const GeneratorArch& arch, std::mt19937_64& rng);

}  // namespace m3d
