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

#include <map>
#include <string>
#include <vector>

#include "m3d/layers.hpp"

namespace m3d {

// A feed-forward stack of layers plus its parameters. The architecture is
// fully described by (arch_id, meta), which is what checkpoints persist; see
// build_network().
template <typename T>
struct Network {
  std::string arch_id;
  std::map<std::string, std::string> meta;
  ParamSet<T> params;
  std::vector<LayerPtr<T>> layers;

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape = nullptr) const {
    Tensor<T> h = x;
    for (const auto& l : layers) h = l->forward(params, h, tape);
    return h;
  }

  // Runs the recorded tape backwards. Parameter gradients accumulate into
  // `grads` (shaped like `params`); pass null for a frozen network.
  Tensor<T> backward(const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads, bool need_input_grad) const {
    Tensor<T> g = gy;
    for (std::size_t i = layers.size(); i-- > 0;)
      g = layers[i]->backward(params, g, tape, grads, i > 0 || need_input_grad);
    return g;
  }
};

// Constructs an architecture with zero-valued parameters. Known families are
// the classifiers `cnn_a`, `cnn_b` and the generator `resgen`.
template <typename T>
Network<T> build_network(const std::string& arch_id, const std::map<std::string, std::string>& meta);

// Same architecture, different scalar type.
template <typename U, typename T>
Network<U> recast(const Network<T>& net) {
  Network<U> out = build_network<U>(net.arch_id, net.meta);
  out.params = net.params.template cast<U>();
  return out;
}

}  // namespace m3d
