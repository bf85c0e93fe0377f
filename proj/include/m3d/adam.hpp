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

#include <cmath>
#include <cstdint>

#include "m3d/params.hpp"

namespace m3d {

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers mirror the parameter layout so
// they can be checkpointed with the same container.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet<T>& like, AdamHyper h) : hyper(h), m(like.zeros_like()), v(like.zeros_like()) {}

  void step(ParamSet<T>& params, const ParamSet<T>& grads) {
    ++t;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(hyper.beta1), b2 = static_cast<T>(hyper.beta2);
    const T step = static_cast<T>(hyper.lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(hyper.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k].values;
      const auto& g = grads[k].values;
      auto& mk = m[k].values;
      auto& vk = v[k].values;
      for (std::size_t i = 0; i < p.size(); ++i) {
        mk[i] = b1 * mk[i] + (T(1) - b1) * g[i];
        vk[i] = b2 * vk[i] + (T(1) - b2) * g[i] * g[i];
        p[i] -= step * mk[i] / (std::sqrt(vk[i] * inv_c2) + eps);
      }
    }
  }

  AdamHyper hyper;
  ParamSet<T> m, v;
  std::int64_t t = 0;
};

}  // namespace m3d
