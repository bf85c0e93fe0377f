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

#include "m3d/generator.hpp"

#include <algorithm>
#include <cmath>

namespace m3d {

SmoothingKernel SmoothingKernel::gaussian(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw ConfigError("smoothing kernel size must be odd and positive");
  if (!(sigma > 0)) throw ConfigError("smoothing kernel sigma must be positive");
  SmoothingKernel k;
  k.size = size;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  const int r = size / 2;
  double sum = 0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2 * sigma * sigma));
      k.weights[(y + r) * size + (x + r)] = v;
      sum += v;
    }
  for (auto& v : k.weights) v /= sum;
  return k;
}

SmoothingKernel SmoothingKernel::identity() { return {1, {1.0}}; }

SmoothingKernel SmoothingKernel::parse(const std::string& desc) {
  if (desc == "none") return identity();
  if (desc.rfind("gaussian", 0) != 0) throw ConfigError("unknown smoothing_kernel: " + desc);
  std::string rest = desc.substr(8);
  double sigma = 1.0;
  if (auto colon = rest.find(':'); colon != std::string::npos) {
    sigma = std::stod(rest.substr(colon + 1));
    rest = rest.substr(0, colon);
  }
  const int size = rest.empty() ? 3 : std::stoi(rest);
  return gaussian(size, sigma);
}

template <typename T>
Tensor<T> smooth(const SmoothingKernel& k, const Tensor<T>& raw) {
  Tensor<T> out(raw.n(), raw.c(), raw.h(), raw.w());
  const int r = k.size / 2, h = raw.h(), w = raw.w();
  for (int i = 0; i < raw.n(); ++i)
    for (int c = 0; c < raw.c(); ++c) {
      const T* src = raw.data.data() + (static_cast<std::size_t>(i) * raw.c() + c) * h * w;
      T* dst = out.data.data() + (static_cast<std::size_t>(i) * raw.c() + c) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          T acc = 0;
          for (int dy = -r; dy <= r; ++dy) {
            const int sy = std::clamp(y + dy, 0, h - 1);
            for (int dx = -r; dx <= r; ++dx) {
              const int sx = std::clamp(x + dx, 0, w - 1);
              acc += static_cast<T>(k.weights[(dy + r) * k.size + dx + r]) * src[sy * w + sx];
            }
          }
          dst[y * w + x] = acc;
        }
    }
  return out;
}

template <typename T>
Tensor<T> smooth_backward(const SmoothingKernel& k, const Tensor<T>& grad) {
  Tensor<T> out(grad.n(), grad.c(), grad.h(), grad.w());
  const int r = k.size / 2, h = grad.h(), w = grad.w();
  for (int i = 0; i < grad.n(); ++i)
    for (int c = 0; c < grad.c(); ++c) {
      const T* g = grad.data.data() + (static_cast<std::size_t>(i) * grad.c() + c) * h * w;
      T* dst = out.data.data() + (static_cast<std::size_t>(i) * grad.c() + c) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const T gv = g[y * w + x];
          for (int dy = -r; dy <= r; ++dy) {
            const int sy = std::clamp(y + dy, 0, h - 1);
            for (int dx = -r; dx <= r; ++dx) {
              const int sx = std::clamp(x + dx, 0, w - 1);
              dst[sy * w + sx] += static_cast<T>(k.weights[(dy + r) * k.size + dx + r]) * gv;
            }
          }
        }
    }
  return out;
}

template <typename T>
double AdversarialBatch<T>::max_linf() const {
  double m = 0;
  for (std::size_t i = 0; i < z.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(z.data[i]) - static_cast<double>(source->data[i])));
  return m;
}

template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& smoothed, double epsilon, std::vector<std::uint8_t>* pass) {
  if (epsilon < 0) throw ValidationError("epsilon must be >= 0, got " + std::to_string(epsilon));
  require_same_shape(x, smoothed, "project");
  const T eps = static_cast<T>(epsilon);
  Tensor<T> z(x.n(), x.c(), x.h(), x.w());
  if (pass) pass->assign(x.size(), 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T lo = x.data[i] - eps, hi = x.data[i] + eps, s = smoothed.data[i];
    const T v = std::min(hi, std::max(s, lo));
    z.data[i] = std::clamp(v, T(0), T(1));
    if (pass) (*pass)[i] = (s > lo && s < hi && v > T(0) && v < T(1)) ? 1 : 0;
  }
  return z;
}

template <typename T>
Tensor<T> backbone_forward(const Network<T>& gen, const Tensor<T>& x, Tape<T>* tape) {
  const int side = meta_int(gen.meta, "side", x.h());
  const int ch = meta_int(gen.meta, "channels", x.c());
  if (x.h() != side || x.w() != side || x.c() != ch)
    throw ShapeError("generator configured for (" + std::to_string(ch) + "," + std::to_string(side) + "," +
                     std::to_string(side) + ") input, got " + shape_str(x.shape));
  return gen.forward(x, tape);
}

template <typename T>
AdversarialBatch<T> generate(const Network<T>& gen, const SmoothingKernel& kernel, const Tensor<T>& x,
                             double epsilon) {
  if (epsilon < 0) throw ValidationError("epsilon must be >= 0");
  AdversarialBatch<T> out;
  out.source = std::make_shared<const Tensor<T>>(x);
  out.epsilon = epsilon;
  out.z = project(x, smooth(kernel, backbone_forward(gen, x)), epsilon);
  return out;
}

template <typename T>
Tensor<T> generate_recorded(const Network<T>& gen, const SmoothingKernel& kernel, const Tensor<T>& x,
                            double epsilon, GenerateTrace<T>& trace) {
  return project(x, smooth(kernel, backbone_forward(gen, x, &trace.tape)), epsilon, &trace.pass);
}

template <typename T>
void generate_backward(const Network<T>& gen, const SmoothingKernel& kernel, GenerateTrace<T>& trace,
                       const Tensor<T>& grad_z, ParamSet<T>& grads) {
  Tensor<T> g = grad_z;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!trace.pass[i]) g.data[i] = T(0);
  gen.backward(smooth_backward(kernel, g), trace.tape, &grads, false);
}

Network<float> make_generator(const GeneratorArch& arch, std::mt19937_64& rng) {
  Network<float> g = build_network<float>(kArchResGen, arch.to_meta());
  init_network(g, rng);
  return g;
}

#define M3D_INSTANTIATE(T)                                                                                        \
  template Tensor<T> smooth<T>(const SmoothingKernel&, const Tensor<T>&);                                         \
  template Tensor<T> smooth_backward<T>(const SmoothingKernel&, const Tensor<T>&);                                \
  template struct AdversarialBatch<T>;                                                                            \
  template Tensor<T> project<T>(const Tensor<T>&, const Tensor<T>&, double, std::vector<std::uint8_t>*);          \
  template Tensor<T> backbone_forward<T>(const Network<T>&, const Tensor<T>&, Tape<T>*);                          \
  template AdversarialBatch<T> generate<T>(const Network<T>&, const SmoothingKernel&, const Tensor<T>&, double);  \
  template Tensor<T> generate_recorded<T>(const Network<T>&, const SmoothingKernel&, const Tensor<T>&, double,    \
                                          GenerateTrace<T>&);                                                     \
  template void generate_backward<T>(const Network<T>&, const SmoothingKernel&, GenerateTrace<T>&,                \
                                     const Tensor<T>&, ParamSet<T>&);

M3D_INSTANTIATE(float)
M3D_INSTANTIATE(double)
#undef M3D_INSTANTIATE

}  // namespace m3d
