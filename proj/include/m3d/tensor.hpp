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

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "m3d/errors.hpp"

namespace m3d {

// Dense NCHW array. Logit batches use shape (batch, classes, 1, 1).
template <typename T>
struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : shape{n, c, h, w}, data(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(shape[1]) * shape[2] * shape[3]; }

  T& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * shape[1] + ch) * shape[2] + y) * shape[3] + x];
  }
  T at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * shape[1] + ch) * shape[2] + y) * shape[3] + x];
  }

  std::span<T> sample(int i) { return {data.data() + i * sample_size(), sample_size()}; }
  std::span<const T> sample(int i) const { return {data.data() + i * sample_size(), sample_size()}; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

inline std::string shape_str(const std::array<int, 4>& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," +
         std::to_string(s[3]) + ")";
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// Gathers the listed samples of `src` into a new batch.
template <typename T>
Tensor<T> gather(const Tensor<T>& src, std::span<const int> rows) {
  Tensor<T> out(static_cast<int>(rows.size()), src.c(), src.h(), src.w());
  const std::size_t s = src.sample_size();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(src.data.begin() + rows[i] * s, s, out.data.begin() + i * s);
  return out;
}

}  // namespace m3d
