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
#include <cstring>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "m3d/errors.hpp"

namespace m3d {

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;
};

// Ordered, named parameter collection. Names are unique and shapes fixed once
// added; layers refer to entries by index.
template <typename T>
class ParamSet {
 public:
  int add(std::string name, std::vector<int> shape) {
    if (find(name)) throw Error("duplicate parameter name: " + name);
    std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                    [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    entries_.push_back({std::move(name), std::move(shape), std::vector<T>(n, T(0))});
    return static_cast<int>(entries_.size()) - 1;
  }

  std::size_t size() const { return entries_.size(); }
  Param<T>& operator[](std::size_t i) { return entries_[i]; }
  const Param<T>& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.values.size();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet out = *this;
    out.zero();
    return out;
  }

  void zero() {
    for (auto& e : entries_) std::fill(e.values.begin(), e.values.end(), T(0));
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) {
      int idx = out.add(e.name, e.shape);
      out[idx].values.assign(e.values.begin(), e.values.end());
    }
    return out;
  }

  // FNV-1a over names and the float32 image of every value.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ull;
      }
    };
    for (const auto& e : entries_) {
      mix(e.name.data(), e.name.size());
      for (T v : e.values) {
        float f = static_cast<float>(v);
        mix(&f, sizeof f);
      }
    }
    return h;
  }

 private:
  std::vector<Param<T>> entries_;
};

}  // namespace m3d
