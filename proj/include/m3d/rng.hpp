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
#include <random>
#include <string_view>

namespace m3d {

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from a base seed and a stream name.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

// Root of every random stream in a run: weight init, shuffling, jitter,
// augmentation and dataset rendering each draw from a named child stream so
// adding a consumer never perturbs another.
struct RngSet {
  std::uint64_t seed = 0;

  std::mt19937_64 stream(std::string_view name) const { return std::mt19937_64(derive_seed(seed, name)); }
  std::mt19937_64 stream(std::string_view name, std::uint64_t index) const {
    return std::mt19937_64(splitmix64(derive_seed(seed, name) ^ splitmix64(index + 0x9e37u)));
  }
};

inline RngSet seed_all(std::uint64_t seed) { return RngSet{seed}; }

}  // namespace m3d
