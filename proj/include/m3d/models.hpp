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
#include <random>
#include <string>
#include <vector>

#include "m3d/network.hpp"

namespace m3d {

// Registered architecture identifiers.
inline constexpr const char* kArchCnnA = "cnn_a";
inline constexpr const char* kArchCnnB = "cnn_b";
inline constexpr const char* kArchResGen = "resgen";

bool is_classifier_arch(const std::string& arch_id);
std::vector<std::string> classifier_archs();

// Generator knobs; defaults give the desk-scale backbone (two stride-2
// blocks 3->w->2w, residual blocks at 2w, two upsampling blocks back to 3).
struct GeneratorArch {
  int base_width = 32;
  int res_blocks = 4;
  bool input_skip = true;
  int side = 32;
  int channels = 3;

  std::map<std::string, std::string> to_meta() const;
  static GeneratorArch from_meta(const std::map<std::string, std::string>& meta);
};

std::map<std::string, std::string> classifier_meta(int num_classes, int channels = 3);

// Fills parameters: He-normal conv/linear weights, zero biases, unit norm
// gains. The generator's output head is scaled down so a fresh generator
// starts inside the perturbation band.
template <typename T>
void init_network(Network<T>& net, std::mt19937_64& rng);

int meta_int(const std::map<std::string, std::string>& meta, const std::string& key, int fallback);

}  // namespace m3d
