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

#include <string>

#include "m3d/tensor.hpp"

namespace m3d {

// Decodes a PNG into a (1, 3, side, side) tensor in [0,1] using
// nearest-neighbour resampling. Throws IoError on unreadable input.
Tensor<float> read_png(const std::string& path, int side);

// Writes sample `index` of an RGB batch as an 8-bit PNG.
void write_png(const std::string& path, const Tensor<float>& images, int index);

}  // namespace m3d
