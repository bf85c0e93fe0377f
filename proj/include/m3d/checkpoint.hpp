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
#include <optional>
#include <string>

#include "m3d/network.hpp"

namespace m3d {

// On-disk layout (single file):
//
//   M3DCKPT 1
//   arch_id <id>
//   meta <key> <value>            (architecture knobs, zero or more)
//   info <key> <value>            (creation metadata, zero or more)
//   tensor <name> f32le <d0,d1,..> <byte offset> <byte length>
//   ...
//   payload <byte count>
//   <payload: contiguous little-endian float32 arrays>
//
// Tensor byte ranges are contiguous, non-overlapping and cover the payload.
struct Checkpoint {
  std::string arch_id;
  std::map<std::string, std::string> meta;
  std::map<std::string, std::string> info;
  ParamSet<float> tensors;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

void save_checkpoint(const Network<float>& net, const std::string& path,
                     const std::map<std::string, std::string>& info = {});

// Rebuilds the network recorded in the file. When `expected_arch` is given a
// different stored arch_id is an ArchMismatchError.
Network<float> load_checkpoint(const std::string& path, const std::optional<std::string>& expected_arch = std::nullopt);

}  // namespace m3d
