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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "m3d/adam.hpp"
#include "m3d/errors.hpp"
#include "m3d/models.hpp"
#include "m3d/objectives.hpp"

namespace m3d {

// Training regime. A: one frozen substitute. B: two trainable substitutes,
// no discrepancy term. C: full min-max discrepancy game.
enum class Mode { A_single_fixed, B_ensemble, C_m3d };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

// Complete experiment description. Immutable after load; every field has a
// config-file key of the same name.
struct AttackConfig {
  // Required.
  int target_class = -1;
  double epsilon = 0;  // [0,1] pixel scale

  Mode mode = Mode::C_m3d;
  double generator_lr = 2e-4;
  double discriminator_lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 32;
  int train_iterations = 5000;
  std::uint64_t seed = 0;
  std::string dataset_id = "synthetic";
  std::string substitute_arch = kArchCnnA;
  std::string blackbox_arch = kArchCnnB;

  // Dataset shape (synthetic) or decode size (folder).
  int num_classes = 10;
  int image_side = 32;
  int train_per_class = 500;
  int test_per_class = 50;
  std::uint64_t dataset_seed = 1;

  // Generator and game knobs.
  std::string smoothing_kernel = "gaussian3";
  int gen_base_width = 32;
  int gen_res_blocks = 4;
  bool gen_input_skip = true;
  double jitter_scale = 0.1;
  DiscrepancySpace discrepancy_space = DiscrepancySpace::probability;
  int d_steps_per_g_step = 1;
  bool reuse_adversaries = false;
  int checkpoint_every = 1000;

  // Classifier pretraining.
  int pretrain_epochs = 5;
  double pretrain_lr = 1e-3;

  AdamHyper generator_adam() const { return {generator_lr, adam_beta1, adam_beta2, 1e-8}; }
  AdamHyper discriminator_adam() const { return {discriminator_lr, adam_beta1, adam_beta2, 1e-8}; }
  GeneratorArch generator_arch() const;

  bool operator==(const AttackConfig&) const = default;
};

// Ordered key/value pairs as written in a config file.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

// Parses the flat `key = value` format (`#` starts a comment). Duplicate keys
// are an error.
ConfigEntries parse_config_text(const std::string& text);

// Builds and validates a config from entries plus overrides applied after
// them (an override may replace a file key).
AttackConfig config_from_entries(const ConfigEntries& entries, const ConfigEntries& overrides = {});

AttackConfig load_config(const std::string& path, const ConfigEntries& overrides = {});

// Throws ValidationError naming the field and its bounds.
void validate(const AttackConfig& cfg);

// Canonical text form; parse_config_text + config_from_entries of the result
// yields an equal config.
std::string serialize(const AttackConfig& cfg);

// Stable hex digest of serialize(cfg).
std::string config_hash(const AttackConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace m3d
