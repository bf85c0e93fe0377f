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
#include <string>
#include <vector>

#include "m3d/adam.hpp"
#include "m3d/config.hpp"
#include "m3d/dataset.hpp"
#include "m3d/generator.hpp"
#include "m3d/objectives.hpp"
#include "m3d/run.hpp"

namespace m3d {

// Everything needed to continue an attack-training run bit-identically.
// In mode A only d1 is populated (the frozen substitute).
struct TrainState {
  std::int64_t iteration = 0;
  Network<float> generator;
  Adam<float> generator_opt;
  Network<float> d1, d2;
  Adam<float> d1_opt, d2_opt;
  std::vector<LossBundle> loss_history;
  std::uint64_t shuffle_seed = 0;

  bool has_d2() const { return !d2.arch_id.empty(); }
};

struct TrainOptions {
  // Compare parameter checksums around each phase and throw if the frozen
  // side changed.
  bool check_isolation = false;
  // Assert the budget guarantee on one adversarial batch every N rounds.
  int budget_check_every = 100;
  // Print a progress line every N rounds (0 = silent).
  int log_every = 0;
};

// L_d measured with the updated generator before and after the
// discriminator update of the same round.
struct StepProbe {
  double ld_after_g_phase = 0;
  double ld_after_d_phase = 0;
};

// Seeds the generator and the discriminator pair from `substitute`.
TrainState init_train_state(const AttackConfig& cfg, const Network<float>& substitute);

// One alternation round: generator update on L_a + L_d with D1, D2 frozen,
// then discriminator update(s) on L_c - L_d with G frozen, recomputing the
// adversaries with the updated generator unless `reuse_adversaries` is set.
// Mode B drops L_d from both objectives (still logged); mode A trains G
// against the single frozen substitute and has no discriminator phase.
LossBundle train_step(TrainState& state, const ImageBatch& clean, const AttackConfig& cfg,
                      const SmoothingKernel& kernel, const TrainOptions& opt = {}, StepProbe* probe = nullptr);

struct TrainResult {
  TrainState state;
  RunManifest manifest;
};

// Runs cfg.train_iterations rounds into `run_dir`, writing gen/d1/d2
// checkpoints every cfg.checkpoint_every rounds and at the end
// (`*_final.ckpt`), a resumable `state_<iter>.ckpt`, `losses.csv`,
// `config.cfg` and `manifest.json`.
TrainResult train(const AttackConfig& cfg, const LabeledDataset& train_split, const Network<float>& substitute,
                  const std::string& run_dir, const TrainOptions& opt = {});

TrainResult train(const AttackConfig& cfg, const LabeledDataset& train_split, const std::string& substitute_ckpt,
                  const std::string& run_dir, const TrainOptions& opt = {});

// Continues a run from its `state_<from_iteration>.ckpt`; losses.csv is cut
// back to that iteration and extended.
TrainResult resume_training(const AttackConfig& cfg, const LabeledDataset& train_split, const std::string& run_dir,
                            std::int64_t from_iteration, const TrainOptions& opt = {});

void save_train_state(const TrainState& state, const std::string& path);
TrainState load_train_state(const std::string& path, const AttackConfig& cfg);

}  // namespace m3d
