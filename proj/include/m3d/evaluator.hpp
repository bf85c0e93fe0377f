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
#include <span>
#include <string>
#include <vector>

#include "m3d/classifier.hpp"
#include "m3d/config.hpp"
#include "m3d/dataset.hpp"
#include "m3d/generator.hpp"

namespace m3d {

enum class VictimRole { whitebox_substitute, blackbox, robust_blackbox, topk_api };

std::string to_string(VictimRole r);

struct Victim {
  std::string name;
  VictimRole role = VictimRole::blackbox;
  Network<float> net;
};

// A trained generator together with the smoothing kernel it was trained with.
struct LoadedGenerator {
  Network<float> net;
  SmoothingKernel kernel;
  int target_class = -1;  // -1 when the checkpoint does not record it
  std::string mode;
};

LoadedGenerator load_generator(const std::string& path, const std::string& fallback_kernel = "gaussian3");

struct ClassCounts {
  int n = 0;
  int to_target = 0;
  int errors = 0;
};

struct MetricsReport {
  ProtocolKind protocol = ProtocolKind::all_source;
  int target_class = 0;
  std::string victim;
  VictimRole role = VictimRole::blackbox;
  double target_accuracy = 0;
  double classification_error_rate = 0;
  int n_evaluated = 0;
  std::map<int, ClassCounts> per_class;  // keyed by original label
  int degenerate = 0;                    // zero perturbations (perturbation-only probe)
  std::string note;
};

// Counting core: `predictions[i]` for a source with original label
// `labels[i]`. Sources labelled `target` are rejected.
MetricsReport score_predictions(const std::vector<int>& predictions, const std::vector<int>& labels, int target);

// Adversaries for every protocol source, in source order.
Tensor<float> protocol_adversaries(const LoadedGenerator& gen, const LabeledDataset& test,
                                   const AttackProtocol& protocol, double epsilon);

MetricsReport evaluate_transfer(const LoadedGenerator& gen, const Victim& victim, const LabeledDataset& test,
                                const AttackProtocol& protocol, double epsilon);

// Feeds only the per-sample min-max rescaled perturbation z - x to the
// victim. An all-zero perturbation counts as a miss.
MetricsReport evaluate_perturbation_only(const LoadedGenerator& gen, const Victim& victim, const LabeledDataset& test,
                                         const AttackProtocol& protocol, double epsilon);

// Per-sample affine rescaling to [0,1]; constant samples become 0.5 and are
// flagged in `degenerate`.
Tensor<float> minmax_scale(const Tensor<float>& delta, std::vector<char>* degenerate = nullptr);

// Success when the target is among the k largest logits (ties broken toward
// the lower class index).
bool in_topk(std::span<const float> logits, int target, int k);

double evaluate_topk_api(const LoadedGenerator& gen, const Victim& victim, const LabeledDataset& test,
                         const AttackProtocol& protocol, double epsilon, int k);

struct AggregateReport {
  std::vector<MetricsReport> reports;                 // one per (target, victim)
  std::map<std::string, double> mean_target_accuracy;  // per victim, macro over targets
  std::map<std::string, double> mean_error_rate;
};

AggregateReport evaluate_all_targets(const std::map<int, std::string>& gen_ckpts, const std::vector<Victim>& victims,
                                     const LabeledDataset& test, ProtocolKind kind, double epsilon);

AggregateReport aggregate(std::vector<MetricsReport> reports);

void write_metrics_csv(const std::string& path, const std::vector<MetricsReport>& reports,
                       const std::string& mode = "");
void write_summary_csv(const std::string& path, const AggregateReport& agg, const std::string& mode = "");

// Transfer results per (mode, victim), averaged over targets and seeds.
struct AblationTable {
  std::vector<std::string> victims;
  std::map<Mode, std::map<std::string, double>> target_accuracy;
  std::map<Mode, std::map<std::string, double>> error_rate;
  std::vector<MetricsReport> reports;           // every individual evaluation
  std::vector<std::string> report_modes;        // parallel to `reports`
  std::vector<std::string> generator_paths;     // mode/target/seed final checkpoints
};

struct AblationOptions {
  std::vector<int> targets{0, 3, 7};
  std::vector<std::uint64_t> seeds{0, 1};
  std::vector<Mode> modes{Mode::A_single_fixed, Mode::B_ensemble, Mode::C_m3d};
  ProtocolKind protocol = ProtocolKind::all_source;
  int log_every = 0;
};

// Trains every (mode, target, seed) under `root` (`<mode>/t<target>_s<seed>`,
// reusing finished runs) and evaluates each generator against `victims`.
AblationTable run_ablation(const AttackConfig& base, const DatasetSplits& splits, const Network<float>& substitute,
                           const std::vector<Victim>& victims, const std::string& root, const AblationOptions& opt);

// Rows = victims, columns = modes.
void write_ablation_csv(const std::string& path, const AblationTable& table);

// metrics.csv layout with a trailing mode column, one row per evaluation.
void write_ablation_metrics_csv(const std::string& path, const AblationTable& table);

}  // namespace m3d
