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

#include "m3d/evaluator.hpp"

namespace m3d {

// Empirical 0-1 rates over one adversary set. f_t is the constant labelling
// function that maps every input to the target class.
struct BoundReport {
  int target_class = 0;
  int n = 0;
  double err_blackbox_to_target = 0;   // mean 1[h_b(z) != t]
  double err_substitute_to_target = 0; // mean 1[h_s(z) != t]
  double disagreement_sb = 0;          // mean 1[h_s(z) != h_b(z)]
  int violations = 0;                  // samples where the pointwise union bound fails
  // Descriptive only; no inequality is claimed for cross-entropy.
  double ce_blackbox_to_target = 0;
  double ce_substitute_to_target = 0;

  double slack() const { return err_substitute_to_target + disagreement_sb - err_blackbox_to_target; }
  bool holds() const { return violations == 0 && slack() >= 0; }
};

BoundReport bound_terms_from_predictions(const std::vector<int>& pred_s, const std::vector<int>& pred_b, int target);

BoundReport measure_bound_terms(const LoadedGenerator& gen, const Network<float>& h_s, const Network<float>& h_b,
                                const LabeledDataset& test, const AttackProtocol& protocol, double epsilon);

struct SampledModel {
  std::string name;
  std::string arch_id;
  std::uint64_t seed = 0;
  double clean_accuracy = 0;
  bool accepted = false;
  Network<float> net;
};

// Classifiers standing in for the hypothesis set: the substitute
// architecture retrained with fresh seeds, then one black-box architecture
// model. Models below `floor_fraction * reference_accuracy` are discarded and
// logged.
struct HypothesisOptions {
  int n_models = 3;
  std::vector<std::uint64_t> seeds;  // defaults to 101, 102, ...
  std::string substitute_arch = "cnn_a";
  std::string blackbox_arch = "cnn_b";
  double reference_accuracy = 0;
  double floor_fraction = 0.85;
  PretrainOptions pretrain;
};

std::vector<SampledModel> sample_hypotheses(const DatasetSplits& splits, const HypothesisOptions& opt);

struct PairDisagreement {
  std::string pair_id;  // "<name_i>|<name_j>"
  double disagreement = 0;
};

struct DiscrepancySamples {
  std::vector<PairDisagreement> pairs;
  double max_disagreement = 0;  // lower estimate of the supremum over the hypothesis set
  int models_used = 0;
};

// Pairwise 0-1 disagreement of the accepted models on `inputs`.
DiscrepancySamples pairwise_disagreement(const std::vector<SampledModel>& models, const Tensor<float>& inputs);

DiscrepancySamples sample_hypothesis_discrepancy(const LoadedGenerator& gen, const DatasetSplits& splits,
                                                 const AttackProtocol& protocol, double epsilon,
                                                 const HypothesisOptions& opt);

// term,value,estimator rows. The minor term is listed as not computed.
void write_bound_report_csv(const std::string& path, const BoundReport& report,
                            const DiscrepancySamples* samples = nullptr);

}  // namespace m3d
