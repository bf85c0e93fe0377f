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
#include <string>
#include <utility>
#include <vector>

#include "m3d/adam.hpp"
#include "m3d/dataset.hpp"
#include "m3d/network.hpp"

namespace m3d {

enum class ModelRole { D1, D2, blackbox, frozen_substitute };

std::string to_string(ModelRole r);

struct PretrainOptions {
  int epochs = 5;
  int batch_size = 32;
  std::uint64_t seed = 0;
  AdamHyper adam{};
  // Random crop-pad, horizontal flip and brightness jitter on each batch.
  bool augment = false;
};

struct PretrainReport {
  std::string arch_id;
  int epochs = 0;
  double final_test_accuracy = 0;  // held-out split only
  std::string checkpoint_path;
};

// Cross-entropy training from a seeded random init. A non-finite loss throws
// DivergenceError naming the iteration.
std::pair<Network<float>, PretrainReport> pretrain_classifier(const std::string& arch_id, const LabeledDataset& train,
                                                              const LabeledDataset& test, const PretrainOptions& opt);

// D1 is an exact copy of the substitute. D2 is a copy whose final linear
// layer weights receive N(0, (jitter_scale * std(weights))^2) noise.
std::pair<Network<float>, Network<float>> init_pair(const Network<float>& substitute, double jitter_scale,
                                                    std::uint64_t seed);

// Logits, shape (batch, num_classes, 1, 1).
template <typename T>
Tensor<T> classify(const Network<T>& net, const Tensor<T>& x, Tape<T>* tape = nullptr);

// Argmax per row; ties go to the lowest class index.
template <typename T>
std::vector<int> predict_from_logits(const Tensor<T>& logits);

std::vector<int> predict(const Network<float>& net, const Tensor<float>& x);

// Predictions over a whole tensor, evaluated in chunks.
std::vector<int> predict_all(const Network<float>& net, const Tensor<float>& x, int chunk = 256);

double accuracy(const Network<float>& net, const LabeledDataset& ds);

int num_classes_of(const Network<float>& net);

// In-place augmentation of a batch (used only for the robust black box).
void augment_batch(Tensor<float>& images, std::mt19937_64& rng);

}  // namespace m3d
