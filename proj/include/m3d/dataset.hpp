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
#include <optional>
#include <string>
#include <vector>

#include "m3d/tensor.hpp"

namespace m3d {

struct AttackConfig;

enum class Split { train, test };

// Images in [0,1], NCHW, with integer labels in [0, num_classes).
struct LabeledDataset {
  Tensor<float> images;
  std::vector<int> labels;
  std::vector<std::int64_t> sample_ids;  // identity across splits
  std::vector<std::string> class_names;
  int num_classes = 0;
  Split split = Split::train;
  int skipped_files = 0;

  int size() const { return static_cast<int>(labels.size()); }
  int side() const { return images.h(); }
  std::vector<int> indices_of_class(int c) const;
};

struct DatasetSplits {
  LabeledDataset train;
  LabeledDataset test;
};

struct ImageBatch {
  Tensor<float> images;
  std::vector<int> labels;
};

// Procedurally rendered shapes on textured backgrounds. Class c fixes the
// shape (c mod 5) and the hue family (c div 5); position, size, exact colour
// and background vary per sample. Deterministic in `seed`.
LabeledDataset make_synthetic_dataset(int num_classes, int per_class, int side, std::uint64_t seed);

// First `test_per_class` samples of each class form the test split.
DatasetSplits split_per_class(const LabeledDataset& ds, int test_per_class);

// root/<class_name>/<image>.png; classes sorted lexicographically. Unreadable
// files are skipped and counted in `skipped_files`.
LabeledDataset load_folder_dataset(const std::string& root, int side);

void export_folder_dataset(const LabeledDataset& ds, const std::string& root);

// Train/test splits described by a config (`synthetic` or `folder:<root>`).
DatasetSplits load_splits(const AttackConfig& cfg);

ImageBatch make_batch(const LabeledDataset& ds, const std::vector<int>& rows);

enum class ProtocolKind { subset_source, all_source };

std::string to_string(ProtocolKind k);
ProtocolKind parse_protocol_kind(const std::string& s);

// Which test samples are attacked for one target class.
struct AttackProtocol {
  ProtocolKind kind = ProtocolKind::all_source;
  int target_class = 0;
  std::vector<int> subset_classes;            // empty for all_source
  std::vector<int> source_indices;            // label != target_class
  std::vector<int> target_reference_indices;  // label == target_class, evaluation only
};

// subset_source defaults to classes 0..9 when no subset is given.
AttackProtocol build_protocol(const LabeledDataset& test, ProtocolKind kind, int target_class,
                              std::optional<std::vector<int>> subset_classes = std::nullopt);

// Epoch-wise shuffled mini-batches; the final short batch of an epoch is
// kept. Batch k is a pure function of (seed, k), so a stream can be resumed
// at any iteration.
class BatchStream {
 public:
  BatchStream(const LabeledDataset& ds, int batch_size, std::uint64_t shuffle_seed);

  int batches_per_epoch() const { return per_epoch_; }
  std::vector<int> indices(std::int64_t k);
  ImageBatch batch(std::int64_t k) { return make_batch(*ds_, indices(k)); }

 private:
  const LabeledDataset* ds_;
  int batch_size_;
  std::uint64_t seed_;
  int per_epoch_;
  std::int64_t cached_epoch_ = -1;
  std::vector<int> perm_;
};

}  // namespace m3d
