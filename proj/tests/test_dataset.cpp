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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "m3d/config.hpp"
#include "m3d/dataset.hpp"
#include "m3d/errors.hpp"

using namespace m3d;
namespace fs = std::filesystem;

TEST_CASE("synthetic dataset cardinality and class balance") {
  const LabeledDataset ds = make_synthetic_dataset(10, 60, 32, 1);
  REQUIRE(ds.size() == 600);
  CHECK(ds.images.n() == 600);
  CHECK(ds.images.c() == 3);
  CHECK(ds.side() == 32);
  for (int c = 0; c < 10; ++c) CHECK(ds.indices_of_class(c).size() == 60);
  CHECK(*std::min_element(ds.images.data.begin(), ds.images.data.end()) >= 0.0f);
  CHECK(*std::max_element(ds.images.data.begin(), ds.images.data.end()) <= 1.0f);
  const DatasetSplits s = split_per_class(ds, 10);
  CHECK(s.train.size() == 500);
  CHECK(s.test.size() == 100);
  CHECK(s.test.split == Split::test);
}

TEST_CASE("synthetic dataset is a pure function of its seed") {
  const LabeledDataset a = make_synthetic_dataset(4, 5, 16, 7), b = make_synthetic_dataset(4, 5, 16, 7);
  const LabeledDataset c = make_synthetic_dataset(4, 5, 16, 8);
  CHECK(a.images.data == b.images.data);
  CHECK(a.labels == b.labels);
  CHECK(a.images.data != c.images.data);
}

TEST_CASE("dataset shape errors") {
  CHECK_THROWS_AS(make_synthetic_dataset(1, 10, 32, 0), ValidationError);
  CHECK_THROWS_AS(make_synthetic_dataset(3, 0, 32, 0), ValidationError);
  CHECK_THROWS_AS(make_synthetic_dataset(3, 10, 8, 0), ValidationError);
}

TEST_CASE("train and test splits never share a sample") {
  const DatasetSplits s = split_per_class(make_synthetic_dataset(5, 30, 16, 2), 6);
  std::set<std::int64_t> train(s.train.sample_ids.begin(), s.train.sample_ids.end());
  for (auto id : s.test.sample_ids) CHECK(train.count(id) == 0);
  CHECK(train.size() + s.test.size() == 150u);
}

TEST_CASE("attack protocol excludes the target from sources") {
  const DatasetSplits s = split_per_class(make_synthetic_dataset(10, 60, 16, 3), 50);
  const AttackProtocol p = build_protocol(s.test, ProtocolKind::all_source, 3);
  CHECK(p.source_indices.size() == 450);
  CHECK(p.target_reference_indices.size() == 50);
  for (int i : p.source_indices) CHECK(s.test.labels[i] != 3);

  const AttackProtocol sub = build_protocol(s.test, ProtocolKind::subset_source, 3, std::vector<int>{1, 3, 5});
  CHECK(sub.source_indices.size() == 100);
  CHECK_THROWS_AS(build_protocol(s.test, ProtocolKind::subset_source, 3, std::vector<int>{1, 5}), ValidationError);
  CHECK_THROWS_AS(build_protocol(s.test, ProtocolKind::all_source, 10), ValidationError);

  // A target class with no test samples is refused.
  LabeledDataset thin = s.test;
  for (int& y : thin.labels)
    if (y == 4) y = 5;
  CHECK_THROWS_WITH_AS(build_protocol(thin, ProtocolKind::all_source, 4), doctest::Contains("no test samples"),
                       ValidationError);
}

TEST_CASE("batch stream sizes and determinism") {
  const LabeledDataset ds = make_synthetic_dataset(2, 5, 16, 4);
  BatchStream s(ds, 4, 11);
  CHECK(s.batches_per_epoch() == 3);
  CHECK(s.indices(0).size() == 4);
  CHECK(s.indices(1).size() == 4);
  CHECK(s.indices(2).size() == 2);
  std::vector<int> epoch;
  for (int k = 0; k < 3; ++k)
    for (int i : s.indices(k)) epoch.push_back(i);
  std::sort(epoch.begin(), epoch.end());
  CHECK(epoch == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});

  // Batch k depends only on (seed, k), not on the access order.
  BatchStream fresh(ds, 4, 11);
  const auto late = fresh.indices(7);
  CHECK(late == s.indices(7));
  CHECK(fresh.batch(4).labels.size() == 4);
  CHECK_THROWS_AS(BatchStream(ds, 0, 1), ValidationError);
}

TEST_CASE("folder dataset export and reload") {
  const fs::path root = fs::temp_directory_path() / "m3d_test_folder";
  fs::remove_all(root);
  LabeledDataset ds = make_synthetic_dataset(2, 3, 16, 5);
  ds.class_names = {"dog", "cat"};
  export_folder_dataset(ds, root.string());
  std::ofstream(root / "cat" / "zz_empty.png").close();

  const LabeledDataset back = load_folder_dataset(root.string(), 16);
  CHECK(back.class_names == std::vector<std::string>{"cat", "dog"});
  CHECK(back.size() == 6);
  CHECK(back.skipped_files == 1);
  CHECK(back.indices_of_class(0).size() == 3);
  // Eight-bit quantisation is the only loss.
  const std::size_t n = ds.images.sample_size();
  double worst = 0;
  for (int i = 0; i < 3; ++i) {
    const int src = ds.indices_of_class(1)[i];
    for (std::size_t j = 0; j < n; ++j)
      worst = std::max(worst, double(std::abs(back.images.data[i * n + j] - ds.images.data[src * n + j])));
  }
  CHECK(worst <= 0.5 / 255 + 1e-6);
  fs::remove_all(root);
  CHECK_THROWS_AS(load_folder_dataset(root.string(), 16), IoError);
}

TEST_CASE("load_splits dispatches on dataset_id") {
  AttackConfig cfg;
  cfg.target_class = 0;
  cfg.epsilon = 0.1;
  cfg.num_classes = 3;
  cfg.train_per_class = 4;
  cfg.test_per_class = 2;
  cfg.image_side = 16;
  const DatasetSplits s = load_splits(cfg);
  CHECK(s.train.size() == 12);
  CHECK(s.test.size() == 6);
  cfg.dataset_id = "imagenet";
  CHECK_THROWS_AS(load_splits(cfg), ConfigError);
}
