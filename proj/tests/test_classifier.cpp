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

#include <cmath>
#include <random>

#include "fd_util.hpp"
#include "m3d/classifier.hpp"
#include "m3d/config.hpp"
#include "m3d/errors.hpp"
#include "m3d/models.hpp"
#include "m3d/objectives.hpp"

using namespace m3d;
using m3d::testing::central_diff;
using m3d::testing::random_tensor;
using m3d::testing::rel_err;

namespace {

Network<float> random_classifier(const std::string& arch, int k, std::uint64_t seed) {
  Network<float> net = build_network<float>(arch, classifier_meta(k));
  std::mt19937_64 rng(seed);
  init_network(net, rng);
  return net;
}

Tensor<float> logits_of(std::initializer_list<std::initializer_list<float>> rows) {
  const int k = static_cast<int>(rows.begin()->size());
  Tensor<float> t(static_cast<int>(rows.size()), k, 1, 1);
  std::size_t i = 0;
  for (const auto& r : rows)
    for (float v : r) t.data[i++] = v;
  return t;
}

Tensor<float> to_float(const Tensor<double>& t) {
  Tensor<float> out(t.n(), t.c(), t.h(), t.w());
  for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = static_cast<float>(t.data[i]);
  return out;
}

}  // namespace

TEST_CASE("predict takes the argmax with lowest-index ties") {
  CHECK(predict_from_logits(logits_of({{0.1f, 0.9f, 0.3f}})) == std::vector<int>{1});
  CHECK(predict_from_logits(logits_of({{0.5f, 0.5f, 0.1f}})) == std::vector<int>{0});
  CHECK(predict_from_logits(logits_of({{0, 0, 1}, {1, 0, 0}, {0, 1, 0}})) == std::vector<int>{2, 0, 1});
}

TEST_CASE("predict is invariant to a per-sample logit shift") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-3, 3);
  Tensor<float> l(16, 7, 1, 1);
  for (auto& v : l.data) v = u(rng);
  Tensor<float> shifted = l;
  for (int i = 0; i < 16; ++i) {
    const float c = u(rng) * 10;
    for (int j = 0; j < 7; ++j) shifted.data[i * 7 + j] += c;
  }
  CHECK(predict_from_logits(l) == predict_from_logits(shifted));
}

TEST_CASE("classifier forward shape and purity") {
  for (const char* arch : {kArchCnnA, kArchCnnB}) {
    const Network<float> net = random_classifier(arch, 10, 1);
    std::mt19937_64 rng(2);
    const Tensor<float> x = to_float(random_tensor({8, 3, 32, 32}, rng, 0, 1));
    const Tensor<float> a = classify(net, x), b = classify(net, x);
    CHECK(a.n() == 8);
    CHECK(a.c() == 10);
    CHECK(a.data == b.data);
    CHECK(num_classes_of(net) == 10);
    CHECK_THROWS_AS(classify(net, Tensor<float>(2, 1, 32, 32)), ShapeError);
  }
}

TEST_CASE("classifier gradients match central differences") {
  for (const char* arch : {kArchCnnA, kArchCnnB}) {
    Network<double> net = recast<double>(random_classifier(arch, 5, 3));
    std::mt19937_64 rng(4);
    Tensor<double> x = random_tensor({2, 3, 16, 16}, rng, 0, 1);
    const Tensor<double> w = random_tensor({2, 5, 1, 1}, rng);
    auto f = [&] {
      const Tensor<double> l = classify(net, x);
      double s = 0;
      for (std::size_t i = 0; i < l.size(); ++i) s += l.data[i] * w.data[i];
      return s;
    };
    Tape<double> tape;
    classify(net, x, &tape);
    ParamSet<double> g = net.params.zeros_like();
    const Tensor<double> gx = net.backward(w, tape, &g, true);

    int checked = 0, bad = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t i = rng() % x.size();
      if (rel_err(gx.data[i], central_diff(&x.data[i], f), 1e-5) >= 1e-3) ++bad;
      const std::size_t pi = rng() % net.params.size();
      auto& vals = net.params[static_cast<int>(pi)].values;
      const std::size_t j = rng() % vals.size();
      if (rel_err(g[static_cast<int>(pi)].values[j], central_diff(&vals[j], f), 1e-5) >= 1e-3) ++bad;
      checked += 2;
    }
    INFO(arch);
    CHECK(checked == 40);
    CHECK(bad == 0);
  }
}

TEST_CASE("init_pair copies and jitters only the head") {
  const Network<float> sub = random_classifier(kArchCnnA, 10, 7);
  const auto [a0, b0] = init_pair(sub, 0.0, 1);
  CHECK(a0.params.checksum() == sub.params.checksum());
  CHECK(b0.params.checksum() == sub.params.checksum());

  const auto [a1, b1] = init_pair(sub, 0.1, 1);
  CHECK(a1.params.checksum() == sub.params.checksum());
  CHECK(b1.params.checksum() != sub.params.checksum());
  int changed = 0;
  for (int i = 0; i < static_cast<int>(sub.params.size()); ++i)
    if (sub.params[i].values != b1.params[i].values) ++changed;
  CHECK(changed == 1);

  std::mt19937_64 rng(8);
  const Tensor<float> x = to_float(random_tensor({16, 3, 32, 32}, rng, 0, 1));
  CHECK(discrepancy_loss(classify(a1, x), classify(b1, x)).value > 0);
  CHECK(discrepancy_loss(classify(a0, x), classify(b0, x)).value == 0);
}

TEST_CASE("zero pretraining epochs stay at chance") {
  const DatasetSplits s = split_per_class(make_synthetic_dataset(10, 60, 32, 1), 50);
  PretrainOptions o;
  o.epochs = 0;
  o.seed = 3;
  const auto [net, rep] = pretrain_classifier(kArchCnnA, s.train, s.test, o);
  CHECK(rep.epochs == 0);
  CHECK(std::abs(rep.final_test_accuracy - 0.1) <= 0.05);
  CHECK(rep.final_test_accuracy == accuracy(net, s.test));
}

TEST_CASE("desk classifiers learn the synthetic task") {
  AttackConfig cfg;
  cfg.target_class = 0;
  cfg.epsilon = 0.1;
  const DatasetSplits s = load_splits(cfg);
  PretrainOptions o;
  o.epochs = 5;
  o.seed = 1;
  o.adam.lr = cfg.pretrain_lr;
  const auto [a, ra] = pretrain_classifier(kArchCnnA, s.train, s.test, o);
  o.seed = 2;
  const auto [b, rb] = pretrain_classifier(kArchCnnB, s.train, s.test, o);
  CHECK(ra.final_test_accuracy >= 0.90);
  CHECK(rb.final_test_accuracy >= 0.90);
  CHECK(ra.arch_id == kArchCnnA);
  CHECK(rb.arch_id == kArchCnnB);

  // Jitter breaks the symmetry without costing the copy its accuracy.
  const auto [d1, d2] = init_pair(a, 0.1, 7);
  CHECK(std::abs(accuracy(d2, s.test) - ra.final_test_accuracy) <= 0.05);
  CHECK(accuracy(d1, s.test) == ra.final_test_accuracy);
}
