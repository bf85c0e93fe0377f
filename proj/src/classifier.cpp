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

#include "m3d/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "m3d/models.hpp"
#include "m3d/objectives.hpp"
#include "m3d/rng.hpp"

namespace m3d {

std::string to_string(ModelRole r) {
  switch (r) {
    case ModelRole::D1: return "D1";
    case ModelRole::D2: return "D2";
    case ModelRole::blackbox: return "blackbox";
    case ModelRole::frozen_substitute: return "frozen_substitute";
  }
  return "?";
}

int num_classes_of(const Network<float>& net) { return meta_int(net.meta, "num_classes", 0); }

template <typename T>
Tensor<T> classify(const Network<T>& net, const Tensor<T>& x, Tape<T>* tape) {
  const int ch = meta_int(net.meta, "channels", 3);
  if (x.c() != ch || x.h() < 8 || x.w() < 8)
    throw ShapeError("classifier expects (batch, " + std::to_string(ch) + ", H, W) input, got " + shape_str(x.shape));
  return net.forward(x, tape);
}

template <typename T>
std::vector<int> predict_from_logits(const Tensor<T>& logits) {
  std::vector<int> out(logits.n());
  const int k = logits.c();
  for (int i = 0; i < logits.n(); ++i) {
    const T* row = logits.data.data() + static_cast<std::size_t>(i) * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);  // first maximum
  }
  return out;
}

std::vector<int> predict(const Network<float>& net, const Tensor<float>& x) {
  return predict_from_logits(classify(net, x));
}

std::vector<int> predict_all(const Network<float>& net, const Tensor<float>& x, int chunk) {
  std::vector<int> out;
  out.reserve(x.n());
  std::vector<int> rows;
  for (int start = 0; start < x.n(); start += chunk) {
    rows.clear();
    for (int i = start; i < std::min(x.n(), start + chunk); ++i) rows.push_back(i);
    const auto p = predict(net, gather(x, std::span<const int>(rows)));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double accuracy(const Network<float>& net, const LabeledDataset& ds) {
  if (ds.size() == 0) return 0;
  const auto p = predict_all(net, ds.images);
  int hit = 0;
  for (int i = 0; i < ds.size(); ++i) hit += p[i] == ds.labels[i];
  return static_cast<double>(hit) / ds.size();
}

void augment_batch(Tensor<float>& images, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> shift(-4, 4), coin(0, 1);
  std::uniform_real_distribution<float> bright(-0.15f, 0.15f);
  const int h = images.h(), w = images.w();
  Tensor<float> src = images;
  for (int i = 0; i < images.n(); ++i) {
    const int dy = shift(rng), dx = shift(rng);
    const bool flip = coin(rng);
    const float b = bright(rng);
    for (int c = 0; c < images.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sy = y + dy, sxr = x + dx;
          const int sx = flip ? w - 1 - sxr : sxr;
          float v = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? src.at(i, c, sy, sx) : 0.0f;
          images.at(i, c, y, x) = std::clamp(v + b, 0.0f, 1.0f);
        }
  }
}

std::pair<Network<float>, PretrainReport> pretrain_classifier(const std::string& arch_id, const LabeledDataset& train,
                                                              const LabeledDataset& test, const PretrainOptions& opt) {
  if (train.size() == 0) throw ValidationError("pretrain_classifier: empty training split");
  const RngSet rngs = seed_all(opt.seed);
  Network<float> net = build_network<float>(arch_id, classifier_meta(train.num_classes, train.images.c()));
  auto init_rng = rngs.stream("weight_init");
  init_network(net, init_rng);
  auto aug_rng = rngs.stream("augment");

  Adam<float> adam(net.params, opt.adam);
  BatchStream stream(train, opt.batch_size, derive_seed(opt.seed, "pretrain_shuffle"));
  const std::int64_t steps = static_cast<std::int64_t>(opt.epochs) * stream.batches_per_epoch();
  ParamSet<float> grads = net.params.zeros_like();
  for (std::int64_t k = 0; k < steps; ++k) {
    ImageBatch b = stream.batch(k);
    if (opt.augment) augment_batch(b.images, aug_rng);
    Tape<float> tape;
    const Tensor<float> logits = classify(net, b.images, &tape);
    const LossGrad<float> ce = cross_entropy(logits, std::span<const int>(b.labels));
    if (!std::isfinite(ce.value))
      throw DivergenceError("pretrain_classifier(" + arch_id + "): non-finite loss at iteration " + std::to_string(k));
    grads.zero();
    net.backward(ce.grad_a, tape, &grads, false);
    adam.step(net.params, grads);
  }

  PretrainReport rep;
  rep.arch_id = arch_id;
  rep.epochs = opt.epochs;
  rep.final_test_accuracy = accuracy(net, test);
  return {std::move(net), rep};
}

std::pair<Network<float>, Network<float>> init_pair(const Network<float>& substitute, double jitter_scale,
                                                    std::uint64_t seed) {
  Network<float> d1 = substitute, d2 = substitute;
  if (jitter_scale == 0) return {std::move(d1), std::move(d2)};
  const auto idx = d2.params.find("fc.weight");
  if (!idx) throw ArchMismatchError("init_pair: substitute has no final classification layer 'fc.weight'");
  auto& w = d2.params[*idx].values;
  double mean = 0, var = 0;
  for (float v : w) mean += v;
  mean /= static_cast<double>(w.size());
  for (float v : w) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(w.size()));
  auto rng = seed_all(seed).stream("jitter");
  std::normal_distribution<double> noise(0.0, jitter_scale * sd);
  for (auto& v : w) v = static_cast<float>(v + noise(rng));
  return {std::move(d1), std::move(d2)};
}

template Tensor<float> classify<float>(const Network<float>&, const Tensor<float>&, Tape<float>*);
template Tensor<double> classify<double>(const Network<double>&, const Tensor<double>&, Tape<double>*);
template std::vector<int> predict_from_logits<float>(const Tensor<float>&);
template std::vector<int> predict_from_logits<double>(const Tensor<double>&);

}  // namespace m3d
