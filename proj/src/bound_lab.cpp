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

#include "m3d/bound_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "m3d/objectives.hpp"

namespace m3d {

BoundReport bound_terms_from_predictions(const std::vector<int>& pred_s, const std::vector<int>& pred_b, int target) {
  if (pred_s.size() != pred_b.size()) throw ShapeError("prediction vectors differ in length");
  BoundReport r;
  r.target_class = target;
  r.n = static_cast<int>(pred_s.size());
  int eb = 0, es = 0, dis = 0;
  for (std::size_t i = 0; i < pred_s.size(); ++i) {
    const bool b_miss = pred_b[i] != target, s_miss = pred_s[i] != target, differ = pred_s[i] != pred_b[i];
    eb += b_miss;
    es += s_miss;
    dis += differ;
    if (b_miss && !s_miss && !differ) ++r.violations;
  }
  if (r.n > 0) {
    r.err_blackbox_to_target = static_cast<double>(eb) / r.n;
    r.err_substitute_to_target = static_cast<double>(es) / r.n;
    r.disagreement_sb = static_cast<double>(dis) / r.n;
  }
  return r;
}

namespace {

double mean_ce_to_target(const Network<float>& net, const Tensor<float>& z, int target) {
  if (z.n() == 0) return 0;
  const std::size_t per = z.size() / z.n();
  double total = 0;
  constexpr int chunk = 200;
  for (int s = 0; s < z.n(); s += chunk) {
    const int e = std::min(z.n(), s + chunk);
    Tensor<float> part({e - s, z.c(), z.h(), z.w()});
    std::copy(z.data.begin() + s * per, z.data.begin() + e * per, part.data.begin());
    const std::vector<int> t(e - s, target);
    total += cross_entropy(classify(net, part), std::span<const int>(t)).value * (e - s);
  }
  return total / z.n();
}

}  // namespace

BoundReport measure_bound_terms(const LoadedGenerator& gen, const Network<float>& h_s, const Network<float>& h_b,
                                const LabeledDataset& test, const AttackProtocol& protocol, double epsilon) {
  const Tensor<float> z = protocol_adversaries(gen, test, protocol, epsilon);
  BoundReport r = bound_terms_from_predictions(predict_all(h_s, z), predict_all(h_b, z), protocol.target_class);
  r.ce_substitute_to_target = mean_ce_to_target(h_s, z, protocol.target_class);
  r.ce_blackbox_to_target = mean_ce_to_target(h_b, z, protocol.target_class);
  return r;
}

std::vector<SampledModel> sample_hypotheses(const DatasetSplits& splits, const HypothesisOptions& opt) {
  if (opt.n_models < 2) throw ValidationError("n_models must be >= 2");
  std::vector<SampledModel> out;
  for (int i = 0; i < opt.n_models; ++i) {
    SampledModel m;
    m.seed = i < static_cast<int>(opt.seeds.size()) ? opt.seeds[i] : 101 + static_cast<std::uint64_t>(i);
    m.arch_id = i + 1 < opt.n_models ? opt.substitute_arch : opt.blackbox_arch;
    m.name = m.arch_id + "_s" + std::to_string(m.seed);
    PretrainOptions po = opt.pretrain;
    po.seed = m.seed;
    auto [net, rep] = pretrain_classifier(m.arch_id, splits.train, splits.test, po);
    m.clean_accuracy = rep.final_test_accuracy;
    m.accepted = m.clean_accuracy >= opt.floor_fraction * opt.reference_accuracy;
    if (!m.accepted)
      std::cerr << "discarding sampled model " << m.name << ": clean accuracy " << m.clean_accuracy << " below floor "
                << opt.floor_fraction * opt.reference_accuracy << "\n";
    m.net = std::move(net);
    out.push_back(std::move(m));
  }
  return out;
}

DiscrepancySamples pairwise_disagreement(const std::vector<SampledModel>& models, const Tensor<float>& inputs) {
  DiscrepancySamples s;
  std::vector<const SampledModel*> used;
  std::vector<std::vector<int>> preds;
  for (const auto& m : models)
    if (m.accepted) {
      used.push_back(&m);
      preds.push_back(predict_all(m.net, inputs));
    }
  s.models_used = static_cast<int>(used.size());
  for (std::size_t i = 0; i < used.size(); ++i)
    for (std::size_t j = i + 1; j < used.size(); ++j) {
      int differ = 0;
      for (std::size_t k = 0; k < preds[i].size(); ++k) differ += preds[i][k] != preds[j][k];
      PairDisagreement p;
      p.pair_id = used[i]->name + "|" + used[j]->name;
      p.disagreement = preds[i].empty() ? 0 : static_cast<double>(differ) / preds[i].size();
      s.max_disagreement = std::max(s.max_disagreement, p.disagreement);
      s.pairs.push_back(std::move(p));
    }
  return s;
}

DiscrepancySamples sample_hypothesis_discrepancy(const LoadedGenerator& gen, const DatasetSplits& splits,
                                                 const AttackProtocol& protocol, double epsilon,
                                                 const HypothesisOptions& opt) {
  const auto models = sample_hypotheses(splits, opt);
  return pairwise_disagreement(models, protocol_adversaries(gen, splits.test, protocol, epsilon));
}

void write_bound_report_csv(const std::string& path, const BoundReport& r, const DiscrepancySamples* samples) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  auto row = [&f](const std::string& term, double v, const char* kind) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    f << term << "," << buf << "," << kind << "\n";
  };
  f << "term,value,estimator\n";
  row("err_blackbox_to_target", r.err_blackbox_to_target, "exact rate");
  row("err_substitute_to_target", r.err_substitute_to_target, "exact rate");
  row("disagreement_sb", r.disagreement_sb, "exact rate");
  row("decomposition_slack", r.slack(), "exact rate");
  row("decomposition_violations", r.violations, "exact count");
  row("n", r.n, "exact count");
  row("ce_blackbox_to_target", r.ce_blackbox_to_target, "descriptive");
  row("ce_substitute_to_target", r.ce_substitute_to_target, "descriptive");
  if (samples) {
    for (const auto& p : samples->pairs) row("pair_disagreement:" + p.pair_id, p.disagreement, "exact rate");
    row("max_pairwise_disagreement", samples->max_disagreement, "lower-estimate");
  }
  f << "omega,not computed,not computed\n";
}

}  // namespace m3d
