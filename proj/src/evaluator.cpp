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

#include "m3d/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "m3d/checkpoint.hpp"
#include "m3d/trainer.hpp"

namespace fs = std::filesystem;

namespace m3d {

std::string to_string(VictimRole r) {
  switch (r) {
    case VictimRole::whitebox_substitute: return "whitebox_substitute";
    case VictimRole::blackbox: return "blackbox";
    case VictimRole::robust_blackbox: return "robust_blackbox";
    case VictimRole::topk_api: return "topk_api";
  }
  return "?";
}

LoadedGenerator load_generator(const std::string& path, const std::string& fallback_kernel) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.arch_id != kArchResGen) throw ArchMismatchError(path + " holds '" + ck.arch_id + "', not a generator");
  LoadedGenerator g;
  g.net = load_checkpoint(path, std::string(kArchResGen));
  auto info = [&ck](const char* k) -> std::string {
    auto it = ck.info.find(k);
    return it == ck.info.end() ? "" : it->second;
  };
  const std::string kern = info("smoothing_kernel");
  g.kernel = SmoothingKernel::parse(kern.empty() ? fallback_kernel : kern);
  if (const std::string t = info("target_class"); !t.empty()) g.target_class = std::stoi(t);
  g.mode = info("mode");
  return g;
}

MetricsReport score_predictions(const std::vector<int>& predictions, const std::vector<int>& labels, int target) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  MetricsReport r;
  r.target_class = target;
  r.n_evaluated = static_cast<int>(labels.size());
  int hits = 0, errors = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == target) throw ValidationError("source sample " + std::to_string(i) + " belongs to the target class");
    ClassCounts& c = r.per_class[labels[i]];
    ++c.n;
    if (predictions[i] == target) ++c.to_target, ++hits;
    if (predictions[i] != labels[i]) ++c.errors, ++errors;
  }
  if (r.n_evaluated > 0) {
    r.target_accuracy = static_cast<double>(hits) / r.n_evaluated;
    r.classification_error_rate = static_cast<double>(errors) / r.n_evaluated;
  }
  return r;
}

namespace {

constexpr int kChunk = 200;

void check_compat(const Victim& v, const LabeledDataset& test, const AttackProtocol& p) {
  if (num_classes_of(v.net) != test.num_classes)
    throw ValidationError("victim '" + v.name + "' has " + std::to_string(num_classes_of(v.net)) +
                          " classes, dataset has " + std::to_string(test.num_classes));
  if (p.target_class < 0 || p.target_class >= test.num_classes)
    throw ValidationError("protocol target outside the dataset classes");
  for (int i : p.source_indices)
    if (i < 0 || i >= test.size() || test.labels[i] == p.target_class)
      throw ValidationError("protocol does not match the evaluation split");
}

std::vector<int> source_labels(const LabeledDataset& test, const AttackProtocol& p) {
  std::vector<int> y;
  y.reserve(p.source_indices.size());
  for (int i : p.source_indices) y.push_back(test.labels[i]);
  return y;
}

MetricsReport finish(MetricsReport r, const Victim& v, const AttackProtocol& p) {
  r.protocol = p.kind;
  r.victim = v.name;
  r.role = v.role;
  return r;
}

}  // namespace

Tensor<float> protocol_adversaries(const LoadedGenerator& gen, const LabeledDataset& test,
                                   const AttackProtocol& protocol, double epsilon) {
  const auto& src = protocol.source_indices;
  Tensor<float> out({static_cast<int>(src.size()), test.images.c(), test.images.h(), test.images.w()});
  const std::size_t per = static_cast<std::size_t>(out.c()) * out.h() * out.w();
  for (std::size_t s = 0; s < src.size(); s += kChunk) {
    const std::size_t e = std::min(src.size(), s + kChunk);
    const std::vector<int> rows(src.begin() + s, src.begin() + e);
    const Tensor<float> z = generate(gen.net, gen.kernel, gather(test.images, rows), epsilon).z;
    std::copy(z.data.begin(), z.data.end(), out.data.begin() + s * per);
  }
  return out;
}

MetricsReport evaluate_transfer(const LoadedGenerator& gen, const Victim& victim, const LabeledDataset& test,
                                const AttackProtocol& protocol, double epsilon) {
  check_compat(victim, test, protocol);
  const Tensor<float> z = protocol_adversaries(gen, test, protocol, epsilon);
  return finish(score_predictions(predict_all(victim.net, z), source_labels(test, protocol), protocol.target_class),
                victim, protocol);
}

Tensor<float> minmax_scale(const Tensor<float>& delta, std::vector<char>* degenerate) {
  Tensor<float> out = delta;
  const std::size_t per = delta.size() / std::max(1, delta.n());
  if (degenerate) degenerate->assign(delta.n(), 0);
  for (int i = 0; i < delta.n(); ++i) {
    auto b = out.data.begin() + i * per, e = b + per;
    const auto [lo, hi] = std::minmax_element(b, e);
    const float mn = *lo, mx = *hi;
    if (!(mx > mn)) {
      std::fill(b, e, 0.5f);
      if (degenerate) (*degenerate)[i] = 1;
      continue;
    }
    const float inv = 1.0f / (mx - mn);
    for (auto it = b; it != e; ++it) *it = (*it - mn) * inv;
  }
  return out;
}

MetricsReport evaluate_perturbation_only(const LoadedGenerator& gen, const Victim& victim, const LabeledDataset& test,
                                         const AttackProtocol& protocol, double epsilon) {
  check_compat(victim, test, protocol);
  Tensor<float> delta = protocol_adversaries(gen, test, protocol, epsilon);
  const std::size_t per = delta.size() / std::max(1, delta.n());
  for (int i = 0; i < delta.n(); ++i) {
    const std::size_t off = static_cast<std::size_t>(protocol.source_indices[i]) * per;
    for (std::size_t j = 0; j < per; ++j) delta.data[i * per + j] -= test.images.data[off + j];
  }
  std::vector<char> degenerate;
  const Tensor<float> scaled = minmax_scale(delta, &degenerate);
  std::vector<int> pred = predict_all(victim.net, scaled);
  int n_deg = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (degenerate[i]) {
      pred[i] = -1;  // neither the target nor the original label
      ++n_deg;
    }
  MetricsReport r = score_predictions(pred, source_labels(test, protocol), protocol.target_class);
  r.degenerate = n_deg;
  r.note = "perturbation rescaled per sample by affine min-max to [0,1]";
  if (n_deg > 0) {
    std::cerr << "warning: " << n_deg << " zero perturbation(s) counted as target misses\n";
    r.note += "; " + std::to_string(n_deg) + " zero perturbations counted as misses";
  }
  return finish(std::move(r), victim, protocol);
}

bool in_topk(std::span<const float> logits, int target, int k) {
  int ahead = 0;
  for (int j = 0; j < static_cast<int>(logits.size()); ++j)
    if (logits[j] > logits[target] || (logits[j] == logits[target] && j < target)) ++ahead;
  return ahead < k;
}

double evaluate_topk_api(const LoadedGenerator& gen, const Victim& victim, const LabeledDataset& test,
                         const AttackProtocol& protocol, double epsilon, int k) {
  check_compat(victim, test, protocol);
  const int classes = test.num_classes;
  if (k < 1 || k > classes) throw ValidationError("k must lie in [1, " + std::to_string(classes) + "]");
  const Tensor<float> z = protocol_adversaries(gen, test, protocol, epsilon);
  if (z.n() == 0) return 0;
  const std::size_t per = z.size() / z.n();
  int hits = 0;
  for (int s = 0; s < z.n(); s += kChunk) {
    const int e = std::min(z.n(), s + kChunk);
    Tensor<float> part({e - s, z.c(), z.h(), z.w()});
    std::copy(z.data.begin() + s * per, z.data.begin() + e * per, part.data.begin());
    const Tensor<float> logits = classify(victim.net, part);
    for (int i = 0; i < logits.n(); ++i)
      hits += in_topk(std::span<const float>(logits.data.data() + i * classes, classes), protocol.target_class, k);
  }
  return static_cast<double>(hits) / z.n();
}

AggregateReport aggregate(std::vector<MetricsReport> reports) {
  AggregateReport agg;
  std::map<std::string, int> count;
  for (const auto& r : reports) {
    agg.mean_target_accuracy[r.victim] += r.target_accuracy;
    agg.mean_error_rate[r.victim] += r.classification_error_rate;
    ++count[r.victim];
  }
  for (auto& [v, s] : agg.mean_target_accuracy) s /= count[v];
  for (auto& [v, s] : agg.mean_error_rate) s /= count[v];
  agg.reports = std::move(reports);
  return agg;
}

AggregateReport evaluate_all_targets(const std::map<int, std::string>& gen_ckpts, const std::vector<Victim>& victims,
                                     const LabeledDataset& test, ProtocolKind kind, double epsilon) {
  std::vector<std::string> missing;
  for (const auto& [t, path] : gen_ckpts)
    if (!fs::exists(path)) missing.push_back(std::to_string(t) + " (" + path + ")");
  if (!missing.empty()) {
    std::string msg = "missing generator checkpoints for targets:";
    for (const auto& m : missing) msg += " " + m;
    throw IoError(msg);
  }
  std::vector<MetricsReport> reports;
  for (const auto& [t, path] : gen_ckpts) {
    const LoadedGenerator gen = load_generator(path);
    const AttackProtocol p = build_protocol(test, kind, t);
    for (const auto& v : victims) reports.push_back(evaluate_transfer(gen, v, test, p, epsilon));
  }
  return aggregate(std::move(reports));
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  return f;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

namespace {

void metrics_rows(std::ofstream& f, const std::vector<MetricsReport>& reports,
                  const std::vector<std::string>& modes) {
  f << "protocol,victim,target,target_acc,err_rate,n" << (modes.empty() ? "" : ",mode") << "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    f << to_string(r.protocol) << "," << r.victim << "," << r.target_class << "," << fmt(r.target_accuracy) << ","
      << fmt(r.classification_error_rate) << "," << r.n_evaluated << (modes.empty() ? "" : "," + modes[i]) << "\n";
  }
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsReport>& reports, const std::string& mode) {
  auto f = open_out(path);
  metrics_rows(f, reports, mode.empty() ? std::vector<std::string>{} : std::vector<std::string>(reports.size(), mode));
}

void write_ablation_metrics_csv(const std::string& path, const AblationTable& table) {
  auto f = open_out(path);
  metrics_rows(f, table.reports, table.report_modes);
}

void write_summary_csv(const std::string& path, const AggregateReport& agg, const std::string& mode) {
  auto f = open_out(path);
  f << "mode,victim,mean_target_acc,mean_err_rate,targets\n";
  for (const auto& [v, acc] : agg.mean_target_accuracy) {
    int n = 0;
    for (const auto& r : agg.reports) n += r.victim == v;
    f << (mode.empty() ? "-" : mode) << "," << v << "," << fmt(acc) << "," << fmt(agg.mean_error_rate.at(v)) << ","
      << n << "\n";
  }
}

AblationTable run_ablation(const AttackConfig& base, const DatasetSplits& splits, const Network<float>& substitute,
                           const std::vector<Victim>& victims, const std::string& root, const AblationOptions& opt) {
  AblationTable table;
  for (const auto& v : victims) table.victims.push_back(v.name);
  for (Mode mode : opt.modes) {
    std::map<std::string, int> count;
    for (int target : opt.targets) {
      const AttackProtocol protocol = build_protocol(splits.test, opt.protocol, target);
      for (std::uint64_t seed : opt.seeds) {
        AttackConfig cfg = base;
        cfg.mode = mode;
        cfg.target_class = target;
        cfg.seed = seed;
        validate(cfg);
        const fs::path dir = fs::path(root) / to_string(mode) / ("t" + std::to_string(target) + "_s" + std::to_string(seed));
        const fs::path final_gen = dir / "gen_final.ckpt";
        bool done = false;
        if (fs::exists(final_gen) && fs::exists(dir / "config.cfg")) {
          std::ifstream in(dir / "config.cfg");
          const std::string stored((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
          done = stored == serialize(cfg);
        }
        if (!done) {
          TrainOptions to;
          to.log_every = opt.log_every;
          train(cfg, splits.train, substitute, dir.string(), to);
        }
        const LoadedGenerator gen = load_generator(final_gen.string(), cfg.smoothing_kernel);
        table.generator_paths.push_back(final_gen.string());
        for (const auto& v : victims) {
          MetricsReport r = evaluate_transfer(gen, v, splits.test, protocol, cfg.epsilon);
          table.target_accuracy[mode][v.name] += r.target_accuracy;
          table.error_rate[mode][v.name] += r.classification_error_rate;
          ++count[v.name];
          table.reports.push_back(std::move(r));
          table.report_modes.push_back(to_string(mode));
        }
      }
    }
    for (auto& [v, s] : table.target_accuracy[mode]) s /= count[v];
    for (auto& [v, s] : table.error_rate[mode]) s /= count[v];
  }
  return table;
}

void write_ablation_csv(const std::string& path, const AblationTable& table) {
  auto f = open_out(path);
  f << "victim";
  for (const auto& [mode, _] : table.target_accuracy) f << "," << to_string(mode);
  for (const auto& [mode, _] : table.error_rate) f << "," << to_string(mode) << "_err";
  f << "\n";
  for (const auto& v : table.victims) {
    f << v;
    for (const auto& [mode, m] : table.target_accuracy) f << "," << fmt(m.at(v));
    for (const auto& [mode, m] : table.error_rate) f << "," << fmt(m.at(v));
    f << "\n";
  }
}

}  // namespace m3d
