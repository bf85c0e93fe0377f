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

#include "m3d/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "m3d/checkpoint.hpp"
#include "m3d/classifier.hpp"
#include "m3d/rng.hpp"

namespace fs = std::filesystem;

namespace m3d {
namespace {

void add_into(Tensor<float>& acc, const Tensor<float>& g) {
  if (acc.size() == 0) {
    acc = g;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += g.data[i];
}

Tensor<float> combine(const Tensor<float>& a, const Tensor<float>& b, float sb) {
  Tensor<float> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += sb * b.data[i];
  return out;
}

Tensor<float> scaled(const Tensor<float>& a, float s) {
  Tensor<float> out = a;
  for (auto& v : out.data) v *= s;
  return out;
}

std::string norm_table(const TrainState& s) {
  std::ostringstream os;
  auto dump = [&os](const char* tag, const Network<float>& n) {
    for (const auto& p : n.params) {
      double sq = 0;
      for (float v : p.values) sq += static_cast<double>(v) * v;
      os << "  " << tag << "/" << p.name << " " << std::sqrt(sq) << "\n";
    }
  };
  dump("gen", s.generator);
  if (!s.d1.arch_id.empty()) dump("d1", s.d1);
  if (s.has_d2()) dump("d2", s.d2);
  return os.str();
}

[[noreturn]] void diverged(const TrainState& s, const LossBundle& b) {
  std::ostringstream os;
  os << "non-finite loss at iteration " << s.iteration << " (l_a=" << b.l_a << ", l_d=" << b.l_d << ", l_c=" << b.l_c
     << ")\nparameter norms:\n"
     << norm_table(s);
  throw DivergenceError(os.str());
}

void check_unchanged(std::uint64_t before, const Network<float>& n, const char* what) {
  if (n.params.checksum() != before) throw Error(std::string("phase isolation violated: ") + what + " changed");
}

std::string csv_row(std::int64_t it, const LossBundle& b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(it), b.l_a, b.l_d, b.l_c);
  return buf;
}

constexpr const char* kLossHeader = "iteration,l_a,l_d,l_c\n";

}  // namespace

TrainState init_train_state(const AttackConfig& cfg, const Network<float>& substitute) {
  if (substitute.arch_id != cfg.substitute_arch)
    throw ArchMismatchError("substitute is '" + substitute.arch_id + "' but config expects '" + cfg.substitute_arch + "'");
  if (num_classes_of(substitute) != cfg.num_classes)
    throw ValidationError("substitute has " + std::to_string(num_classes_of(substitute)) + " classes, config " +
                          std::to_string(cfg.num_classes));
  const RngSet rngs = seed_all(cfg.seed);
  TrainState s;
  auto g_rng = rngs.stream("generator_init");
  s.generator = make_generator(cfg.generator_arch(), g_rng);
  s.generator_opt = Adam<float>(s.generator.params, cfg.generator_adam());
  if (cfg.mode == Mode::A_single_fixed) {
    s.d1 = substitute;
  } else {
    auto [d1, d2] = init_pair(substitute, cfg.jitter_scale, derive_seed(cfg.seed, "jitter"));
    s.d1 = std::move(d1);
    s.d2 = std::move(d2);
    s.d1_opt = Adam<float>(s.d1.params, cfg.discriminator_adam());
    s.d2_opt = Adam<float>(s.d2.params, cfg.discriminator_adam());
  }
  s.shuffle_seed = derive_seed(cfg.seed, "shuffle");
  return s;
}

LossBundle train_step(TrainState& s, const ImageBatch& clean, const AttackConfig& cfg, const SmoothingKernel& kernel,
                      const TrainOptions& opt, StepProbe* probe) {
  const Tensor<float>& x = clean.images;
  const bool two = cfg.mode != Mode::A_single_fixed;
  const bool use_ld = cfg.mode == Mode::C_m3d;
  if (two && !s.has_d2()) throw ValidationError("mode " + to_string(cfg.mode) + " requires two discriminators");
  if (!two && s.has_d2()) throw ValidationError("mode A requires exactly one frozen discriminator");

  // ---- generator phase (D1, D2 frozen)
  std::uint64_t d1_sum = 0, d2_sum = 0;
  if (opt.check_isolation) {
    d1_sum = s.d1.params.checksum();
    if (two) d2_sum = s.d2.params.checksum();
  }
  GenerateTrace<float> trace;
  const Tensor<float> z = generate_recorded(s.generator, kernel, x, cfg.epsilon, trace);
  if (opt.budget_check_every > 0 && s.iteration % opt.budget_check_every == 0) {
    for (std::size_t i = 0; i < z.size(); ++i)
      if (std::abs(z.data[i] - x.data[i]) > cfg.epsilon + 1e-6 || z.data[i] < 0.0f || z.data[i] > 1.0f)
        throw Error("budget guarantee violated at iteration " + std::to_string(s.iteration));
  }

  LossBundle bundle;
  Tape<float> t1, t2;
  const Tensor<float> l1 = classify(s.d1, z, &t1);
  Tensor<float> grad_z;
  if (two) {
    const Tensor<float> l2 = classify(s.d2, z, &t2);
    const LossGrad<float> la = attack_loss(l1, l2, cfg.target_class);
    const LossGrad<float> ld = discrepancy_loss(l1, l2, cfg.discrepancy_space);
    bundle.l_a = la.value;
    bundle.l_d = ld.value;
    const float w = use_ld ? 1.0f : 0.0f;
    add_into(grad_z, s.d1.backward(combine(la.grad_a, ld.grad_a, w), t1, nullptr, true));
    add_into(grad_z, s.d2.backward(combine(la.grad_b, ld.grad_b, w), t2, nullptr, true));
  } else {
    const std::vector<int> tgt(x.n(), cfg.target_class);
    const LossGrad<float> la = cross_entropy(l1, std::span<const int>(tgt));
    bundle.l_a = la.value;
    grad_z = s.d1.backward(la.grad_a, t1, nullptr, true);
  }
  ParamSet<float> g_grads = s.generator.params.zeros_like();
  generate_backward(s.generator, kernel, trace, grad_z, g_grads);
  s.generator_opt.step(s.generator.params, g_grads);
  if (opt.check_isolation) {
    check_unchanged(d1_sum, s.d1, "D1 during generator phase");
    if (two) check_unchanged(d2_sum, s.d2, "D2 during generator phase");
  }

  // ---- discriminator phase (G frozen)
  if (two) {
    const std::uint64_t g_sum = opt.check_isolation ? s.generator.params.checksum() : 0;
    for (int rep = 0; rep < cfg.d_steps_per_g_step; ++rep) {
      ParamSet<float> g1 = s.d1.params.zeros_like(), g2 = s.d2.params.zeros_like();
      Tensor<float> zd;
      if (use_ld || probe) zd = cfg.reuse_adversaries ? z : generate(s.generator, kernel, x, cfg.epsilon).z;
      if (use_ld || probe) {
        Tape<float> a1, a2;
        const Tensor<float> k1 = classify(s.d1, zd, use_ld ? &a1 : nullptr);
        const Tensor<float> k2 = classify(s.d2, zd, use_ld ? &a2 : nullptr);
        const LossGrad<float> ld = discrepancy_loss(k1, k2, cfg.discrepancy_space);
        if (probe) probe->ld_after_g_phase = ld.value;
        if (use_ld) {
          s.d1.backward(scaled(ld.grad_a, -1.0f), a1, &g1, false);
          s.d2.backward(scaled(ld.grad_b, -1.0f), a2, &g2, false);
        }
      }
      Tape<float> c1t, c2t;
      const Tensor<float> c1 = classify(s.d1, x, &c1t);
      const Tensor<float> c2 = classify(s.d2, x, &c2t);
      const LossGrad<float> lc = clean_classification_loss(c1, c2, std::span<const int>(clean.labels));
      bundle.l_c = lc.value;
      s.d1.backward(lc.grad_a, c1t, &g1, false);
      s.d2.backward(lc.grad_b, c2t, &g2, false);
      s.d1_opt.step(s.d1.params, g1);
      s.d2_opt.step(s.d2.params, g2);
      if (probe)
        probe->ld_after_d_phase =
            discrepancy_loss(classify(s.d1, zd), classify(s.d2, zd), cfg.discrepancy_space).value;
    }
    if (opt.check_isolation) check_unchanged(g_sum, s.generator, "G during discriminator phase");
  }

  bundle = LossBundle::make(bundle.l_a, bundle.l_d, bundle.l_c);
  if (!bundle.finite()) diverged(s, bundle);
  s.loss_history.push_back(bundle);
  ++s.iteration;
  return bundle;
}

// ------------------------------------------------------------ persistence

void save_train_state(const TrainState& s, const std::string& path) {
  Checkpoint ck;
  ck.arch_id = "trainstate";
  ck.info["iteration"] = std::to_string(s.iteration);
  ck.info["shuffle_seed"] = std::to_string(s.shuffle_seed);
  auto put = [&ck](const std::string& tag, const Network<float>& n, const Adam<float>* a) {
    ck.meta[tag + ".arch"] = n.arch_id;
    for (const auto& [k, v] : n.meta) ck.meta[tag + "." + k] = v;
    for (const auto& p : n.params) ck.tensors[ck.tensors.add(tag + "/" + p.name, p.shape)].values = p.values;
    if (!a) return;
    ck.info[tag + ".adam_t"] = std::to_string(a->t);
    for (const auto& p : a->m) ck.tensors[ck.tensors.add(tag + ".m/" + p.name, p.shape)].values = p.values;
    for (const auto& p : a->v) ck.tensors[ck.tensors.add(tag + ".v/" + p.name, p.shape)].values = p.values;
  };
  const bool two = s.has_d2();
  put("gen", s.generator, &s.generator_opt);
  put("d1", s.d1, two ? &s.d1_opt : nullptr);
  if (two) put("d2", s.d2, &s.d2_opt);
  write_checkpoint(path, ck);
}

TrainState load_train_state(const std::string& path, const AttackConfig& cfg) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.arch_id != "trainstate") throw ArchMismatchError(path + " is not a training-state checkpoint");
  auto get_info = [&](const std::string& k) {
    auto it = ck.info.find(k);
    if (it == ck.info.end()) throw IntegrityError(path + ": missing info '" + k + "'");
    return it->second;
  };
  auto take = [&](const std::string& tag, Network<float>& n, Adam<float>* a, AdamHyper h) {
    std::map<std::string, std::string> meta;
    std::string arch;
    for (const auto& [k, v] : ck.meta) {
      if (k.rfind(tag + ".", 0) != 0) continue;
      const std::string sub = k.substr(tag.size() + 1);
      if (sub == "arch")
        arch = v;
      else
        meta[sub] = v;
    }
    if (arch.empty()) return false;
    n = build_network<float>(arch, meta);
    auto fill = [&](ParamSet<float>& ps, const std::string& prefix) {
      for (auto& p : ps) {
        auto idx = ck.tensors.find(prefix + p.name);
        if (!idx) throw IntegrityError(path + ": missing tensor " + prefix + p.name);
        if (ck.tensors[*idx].values.size() != p.values.size())
          throw IntegrityError(path + ": size mismatch for " + prefix + p.name);
        p.values = ck.tensors[*idx].values;
      }
    };
    fill(n.params, tag + "/");
    if (a) {
      *a = Adam<float>(n.params, h);
      a->t = std::stoll(get_info(tag + ".adam_t"));
      fill(a->m, tag + ".m/");
      fill(a->v, tag + ".v/");
    }
    return true;
  };
  TrainState s;
  s.iteration = std::stoll(get_info("iteration"));
  s.shuffle_seed = std::stoull(get_info("shuffle_seed"));
  take("gen", s.generator, &s.generator_opt, cfg.generator_adam());
  const bool two = cfg.mode != Mode::A_single_fixed;
  take("d1", s.d1, two ? &s.d1_opt : nullptr, cfg.discriminator_adam());
  if (two && !take("d2", s.d2, &s.d2_opt, cfg.discriminator_adam()))
    throw IntegrityError(path + ": mode " + to_string(cfg.mode) + " state lacks d2");
  return s;
}

// ------------------------------------------------------------------ runs

namespace {

TrainResult run_loop(const AttackConfig& cfg, const LabeledDataset& train_split, TrainState state,
                     const std::string& run_dir, const TrainOptions& opt, RunManifest manifest) {
  const SmoothingKernel kernel = SmoothingKernel::parse(cfg.smoothing_kernel);
  BatchStream stream(train_split, cfg.batch_size, state.shuffle_seed);
  const fs::path dir(run_dir);
  std::ofstream losses(dir / "losses.csv", std::ios::app);
  if (!losses) throw IoError("cannot open " + (dir / "losses.csv").string());

  auto write_ckpts = [&](const std::string& tag) {
    const std::map<std::string, std::string> info = {{"iteration", std::to_string(state.iteration)},
                                                     {"mode", to_string(cfg.mode)},
                                                     {"target_class", std::to_string(cfg.target_class)},
                                                     {"epsilon", std::to_string(cfg.epsilon)},
                                                     {"smoothing_kernel", cfg.smoothing_kernel}};
    try {
      save_checkpoint(state.generator, (dir / ("gen_" + tag + ".ckpt")).string(), info);
      save_checkpoint(state.d1, (dir / ("d1_" + tag + ".ckpt")).string(), info);
      if (state.has_d2()) save_checkpoint(state.d2, (dir / ("d2_" + tag + ".ckpt")).string(), info);
      manifest.artifact_paths["gen_" + tag] = "gen_" + tag + ".ckpt";
      manifest.artifact_paths["d1_" + tag] = "d1_" + tag + ".ckpt";
      if (state.has_d2()) manifest.artifact_paths["d2_" + tag] = "d2_" + tag + ".ckpt";
      if (tag != "final") {
        save_train_state(state, (dir / ("state_" + tag + ".ckpt")).string());
        manifest.artifact_paths["state_" + tag] = "state_" + tag + ".ckpt";
      }
    } catch (const Error& e) {
      manifest.notes["partial"] = std::string("checkpoint write failed at iteration ") +
                                  std::to_string(state.iteration) + ": " + e.what();
      manifest.write((dir / "manifest.json").string());
      throw;
    }
  };

  while (state.iteration < cfg.train_iterations) {
    const ImageBatch batch = stream.batch(state.iteration);
    const LossBundle b = train_step(state, batch, cfg, kernel, opt);
    losses << csv_row(state.iteration - 1, b);
    if (opt.log_every > 0 && state.iteration % opt.log_every == 0)
      std::cerr << "iter " << state.iteration << " l_a=" << b.l_a << " l_d=" << b.l_d << " l_c=" << b.l_c << "\n";
    if (state.iteration % cfg.checkpoint_every == 0) write_ckpts(std::to_string(state.iteration));
  }
  losses.flush();
  write_ckpts("final");
  manifest.artifact_paths["losses"] = "losses.csv";
  manifest.write((dir / "manifest.json").string());
  return {std::move(state), std::move(manifest)};
}

RunManifest new_manifest(const AttackConfig& cfg) {
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.run_id = "train-" + to_string(cfg.mode) + "-t" + std::to_string(cfg.target_class) + "-s" +
             std::to_string(cfg.seed) + "-" + m.config_hash.substr(0, 8);
  m.started_at = utc_timestamp();
  m.build_stamp = build_stamp();
  m.artifact_paths["config"] = "config.cfg";
  return m;
}

}  // namespace

TrainResult train(const AttackConfig& cfg, const LabeledDataset& train_split, const Network<float>& substitute,
                  const std::string& run_dir, const TrainOptions& opt) {
  fs::create_directories(run_dir);
  {
    std::ofstream c(fs::path(run_dir) / "config.cfg", std::ios::trunc);
    c << serialize(cfg);
    std::ofstream l(fs::path(run_dir) / "losses.csv", std::ios::trunc);
    l << kLossHeader;
    if (!c || !l) throw IoError("cannot initialise run directory " + run_dir);
  }
  return run_loop(cfg, train_split, init_train_state(cfg, substitute), run_dir, opt, new_manifest(cfg));
}

TrainResult train(const AttackConfig& cfg, const LabeledDataset& train_split, const std::string& substitute_ckpt,
                  const std::string& run_dir, const TrainOptions& opt) {
  return train(cfg, train_split, load_checkpoint(substitute_ckpt, cfg.substitute_arch), run_dir, opt);
}

TrainResult resume_training(const AttackConfig& cfg, const LabeledDataset& train_split, const std::string& run_dir,
                            std::int64_t from_iteration, const TrainOptions& opt) {
  const fs::path dir(run_dir);
  TrainState state = load_train_state((dir / ("state_" + std::to_string(from_iteration) + ".ckpt")).string(), cfg);

  // Keep the header plus the first `from_iteration` rows.
  std::ifstream in(dir / "losses.csv");
  if (!in) throw IoError("cannot read " + (dir / "losses.csv").string());
  std::string kept, line;
  for (std::int64_t i = 0; i <= from_iteration && std::getline(in, line); ++i) kept += line + "\n";
  in.close();
  std::ofstream(dir / "losses.csv", std::ios::trunc) << kept;

  RunManifest m = new_manifest(cfg);
  m.notes["resumed_from"] = std::to_string(from_iteration);
  return run_loop(cfg, train_split, std::move(state), run_dir, opt, std::move(m));
}

}  // namespace m3d
