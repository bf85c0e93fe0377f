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

#include "m3d/m3d.h"

#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "m3d/bound_lab.hpp"
#include "m3d/checkpoint.hpp"
#include "m3d/classifier.hpp"
#include "m3d/config.hpp"
#include "m3d/dataset.hpp"
#include "m3d/errors.hpp"
#include "m3d/evaluator.hpp"
#include "m3d/report.hpp"
#include "m3d/run.hpp"
#include "m3d/trainer.hpp"

struct m3d_config {
  m3d::AttackConfig cfg;
};

struct m3d_dataset {
  m3d::DatasetSplits splits;
};

struct m3d_model {
  m3d::Network<float> net;
};

struct m3d_lock {
  std::unique_ptr<m3d::RunDirLock> lock;
};

namespace {

thread_local std::string g_last_error;

m3d_status fail(m3d_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
m3d_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return M3D_OK;
  } catch (const m3d::ConfigError& e) {
    return fail(M3D_E_CONFIG, e.what());
  } catch (const m3d::ValidationError& e) {
    return fail(M3D_E_VALIDATION, e.what());
  } catch (const m3d::IntegrityError& e) {
    return fail(M3D_E_INTEGRITY, e.what());
  } catch (const m3d::ArchMismatchError& e) {
    return fail(M3D_E_ARCH_MISMATCH, e.what());
  } catch (const m3d::IoError& e) {
    return fail(M3D_E_IO, e.what());
  } catch (const m3d::DivergenceError& e) {
    return fail(M3D_E_DIVERGENCE, e.what());
  } catch (const m3d::ShapeError& e) {
    return fail(M3D_E_SHAPE, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(M3D_E_IO, e.what());
  } catch (const std::exception& e) {
    return fail(M3D_E_RUNTIME, e.what());
  } catch (...) {
    return fail(M3D_E_RUNTIME, "unknown error");
  }
}


#define M3D_REQUIRE(p) \
  if (!(p)) return fail(M3D_E_INVALID_ARGUMENT, "null argument: " #p)

m3d_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf || cap == 0) return fail(M3D_E_INVALID_ARGUMENT, "output buffer is empty");
  const size_t n = std::min(cap - 1, s.size());
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
  if (n < s.size()) return fail(M3D_E_INVALID_ARGUMENT, "output buffer too small");
  return M3D_OK;
}

m3d::ConfigEntries overrides_of(const char* const* overrides, int n) {
  m3d::ConfigEntries out;
  for (int i = 0; i < n; ++i) {
    if (!overrides[i]) throw m3d::ConfigError("null override");
    const std::string kv = overrides[i];
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw m3d::ConfigError("override must be key=value: '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    out.emplace_back(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return out;
}

m3d::ProtocolKind protocol_of(m3d_protocol p) {
  return p == M3D_PROTOCOL_SUBSET_SOURCE ? m3d::ProtocolKind::subset_source : m3d::ProtocolKind::all_source;
}

m3d::VictimRole role_of(m3d_victim_role r) {
  switch (r) {
    case M3D_ROLE_WHITEBOX_SUBSTITUTE: return m3d::VictimRole::whitebox_substitute;
    case M3D_ROLE_ROBUST_BLACKBOX: return m3d::VictimRole::robust_blackbox;
    case M3D_ROLE_TOPK_API: return m3d::VictimRole::topk_api;
    default: return m3d::VictimRole::blackbox;
  }
}

m3d_metrics to_c(const m3d::MetricsReport& r) {
  return {r.target_accuracy, r.classification_error_rate, r.n_evaluated, r.degenerate};
}

m3d::LoadedGenerator generator_for(const m3d::AttackConfig& cfg, const char* path) {
  m3d::LoadedGenerator g = m3d::load_generator(path, cfg.smoothing_kernel);
  if (g.target_class < 0) g.target_class = cfg.target_class;
  return g;
}

}  // namespace

extern "C" {

const char* m3d_version(void) { return "0.1.0"; }

const char* m3d_last_error(void) { return g_last_error.c_str(); }

const char* m3d_status_string(m3d_status s) {
  switch (s) {
    case M3D_OK: return "ok";
    case M3D_E_INVALID_ARGUMENT: return "invalid argument";
    case M3D_E_CONFIG: return "config error";
    case M3D_E_VALIDATION: return "validation error";
    case M3D_E_IO: return "io error";
    case M3D_E_INTEGRITY: return "integrity error";
    case M3D_E_ARCH_MISMATCH: return "architecture mismatch";
    case M3D_E_DIVERGENCE: return "divergence";
    case M3D_E_SHAPE: return "shape error";
    case M3D_E_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

// ---- configuration

m3d_status m3d_config_load(const char* path, const char* const* overrides, int n_overrides, m3d_config** out) {
  M3D_REQUIRE(path);
  M3D_REQUIRE(out);
  M3D_REQUIRE(n_overrides == 0 || overrides);
  return guarded([&] { *out = new m3d_config{m3d::load_config(path, overrides_of(overrides, n_overrides))}; });
}

m3d_status m3d_config_parse(const char* text, const char* const* overrides, int n_overrides, m3d_config** out) {
  M3D_REQUIRE(text);
  M3D_REQUIRE(out);
  M3D_REQUIRE(n_overrides == 0 || overrides);
  return guarded([&] {
    *out = new m3d_config{m3d::config_from_entries(m3d::parse_config_text(text), overrides_of(overrides, n_overrides))};
  });
}

m3d_status m3d_config_serialize(const m3d_config* cfg, char* buf, size_t cap, size_t* needed) {
  M3D_REQUIRE(cfg);
  return copy_out(m3d::serialize(cfg->cfg), buf, cap, needed);
}

m3d_status m3d_config_get(const m3d_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  M3D_REQUIRE(cfg);
  M3D_REQUIRE(key);
  for (const auto& [k, v] : m3d::parse_config_text(m3d::serialize(cfg->cfg)))
    if (k == key) return copy_out(v, buf, cap, needed);
  return fail(M3D_E_CONFIG, std::string("unknown config key '") + key + "'");
}

m3d_status m3d_config_hash(const m3d_config* cfg, char* buf, size_t cap) {
  M3D_REQUIRE(cfg);
  return copy_out(m3d::config_hash(cfg->cfg), buf, cap, nullptr);
}

void m3d_config_free(m3d_config* cfg) { delete cfg; }

// ---- data

m3d_status m3d_dataset_load(const m3d_config* cfg, m3d_dataset** out) {
  M3D_REQUIRE(cfg);
  M3D_REQUIRE(out);
  return guarded([&] { *out = new m3d_dataset{m3d::load_splits(cfg->cfg)}; });
}

m3d_status m3d_dataset_info(const m3d_dataset* ds, int* num_classes, int* n_train, int* n_test, int* side) {
  M3D_REQUIRE(ds);
  if (num_classes) *num_classes = ds->splits.train.num_classes;
  if (n_train) *n_train = ds->splits.train.size();
  if (n_test) *n_test = ds->splits.test.size();
  if (side) *side = ds->splits.train.side();
  return M3D_OK;
}

m3d_status m3d_dataset_export(const m3d_dataset* ds, const char* root) {
  M3D_REQUIRE(ds);
  M3D_REQUIRE(root);
  return guarded([&] {
    m3d::export_folder_dataset(ds->splits.train, (std::filesystem::path(root) / "train").string());
    m3d::export_folder_dataset(ds->splits.test, (std::filesystem::path(root) / "test").string());
  });
}

void m3d_dataset_free(m3d_dataset* ds) { delete ds; }

// ---- models

m3d_status m3d_model_load(const char* path, const char* expected_arch, m3d_model** out) {
  M3D_REQUIRE(path);
  M3D_REQUIRE(out);
  return guarded([&] {
    std::optional<std::string> arch;
    if (expected_arch) arch = expected_arch;
    *out = new m3d_model{m3d::load_checkpoint(path, arch)};
  });
}

m3d_status m3d_model_save(const m3d_model* model, const char* path) {
  M3D_REQUIRE(model);
  M3D_REQUIRE(path);
  return guarded([&] { m3d::save_checkpoint(model->net, path); });
}

m3d_status m3d_model_arch(const m3d_model* model, char* buf, size_t cap, size_t* needed) {
  M3D_REQUIRE(model);
  return copy_out(model->net.arch_id, buf, cap, needed);
}

m3d_status m3d_model_checksum(const m3d_model* model, uint64_t* out) {
  M3D_REQUIRE(model);
  M3D_REQUIRE(out);
  *out = model->net.params.checksum();
  return M3D_OK;
}

m3d_status m3d_model_accuracy(const m3d_model* model, const m3d_dataset* ds, double* out) {
  M3D_REQUIRE(model);
  M3D_REQUIRE(ds);
  M3D_REQUIRE(out);
  return guarded([&] {
    if (!m3d::is_classifier_arch(model->net.arch_id))
      throw m3d::ArchMismatchError("'" + model->net.arch_id + "' is not a classifier");
    *out = m3d::accuracy(model->net, ds->splits.test);
  });
}

void m3d_model_free(m3d_model* model) { delete model; }

m3d_status m3d_pretrain(const m3d_config* cfg, const m3d_dataset* ds, const char* arch, uint64_t seed, int augment,
                        m3d_model** out, double* test_accuracy) {
  M3D_REQUIRE(cfg);
  M3D_REQUIRE(ds);
  M3D_REQUIRE(arch);
  M3D_REQUIRE(out);
  return guarded([&] {
    m3d::PretrainOptions o;
    o.epochs = cfg->cfg.pretrain_epochs;
    o.batch_size = cfg->cfg.batch_size;
    o.seed = seed;
    o.adam = cfg->cfg.discriminator_adam();
    o.adam.lr = cfg->cfg.pretrain_lr;
    o.augment = augment != 0;
    auto [net, rep] = m3d::pretrain_classifier(arch, ds->splits.train, ds->splits.test, o);
    if (test_accuracy) *test_accuracy = rep.final_test_accuracy;
    *out = new m3d_model{std::move(net)};
  });
}

// ---- attack training

m3d_status m3d_train(const m3d_config* cfg, const m3d_dataset* ds, const m3d_model* substitute, const char* run_dir,
                     int log_every) {
  M3D_REQUIRE(cfg);
  M3D_REQUIRE(ds);
  M3D_REQUIRE(substitute);
  M3D_REQUIRE(run_dir);
  return guarded([&] {
    m3d::TrainOptions o;
    o.log_every = log_every;
    m3d::train(cfg->cfg, ds->splits.train, substitute->net, run_dir, o);
  });
}

m3d_status m3d_resume(const m3d_config* cfg, const m3d_dataset* ds, const char* run_dir, int64_t from_iteration,
                      int log_every) {
  M3D_REQUIRE(cfg);
  M3D_REQUIRE(ds);
  M3D_REQUIRE(run_dir);
  return guarded([&] {
    m3d::TrainOptions o;
    o.log_every = log_every;
    m3d::resume_training(cfg->cfg, ds->splits.train, run_dir, from_iteration, o);
  });
}

// ---- evaluation

m3d_status m3d_evaluate_one(const m3d_config* cfg, const m3d_dataset* ds, const char* gen_ckpt,
                            const m3d_model* victim, m3d_eval_kind kind, m3d_protocol protocol, int k,
                            m3d_metrics* out) {
  M3D_REQUIRE(cfg);
  M3D_REQUIRE(ds);
  M3D_REQUIRE(gen_ckpt);
  M3D_REQUIRE(victim);
  M3D_REQUIRE(out);
  return guarded([&] {
    const m3d::LoadedGenerator gen = generator_for(cfg->cfg, gen_ckpt);
    const auto& test = ds->splits.test;
    const m3d::AttackProtocol p = m3d::build_protocol(test, protocol_of(protocol), gen.target_class);
    const m3d::Victim v{"victim", m3d::VictimRole::blackbox, victim->net};
    switch (kind) {
      case M3D_EVAL_TRANSFER: *out = to_c(m3d::evaluate_transfer(gen, v, test, p, cfg->cfg.epsilon)); break;
      case M3D_EVAL_PERTURBATION_ONLY:
        *out = to_c(m3d::evaluate_perturbation_only(gen, v, test, p, cfg->cfg.epsilon));
        break;
      case M3D_EVAL_TOPK:
        *out = m3d_metrics{m3d::evaluate_topk_api(gen, v, test, p, cfg->cfg.epsilon, k), 0,
                           static_cast<int>(p.source_indices.size()), 0};
        break;
      default: throw m3d::ValidationError("unknown evaluation kind");
    }
  });
}

m3d_status m3d_evaluate(const m3d_config* cfg, const m3d_dataset* ds, const char* const* gen_ckpts, int n_gens,
                        const m3d_model* const* victims, const char* const* victim_names,
                        const m3d_victim_role* roles, int n_victims, m3d_protocol protocol, const char* out_dir,
                        m3d_metrics* mean_out) {
  M3D_REQUIRE(cfg);
  M3D_REQUIRE(ds);
  M3D_REQUIRE(gen_ckpts);
  M3D_REQUIRE(victims);
  M3D_REQUIRE(out_dir);
  M3D_REQUIRE(n_gens > 0 && n_victims > 0);
  return guarded([&] {
    std::vector<m3d::Victim> vs;
    for (int i = 0; i < n_victims; ++i) {
      if (!victims[i]) throw m3d::ValidationError("null victim " + std::to_string(i));
      vs.push_back({victim_names && victim_names[i] ? victim_names[i] : "victim" + std::to_string(i),
                    roles ? role_of(roles[i]) : m3d::VictimRole::blackbox, victims[i]->net});
    }
    std::vector<std::string> missing;
    for (int g = 0; g < n_gens; ++g)
      if (!gen_ckpts[g] || !std::filesystem::exists(gen_ckpts[g]))
        missing.push_back(gen_ckpts[g] ? gen_ckpts[g] : "(null)");
    if (!missing.empty()) {
      std::string msg = "missing generator checkpoints:";
      for (const auto& m : missing) msg += " " + m;
      throw m3d::IoError(msg);
    }
    std::vector<m3d::MetricsReport> reports;
    for (int g = 0; g < n_gens; ++g) {
      const m3d::LoadedGenerator gen = generator_for(cfg->cfg, gen_ckpts[g]);
      const m3d::AttackProtocol p = m3d::build_protocol(ds->splits.test, protocol_of(protocol), gen.target_class);
      for (const auto& v : vs) reports.push_back(m3d::evaluate_transfer(gen, v, ds->splits.test, p, cfg->cfg.epsilon));
    }
    const m3d::AggregateReport agg = m3d::aggregate(std::move(reports));
    std::filesystem::create_directories(out_dir);
    m3d::write_metrics_csv((std::filesystem::path(out_dir) / "metrics.csv").string(), agg.reports);
    m3d::write_summary_csv((std::filesystem::path(out_dir) / "summary.csv").string(), agg);
    if (mean_out)
      for (int i = 0; i < n_victims; ++i)
        mean_out[i] = m3d_metrics{agg.mean_target_accuracy.at(vs[i].name), agg.mean_error_rate.at(vs[i].name),
                                  n_gens, 0};
  });
}

m3d_status m3d_ablation(const m3d_config* cfg, const m3d_dataset* ds, const m3d_model* substitute,
                        const m3d_model* const* victims, const char* const* victim_names, int n_victims,
                        const int* targets, int n_targets, const uint64_t* seeds, int n_seeds, const char* out_dir,
                        int log_every) {
  M3D_REQUIRE(cfg);
  M3D_REQUIRE(ds);
  M3D_REQUIRE(substitute);
  M3D_REQUIRE(victims);
  M3D_REQUIRE(out_dir);
  M3D_REQUIRE(n_victims > 0);
  return guarded([&] {
    std::vector<m3d::Victim> vs;
    for (int i = 0; i < n_victims; ++i) {
      if (!victims[i]) throw m3d::ValidationError("null victim " + std::to_string(i));
      vs.push_back({victim_names && victim_names[i] ? victim_names[i] : "victim" + std::to_string(i),
                    m3d::VictimRole::blackbox, victims[i]->net});
    }
    m3d::AblationOptions o;
    if (targets && n_targets > 0) o.targets.assign(targets, targets + n_targets);
    if (seeds && n_seeds > 0) o.seeds.assign(seeds, seeds + n_seeds);
    o.log_every = log_every;
    const m3d::AblationTable t = m3d::run_ablation(cfg->cfg, ds->splits, substitute->net, vs, out_dir, o);
    const std::filesystem::path dir(out_dir);
    m3d::write_ablation_csv((dir / "ablation.csv").string(), t);
    m3d::write_ablation_metrics_csv((dir / "metrics.csv").string(), t);
  });
}

m3d_status m3d_bound(const m3d_config* cfg, const m3d_dataset* ds, const char* gen_ckpt, const m3d_model* h_s,
                     const m3d_model* h_b, int n_models, const char* out_csv, m3d_bound_result* out) {
  M3D_REQUIRE(cfg);
  M3D_REQUIRE(ds);
  M3D_REQUIRE(gen_ckpt);
  M3D_REQUIRE(h_s);
  M3D_REQUIRE(h_b);
  return guarded([&] {
    const m3d::LoadedGenerator gen = generator_for(cfg->cfg, gen_ckpt);
    const auto& test = ds->splits.test;
    const m3d::AttackProtocol p = m3d::build_protocol(test, m3d::ProtocolKind::all_source, gen.target_class);
    const m3d::BoundReport r = m3d::measure_bound_terms(gen, h_s->net, h_b->net, test, p, cfg->cfg.epsilon);
    std::optional<m3d::DiscrepancySamples> samples;
    if (n_models >= 2) {
      m3d::HypothesisOptions ho;
      ho.n_models = n_models;
      ho.substitute_arch = cfg->cfg.substitute_arch;
      ho.blackbox_arch = cfg->cfg.blackbox_arch;
      ho.reference_accuracy = m3d::accuracy(h_s->net, test);
      ho.pretrain.epochs = cfg->cfg.pretrain_epochs;
      ho.pretrain.batch_size = cfg->cfg.batch_size;
      ho.pretrain.adam = cfg->cfg.discriminator_adam();
      ho.pretrain.adam.lr = cfg->cfg.pretrain_lr;
      samples = m3d::sample_hypothesis_discrepancy(gen, ds->splits, p, cfg->cfg.epsilon, ho);
    }
    if (out_csv) m3d::write_bound_report_csv(out_csv, r, samples ? &*samples : nullptr);
    if (out)
      *out = m3d_bound_result{r.err_blackbox_to_target, r.err_substitute_to_target, r.disagreement_sb, r.violations,
                              r.n, samples ? samples->max_disagreement : -1.0};
  });
}

m3d_status m3d_report(const char* run_dir, char* notes, size_t cap, size_t* needed) {
  M3D_REQUIRE(run_dir);
  std::string joined;
  const m3d_status s = guarded([&] {
    const m3d::ReportResult r = m3d::render_report(run_dir);
    for (const auto& n : r.notes) joined += n + "\n";
  });
  if (s != M3D_OK || !notes) return s;
  return copy_out(joined, notes, cap, needed);
}

// ---- run directories

m3d_status m3d_lock_acquire(const char* run_dir, m3d_lock** out) {
  M3D_REQUIRE(run_dir);
  M3D_REQUIRE(out);
  return guarded([&] {
    if (!std::filesystem::is_directory(run_dir)) throw m3d::IoError(std::string("not a directory: ") + run_dir);
    *out = new m3d_lock{std::make_unique<m3d::RunDirLock>(run_dir)};
  });
}

void m3d_lock_release(m3d_lock* lock) { delete lock; }

m3d_status m3d_default_runs_root(char* buf, size_t cap, size_t* needed) {
  return copy_out(m3d::default_runs_root(), buf, cap, needed);
}

}  // extern "C"
