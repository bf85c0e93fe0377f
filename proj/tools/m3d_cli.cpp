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

// Command-line front end. Talks to the library only through m3d.h.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "m3d/m3d.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;

struct Failure {
  m3d_status status;
};

void check(m3d_status s) {
  if (s != M3D_OK) throw Failure{s};
}

int exit_code(m3d_status s) {
  return s == M3D_E_VALIDATION || s == M3D_E_CONFIG ? kExitValidation : kExitRuntime;
}

// RAII holders for the opaque handles.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& o) noexcept : p(o.p) { o.p = nullptr; }
  ~Handle() {
    if (p) Free(p);
  }
};
using Config = Handle<m3d_config, m3d_config_free>;
using Dataset = Handle<m3d_dataset, m3d_dataset_free>;
using Model = Handle<m3d_model, m3d_model_free>;
using Lock = Handle<m3d_lock, m3d_lock_release>;

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Config file (key = value)")->required()->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "Override key=value, applied after the file")->take_all();
}

Config load_config(const Common& c) {
  std::vector<const char*> ov;
  for (const auto& s : c.sets) ov.push_back(s.c_str());
  Config cfg;
  check(m3d_config_load(c.config.c_str(), ov.data(), static_cast<int>(ov.size()), &cfg.p));
  return cfg;
}

Dataset load_dataset(const Config& cfg) {
  Dataset ds;
  check(m3d_dataset_load(cfg.p, &ds.p));
  return ds;
}

Model load_model(const std::string& path) {
  Model m;
  check(m3d_model_load(path.c_str(), nullptr, &m.p));
  return m;
}

std::string config_value(const Config& cfg, const char* key) {
  char buf[512];
  check(m3d_config_get(cfg.p, key, buf, sizeof buf, nullptr));
  return buf;
}

std::string runs_root() {
  char buf[4096];
  check(m3d_default_runs_root(buf, sizeof buf, nullptr));
  return buf;
}

Lock lock_dir(const std::string& dir, bool create = true) {
  if (create) fs::create_directories(dir);
  Lock l;
  check(m3d_lock_acquire(dir.c_str(), &l.p));
  return l;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generator-based transferable targeted attacks with max-discrepancy discriminators"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(m3d_version()));

  // dataset make | export
  auto* ds_cmd = app.add_subcommand("dataset", "Build or export the dataset");
  ds_cmd->require_subcommand(1);
  Common ds_make_c, ds_export_c;
  std::string export_root;
  auto* ds_make = ds_cmd->add_subcommand("make", "Build the configured dataset and print its shape");
  add_common(ds_make, ds_make_c);
  auto* ds_export = ds_cmd->add_subcommand("export", "Write the dataset as <root>/<split>/<class>/*.png");
  add_common(ds_export, ds_export_c);
  ds_export->add_option("--out", export_root, "Output root")->required();

  // pretrain
  Common pre_c;
  std::string pre_arch = "cnn_a", pre_out;
  std::uint64_t pre_seed = 0;
  bool pre_augment = false;
  auto* pre = app.add_subcommand("pretrain", "Train a clean classifier");
  add_common(pre, pre_c);
  pre->add_option("--arch", pre_arch, "Architecture id (cnn_a, cnn_b)");
  pre->add_option("--seed", pre_seed, "Initialisation and shuffling seed");
  pre->add_flag("--augment", pre_augment, "Crop-pad, flip and brightness augmentation (robust black box)");
  pre->add_option("--out", pre_out, "Checkpoint path (default <runs>/models/<arch>_s<seed>.ckpt)");

  // train
  Common tr_c;
  std::string tr_sub, tr_run;
  std::int64_t tr_resume = -1;
  int tr_log = 0;
  auto* tr = app.add_subcommand("train", "Train a generator for one target class");
  add_common(tr, tr_c);
  tr->add_option("--substitute", tr_sub, "Substitute classifier checkpoint");
  tr->add_option("--run", tr_run, "Run directory (default <runs>/train_<mode>_t<target>_s<seed>)");
  tr->add_option("--resume-from", tr_resume, "Continue from state_<iteration>.ckpt in the run directory");
  tr->add_option("--log-every", tr_log, "Progress line every N iterations");

  // evaluate
  Common ev_c;
  std::vector<std::string> ev_gens, ev_victims, ev_names;
  std::string ev_out, ev_protocol = "all_source", ev_role = "blackbox";
  bool ev_pert = false;
  int ev_topk = 0;
  auto* ev = app.add_subcommand("evaluate", "Transfer metrics of generators against victims");
  add_common(ev, ev_c);
  ev->add_option("--gen", ev_gens, "Generator checkpoint(s)")->required();
  ev->add_option("--victim", ev_victims, "Victim checkpoint(s)")->required();
  ev->add_option("--victim-name", ev_names, "Names for the victims (default: file stem)");
  ev->add_option("--role", ev_role, "Victim role")
      ->check(CLI::IsMember({"whitebox_substitute", "blackbox", "robust_blackbox", "topk_api"}));
  ev->add_option("--protocol", ev_protocol, "all_source or subset_source")
      ->check(CLI::IsMember({"all_source", "subset_source"}));
  ev->add_flag("--perturbation-only", ev_pert, "Feed only the rescaled perturbation to the victim");
  ev->add_option("--topk", ev_topk, "Simulated top-k API success (k >= 1)");
  ev->add_option("--out", ev_out, "Output directory (default: directory of the first generator)");

  // ablation
  Common ab_c;
  std::string ab_sub, ab_out;
  std::vector<std::string> ab_victims, ab_names;
  std::vector<int> ab_targets{0, 3, 7};
  std::vector<std::uint64_t> ab_seeds{0, 1};
  int ab_log = 0;
  auto* ab = app.add_subcommand("ablation", "Train and compare modes A, B and C");
  add_common(ab, ab_c);
  ab->add_option("--substitute", ab_sub, "Substitute classifier checkpoint")->required();
  ab->add_option("--victim", ab_victims, "Victim checkpoint(s)")->required();
  ab->add_option("--victim-name", ab_names, "Names for the victims");
  ab->add_option("--targets", ab_targets, "Target classes")->delimiter(',');
  ab->add_option("--seeds", ab_seeds, "Seeds")->delimiter(',');
  ab->add_option("--out", ab_out, "Output directory (default <runs>/ablation)");
  ab->add_option("--log-every", ab_log, "Progress line every N iterations");

  // bound
  Common bd_c;
  std::string bd_gen, bd_sub, bd_bb, bd_out;
  int bd_models = 0;
  auto* bd = app.add_subcommand("bound", "Measure the 0-1 bound terms for a generator");
  add_common(bd, bd_c);
  bd->add_option("--gen", bd_gen, "Generator checkpoint")->required();
  bd->add_option("--substitute", bd_sub, "Substitute classifier h_s")->required();
  bd->add_option("--blackbox", bd_bb, "Black-box classifier h_b")->required();
  bd->add_option("--n-models", bd_models, "Retrained classifiers for the discrepancy estimate (0 = skip)");
  bd->add_option("--out", bd_out, "CSV path (default bound_report.csv next to the generator)");

  // report
  std::string rep_run;
  auto* rep = app.add_subcommand("report", "Summaries and SVG charts for a run directory");
  rep->add_option("--run", rep_run, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (ds_make->parsed()) {
      Config cfg = load_config(ds_make_c);
      Dataset ds = load_dataset(cfg);
      int k = 0, ntr = 0, nte = 0, side = 0;
      check(m3d_dataset_info(ds.p, &k, &ntr, &nte, &side));
      std::printf("classes %d train %d test %d side %d\n", k, ntr, nte, side);
    } else if (ds_export->parsed()) {
      Config cfg = load_config(ds_export_c);
      Dataset ds = load_dataset(cfg);
      Lock l = lock_dir(export_root);
      check(m3d_dataset_export(ds.p, export_root.c_str()));
      std::printf("exported to %s\n", export_root.c_str());
    } else if (pre->parsed()) {
      Config cfg = load_config(pre_c);
      Dataset ds = load_dataset(cfg);
      if (pre_out.empty())
        pre_out = (fs::path(runs_root()) / "models" / (pre_arch + "_s" + std::to_string(pre_seed) + ".ckpt")).string();
      if (fs::path(pre_out).has_parent_path()) fs::create_directories(fs::path(pre_out).parent_path());
      Model m;
      double acc = 0;
      check(m3d_pretrain(cfg.p, ds.p, pre_arch.c_str(), pre_seed, pre_augment ? 1 : 0, &m.p, &acc));
      check(m3d_model_save(m.p, pre_out.c_str()));
      std::printf("%s test accuracy %.4f -> %s\n", pre_arch.c_str(), acc, pre_out.c_str());
    } else if (tr->parsed()) {
      Config cfg = load_config(tr_c);
      if (tr_run.empty())
        tr_run = (fs::path(runs_root()) / ("train_" + config_value(cfg, "mode") + "_t" +
                                           config_value(cfg, "target_class") + "_s" + config_value(cfg, "seed")))
                     .string();
      Dataset ds = load_dataset(cfg);
      Lock l = lock_dir(tr_run);
      if (tr_resume >= 0) {
        check(m3d_resume(cfg.p, ds.p, tr_run.c_str(), tr_resume, tr_log));
      } else {
        if (tr_sub.empty()) {
          std::cerr << "train: --substitute is required unless --resume-from is given\n";
          return kExitUsage;
        }
        Model sub = load_model(tr_sub);
        check(m3d_train(cfg.p, ds.p, sub.p, tr_run.c_str(), tr_log));
      }
      std::printf("run written to %s\n", tr_run.c_str());
    } else if (ev->parsed()) {
      Config cfg = load_config(ev_c);
      Dataset ds = load_dataset(cfg);
      const m3d_protocol proto = ev_protocol == "subset_source" ? M3D_PROTOCOL_SUBSET_SOURCE : M3D_PROTOCOL_ALL_SOURCE;
      std::vector<Model> victims;
      for (const auto& v : ev_victims) victims.push_back(load_model(v));
      if (ev_pert || ev_topk > 0) {
        const m3d_eval_kind kind = ev_pert ? M3D_EVAL_PERTURBATION_ONLY : M3D_EVAL_TOPK;
        for (const auto& g : ev_gens)
          for (std::size_t i = 0; i < victims.size(); ++i) {
            m3d_metrics m{};
            check(m3d_evaluate_one(cfg.p, ds.p, g.c_str(), victims[i].p, kind, proto, ev_topk, &m));
            std::printf("%s %s %s %.4f n=%d\n", stem(g).c_str(), stem(ev_victims[i]).c_str(),
                        ev_pert ? "perturbation_target_acc" : ("top" + std::to_string(ev_topk) + "_success").c_str(),
                        m.target_accuracy, m.n);
          }
        return 0;
      }
      if (ev_out.empty()) ev_out = fs::path(ev_gens.front()).parent_path().string();
      if (ev_out.empty()) ev_out = ".";
      std::vector<std::string> names = ev_names;
      for (std::size_t i = names.size(); i < ev_victims.size(); ++i) names.push_back(stem(ev_victims[i]));
      std::vector<const char*> gens, vnames;
      std::vector<const m3d_model*> vptr;
      for (const auto& g : ev_gens) gens.push_back(g.c_str());
      for (std::size_t i = 0; i < victims.size(); ++i) {
        vptr.push_back(victims[i].p);
        vnames.push_back(names[i].c_str());
      }
      m3d_victim_role role = M3D_ROLE_BLACKBOX;
      if (ev_role == "whitebox_substitute") role = M3D_ROLE_WHITEBOX_SUBSTITUTE;
      if (ev_role == "robust_blackbox") role = M3D_ROLE_ROBUST_BLACKBOX;
      if (ev_role == "topk_api") role = M3D_ROLE_TOPK_API;
      const std::vector<m3d_victim_role> roles(victims.size(), role);
      std::vector<m3d_metrics> means(victims.size());
      Lock l = lock_dir(ev_out);
      check(m3d_evaluate(cfg.p, ds.p, gens.data(), static_cast<int>(gens.size()), vptr.data(), vnames.data(),
                         roles.data(), static_cast<int>(vptr.size()), proto, ev_out.c_str(), means.data()));
      for (std::size_t i = 0; i < victims.size(); ++i)
        std::printf("%s target_acc %.4f err_rate %.4f\n", names[i].c_str(), means[i].target_accuracy,
                    means[i].error_rate);
      std::printf("metrics written to %s\n", (fs::path(ev_out) / "metrics.csv").string().c_str());
    } else if (ab->parsed()) {
      Config cfg = load_config(ab_c);
      Dataset ds = load_dataset(cfg);
      if (ab_out.empty()) ab_out = (fs::path(runs_root()) / "ablation").string();
      Model sub = load_model(ab_sub);
      std::vector<Model> victims;
      for (const auto& v : ab_victims) victims.push_back(load_model(v));
      std::vector<std::string> names = ab_names;
      for (std::size_t i = names.size(); i < ab_victims.size(); ++i) names.push_back(stem(ab_victims[i]));
      std::vector<const m3d_model*> vptr;
      std::vector<const char*> vnames;
      for (std::size_t i = 0; i < victims.size(); ++i) {
        vptr.push_back(victims[i].p);
        vnames.push_back(names[i].c_str());
      }
      Lock l = lock_dir(ab_out);
      check(m3d_ablation(cfg.p, ds.p, sub.p, vptr.data(), vnames.data(), static_cast<int>(vptr.size()),
                         ab_targets.data(), static_cast<int>(ab_targets.size()), ab_seeds.data(),
                         static_cast<int>(ab_seeds.size()), ab_out.c_str(), ab_log));
      std::printf("ablation table written to %s\n", (fs::path(ab_out) / "ablation.csv").string().c_str());
    } else if (bd->parsed()) {
      Config cfg = load_config(bd_c);
      Dataset ds = load_dataset(cfg);
      Model hs = load_model(bd_sub), hb = load_model(bd_bb);
      if (bd_out.empty()) bd_out = (fs::path(bd_gen).parent_path() / "bound_report.csv").string();
      m3d_bound_result r{};
      check(m3d_bound(cfg.p, ds.p, bd_gen.c_str(), hs.p, hb.p, bd_models, bd_out.c_str(), &r));
      std::printf("err_b %.4f <= err_s %.4f + disagreement %.4f (violations %d)\n", r.err_blackbox_to_target,
                  r.err_substitute_to_target, r.disagreement_sb, r.violations);
      if (r.max_pairwise_disagreement >= 0)
        std::printf("max sampled pairwise disagreement %.4f (lower estimate)\n", r.max_pairwise_disagreement);
    } else if (rep->parsed()) {
      Lock l = lock_dir(rep_run, false);
      char notes[4096];
      check(m3d_report(rep_run.c_str(), notes, sizeof notes, nullptr));
      std::fputs(notes, stdout);
      std::printf("report written to %s\n", rep_run.c_str());
    }
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Failure& f) {
    std::cerr << "error: " << m3d_status_string(f.status) << ": " << m3d_last_error() << "\n";
    return exit_code(f.status);
  }
  return 0;
}
