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

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "m3d/m3d.h"

namespace fs = std::filesystem;

namespace {

const char* kTinyConfig =
    "target_class = 1\n"
    "epsilon_255 = 16\n"
    "num_classes = 3\n"
    "image_side = 16\n"
    "train_per_class = 8\n"
    "test_per_class = 4\n"
    "batch_size = 4\n"
    "gen_base_width = 8\n"
    "gen_res_blocks = 1\n"
    "train_iterations = 4\n"
    "checkpoint_every = 2\n"
    "pretrain_epochs = 1\n";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

struct Env {
  m3d_config* cfg = nullptr;
  m3d_dataset* ds = nullptr;
  Env() {
    REQUIRE(m3d_config_parse(kTinyConfig, nullptr, 0, &cfg) == M3D_OK);
    REQUIRE(m3d_dataset_load(cfg, &ds) == M3D_OK);
  }
  ~Env() {
    m3d_dataset_free(ds);
    m3d_config_free(cfg);
  }
};

}  // namespace

TEST_CASE("version and status strings") {
  CHECK(std::strlen(m3d_version()) > 0);
  CHECK(std::string(m3d_status_string(M3D_OK)) == "ok");
  CHECK(std::string(m3d_status_string(M3D_E_INTEGRITY)).size() > 0);
}

TEST_CASE("config parse, query and errors") {
  m3d_config* cfg = nullptr;
  const char* ov[] = {"seed=7"};
  REQUIRE(m3d_config_parse(kTinyConfig, ov, 1, &cfg) == M3D_OK);
  char buf[64];
  size_t needed = 0;
  CHECK(m3d_config_get(cfg, "seed", buf, sizeof buf, &needed) == M3D_OK);
  CHECK(std::string(buf) == "7");
  CHECK(m3d_config_get(cfg, "bogus", buf, sizeof buf, nullptr) == M3D_E_CONFIG);
  char tiny[4];
  CHECK(m3d_config_serialize(cfg, tiny, sizeof tiny, &needed) == M3D_E_INVALID_ARGUMENT);
  CHECK(needed > sizeof tiny);
  std::string full(needed, '\0');
  CHECK(m3d_config_serialize(cfg, full.data(), full.size(), nullptr) == M3D_OK);
  CHECK(full.find("seed = 7") != std::string::npos);
  char hash[32];
  CHECK(m3d_config_hash(cfg, hash, sizeof hash) == M3D_OK);
  CHECK(std::strlen(hash) == 16);
  m3d_config_free(cfg);

  m3d_config* bad = nullptr;
  CHECK(m3d_config_parse("target_class = 1\nepsilon = 3\n", nullptr, 0, &bad) == M3D_E_VALIDATION);
  CHECK(bad == nullptr);
  CHECK(std::string(m3d_last_error()).find("epsilon") != std::string::npos);
  CHECK(m3d_config_parse("epsilon = 0.1\n", nullptr, 0, &bad) == M3D_E_CONFIG);
  CHECK(m3d_config_parse(nullptr, nullptr, 0, &bad) == M3D_E_INVALID_ARGUMENT);
  CHECK(m3d_config_load("/nonexistent/m3d.cfg", nullptr, 0, &bad) == M3D_E_IO);
}

TEST_CASE("dataset, pretraining and model round trip") {
  Env env;
  int k = 0, ntr = 0, nte = 0, side = 0;
  CHECK(m3d_dataset_info(env.ds, &k, &ntr, &nte, &side) == M3D_OK);
  CHECK(k == 3);
  CHECK(ntr == 24);
  CHECK(nte == 12);
  CHECK(side == 16);

  m3d_model* sub = nullptr;
  double acc = -1;
  REQUIRE(m3d_pretrain(env.cfg, env.ds, "cnn_a", 3, 0, &sub, &acc) == M3D_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  double again = -1;
  CHECK(m3d_model_accuracy(sub, env.ds, &again) == M3D_OK);
  CHECK(again == acc);

  TempDir dir("m3d_capi_model");
  CHECK(m3d_model_save(sub, (dir / "a.ckpt").c_str()) == M3D_OK);
  m3d_model* back = nullptr;
  REQUIRE(m3d_model_load((dir / "a.ckpt").c_str(), "cnn_a", &back) == M3D_OK);
  uint64_t c1 = 0, c2 = 0;
  m3d_model_checksum(sub, &c1);
  m3d_model_checksum(back, &c2);
  CHECK(c1 == c2);
  char arch[16];
  CHECK(m3d_model_arch(back, arch, sizeof arch, nullptr) == M3D_OK);
  CHECK(std::string(arch) == "cnn_a");
  m3d_model* wrong = nullptr;
  CHECK(m3d_model_load((dir / "a.ckpt").c_str(), "cnn_b", &wrong) == M3D_E_ARCH_MISMATCH);
  CHECK(m3d_model_load((dir / "missing.ckpt").c_str(), nullptr, &wrong) == M3D_E_IO);
  CHECK(m3d_pretrain(env.cfg, env.ds, "cnn_z", 3, 0, &wrong, nullptr) != M3D_OK);
  m3d_model_free(back);
  m3d_model_free(sub);
}

TEST_CASE("train, resume, evaluate, bound and report through the C API") {
  Env env;
  m3d_model* sub = nullptr;
  m3d_model* bb = nullptr;
  REQUIRE(m3d_pretrain(env.cfg, env.ds, "cnn_a", 1, 0, &sub, nullptr) == M3D_OK);
  REQUIRE(m3d_pretrain(env.cfg, env.ds, "cnn_b", 2, 1, &bb, nullptr) == M3D_OK);
  uint64_t bb_before = 0, bb_after = 0;
  m3d_model_checksum(bb, &bb_before);

  TempDir dir("m3d_capi_run");
  const std::string run = dir / "run";
  fs::create_directories(run);
  REQUIRE(m3d_train(env.cfg, env.ds, sub, run.c_str(), 0) == M3D_OK);
  CHECK(fs::exists(dir.path / "run" / "gen_final.ckpt"));
  CHECK(fs::exists(dir.path / "run" / "gen_2.ckpt"));
  CHECK(fs::exists(dir.path / "run" / "manifest.json"));
  CHECK(m3d_resume(env.cfg, env.ds, run.c_str(), 2, 0) == M3D_OK);
  CHECK(m3d_resume(env.cfg, env.ds, run.c_str(), 3, 0) == M3D_E_IO);

  const std::string gen = dir / "run/gen_final.ckpt";
  m3d_metrics m{};
  CHECK(m3d_evaluate_one(env.cfg, env.ds, gen.c_str(), bb, M3D_EVAL_TRANSFER, M3D_PROTOCOL_ALL_SOURCE, 0, &m) ==
        M3D_OK);
  CHECK(m.n == 8);
  CHECK(m.target_accuracy <= m.error_rate);
  m3d_metrics top{};
  CHECK(m3d_evaluate_one(env.cfg, env.ds, gen.c_str(), bb, M3D_EVAL_TOPK, M3D_PROTOCOL_ALL_SOURCE, 3, &top) == M3D_OK);
  CHECK(top.target_accuracy == 1.0);
  CHECK(m3d_evaluate_one(env.cfg, env.ds, gen.c_str(), bb, M3D_EVAL_TOPK, M3D_PROTOCOL_ALL_SOURCE, 9, &top) ==
        M3D_E_VALIDATION);

  const char* gens[] = {gen.c_str()};
  const m3d_model* victims[] = {bb, sub};
  const char* names[] = {"cnn_b", "cnn_a"};
  const m3d_victim_role roles[] = {M3D_ROLE_BLACKBOX, M3D_ROLE_WHITEBOX_SUBSTITUTE};
  m3d_metrics means[2];
  const std::string eval = dir / "eval";
  CHECK(m3d_evaluate(env.cfg, env.ds, gens, 1, victims, names, roles, 2, M3D_PROTOCOL_ALL_SOURCE, eval.c_str(),
                     means) == M3D_OK);
  CHECK(means[0].target_accuracy == m.target_accuracy);
  CHECK(fs::exists(dir.path / "eval" / "metrics.csv"));

  m3d_bound_result b{};
  CHECK(m3d_bound(env.cfg, env.ds, gen.c_str(), sub, bb, 0, nullptr, &b) == M3D_OK);
  CHECK(b.violations == 0);
  CHECK(b.err_blackbox_to_target <= b.err_substitute_to_target + b.disagreement_sb + 1e-12);
  CHECK(b.max_pairwise_disagreement == -1);

  char notes[512];
  CHECK(m3d_report(eval.c_str(), notes, sizeof notes, nullptr) == M3D_OK);
  CHECK(fs::exists(dir.path / "eval" / "transfer_bars.svg"));
  CHECK(m3d_report((dir / "nothing").c_str(), notes, sizeof notes, nullptr) == M3D_E_IO);

  m3d_model_checksum(bb, &bb_after);
  CHECK(bb_before == bb_after);
  m3d_model_free(bb);
  m3d_model_free(sub);
}

TEST_CASE("run directory locks are exclusive") {
  TempDir dir("m3d_capi_lock");
  m3d_lock* a = nullptr;
  m3d_lock* b = nullptr;
  REQUIRE(m3d_lock_acquire(dir.path.c_str(), &a) == M3D_OK);
  CHECK(m3d_lock_acquire(dir.path.c_str(), &b) == M3D_E_IO);
  m3d_lock_release(a);
  CHECK(m3d_lock_acquire(dir.path.c_str(), &b) == M3D_OK);
  m3d_lock_release(b);
  CHECK(m3d_lock_acquire((dir / "absent").c_str(), &a) == M3D_E_IO);
  CHECK_FALSE(fs::exists(dir.path / "absent"));
}

#ifdef M3D_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(M3D_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("command line exit codes") {
  TempDir dir("m3d_cli_codes");
  const std::string cfg = dir / "tiny.cfg";
  std::ofstream(cfg) << kTinyConfig;
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("train --no-such-flag") == 2);
  CHECK(run_cli("dataset make --config " + cfg) == 0);
  CHECK(run_cli("dataset export --config " + cfg + " --out " + (dir / "data")) == 0);
  CHECK(fs::exists(dir.path / "data" / "train"));
  CHECK(run_cli("dataset make --config " + cfg + " --set epsilon_255=300") == 3);
  CHECK(run_cli("dataset make --config " + cfg + " --set bogus=1") == 3);
  CHECK(run_cli("pretrain --config " + cfg + " --arch cnn_a --seed 1 --out " + (dir / "a.ckpt")) == 0);
  CHECK(run_cli("train --config " + cfg + " --substitute " + (dir / "a.ckpt") + " --run " + (dir / "run")) == 0);
  CHECK(fs::exists(dir.path / "run" / "losses.csv"));
  CHECK(run_cli("train --config " + cfg + " --substitute " + (dir / "missing.ckpt") + " --run " + (dir / "r2")) == 1);
  CHECK(run_cli("evaluate --config " + cfg + " --gen " + (dir / "run/gen_final.ckpt") + " --victim " +
                (dir / "a.ckpt") + " --out " + (dir / "eval")) == 0);
  CHECK(fs::exists(dir.path / "eval" / "metrics.csv"));
  CHECK(run_cli("report --run " + (dir / "eval")) == 0);
  CHECK(fs::exists(dir.path / "eval" / "summary.csv"));
  CHECK(run_cli("report --run " + (dir / "absent")) == 1);
  CHECK_FALSE(fs::exists(dir.path / "absent"));
}
#endif
