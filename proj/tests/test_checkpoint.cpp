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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "m3d/checkpoint.hpp"
#include "m3d/errors.hpp"
#include "m3d/generator.hpp"
#include "m3d/models.hpp"

using namespace m3d;
namespace fs = std::filesystem;

namespace {

Network<float> fresh(const std::string& arch, std::uint64_t seed) {
  Network<float> net = build_network<float>(arch, classifier_meta(10));
  std::mt19937_64 rng(seed);
  init_network(net, rng);
  return net;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary | std::ios::trunc) << s; }

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("m3d_test_ckpt_rt");
  const Network<float> a = fresh(kArchCnnA, 1);
  const auto p = (dir.path / "a.ckpt").string();
  save_checkpoint(a, p, {{"note", "two words"}});
  const Network<float> back = load_checkpoint(p, std::string(kArchCnnA));
  CHECK(back.arch_id == a.arch_id);
  CHECK(back.meta == a.meta);
  CHECK(back.params.checksum() == a.params.checksum());
  const Checkpoint raw = read_checkpoint(p);
  CHECK(raw.info.at("note") == "two words");
  CHECK(raw.info.count("created_at") == 1);

  GeneratorArch ga;
  ga.base_width = 8;
  ga.res_blocks = 1;
  std::mt19937_64 rng(3);
  const Network<float> g = make_generator(ga, rng);
  save_checkpoint(g, (dir.path / "g.ckpt").string());
  const Network<float> gb = load_checkpoint((dir.path / "g.ckpt").string());
  CHECK(gb.params.checksum() == g.params.checksum());
  CHECK(GeneratorArch::from_meta(gb.meta).base_width == 8);
}

TEST_CASE("truncated checkpoint is an integrity error") {
  TempDir dir("m3d_test_ckpt_trunc");
  const auto p = dir.path / "a.ckpt";
  save_checkpoint(fresh(kArchCnnB, 2), p.string());
  std::string bytes = slurp(p);
  bytes.resize(bytes.size() - 4);
  spit(p, bytes);
  CHECK_THROWS_AS(load_checkpoint(p.string()), IntegrityError);
}

TEST_CASE("checkpoint with the wrong architecture is refused") {
  TempDir dir("m3d_test_ckpt_arch");
  const auto p = (dir.path / "b.ckpt").string();
  save_checkpoint(fresh(kArchCnnB, 2), p);
  CHECK_THROWS_WITH_AS(load_checkpoint(p, std::string(kArchCnnA)), doctest::Contains("cnn_b"), ArchMismatchError);
}

TEST_CASE("corrupt checkpoint manifests are integrity errors") {
  TempDir dir("m3d_test_ckpt_manifest");
  const auto p = dir.path / "a.ckpt";
  save_checkpoint(fresh(kArchCnnA, 4), p.string());
  const std::string good = slurp(p);

  auto with = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    s.replace(at, from.size(), to);
    spit(p, s);
  };
  with("tensor ", "tensr ");
  CHECK_THROWS_AS(load_checkpoint(p.string()), IntegrityError);
  with("f32le", "f16le");
  CHECK_THROWS_AS(load_checkpoint(p.string()), IntegrityError);
  with("payload ", "payload 1");
  CHECK_THROWS_AS(load_checkpoint(p.string()), IntegrityError);
  spit(p, "garbage\n");
  CHECK_THROWS_AS(load_checkpoint(p.string()), IntegrityError);
  spit(p, good + "xxxx");
  CHECK_THROWS_AS(load_checkpoint(p.string()), IntegrityError);
  CHECK_THROWS_AS(load_checkpoint((dir.path / "missing.ckpt").string()), IoError);
}
