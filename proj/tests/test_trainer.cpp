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
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "m3d/checkpoint.hpp"
#include "m3d/classifier.hpp"
#include "m3d/errors.hpp"
#include "m3d/models.hpp"
#include "m3d/rng.hpp"
#include "m3d/trainer.hpp"

using namespace m3d;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  AttackConfig cfg;
  DatasetSplits data;
  Network<float> substitute;
  SmoothingKernel kernel;

  explicit Fixture(Mode mode) {
    cfg.target_class = 1;
    cfg.epsilon = 16.0 / 255;
    cfg.mode = mode;
    cfg.num_classes = 3;
    cfg.image_side = 16;
    cfg.train_per_class = 16;
    cfg.test_per_class = 4;
    cfg.batch_size = 8;
    cfg.gen_base_width = 8;
    cfg.gen_res_blocks = 1;
    cfg.train_iterations = 20;
    cfg.checkpoint_every = 10;
    cfg.seed = 5;
    data = load_splits(cfg);
    substitute = build_network<float>(kArchCnnA, classifier_meta(3));
    std::mt19937_64 rng(11);
    init_network(substitute, rng);
    kernel = SmoothingKernel::parse(cfg.smoothing_kernel);
  }

  ImageBatch batch(std::int64_t k) const {
    BatchStream s(data.train, cfg.batch_size, derive_seed(cfg.seed, "shuffle"));
    return s.batch(k);
  }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Reference generator update: one Adam step on L_a + w * L_d with the
// discriminators frozen.
std::uint64_t reference_generator_step(const TrainState& s, const ImageBatch& b, const AttackConfig& cfg,
                                       const SmoothingKernel& k, float w) {
  Network<float> g = s.generator;
  Adam<float> opt = s.generator_opt;
  GenerateTrace<float> trace;
  const Tensor<float> z = generate_recorded(g, k, b.images, cfg.epsilon, trace);
  Tape<float> t1, t2;
  const Tensor<float> l1 = classify(s.d1, z, &t1), l2 = classify(s.d2, z, &t2);
  const LossGrad<float> la = attack_loss(l1, l2, cfg.target_class);
  const LossGrad<float> ld = discrepancy_loss(l1, l2);
  Tensor<float> ga = la.grad_a, gb = la.grad_b;
  for (std::size_t i = 0; i < ga.size(); ++i) {
    ga.data[i] += w * ld.grad_a.data[i];
    gb.data[i] += w * ld.grad_b.data[i];
  }
  Tensor<float> gz = s.d1.backward(ga, t1, nullptr, true);
  const Tensor<float> gz2 = s.d2.backward(gb, t2, nullptr, true);
  for (std::size_t i = 0; i < gz.size(); ++i) gz.data[i] += gz2.data[i];
  ParamSet<float> grads = g.params.zeros_like();
  generate_backward(g, k, trace, gz, grads);
  opt.step(g.params, grads);
  return g.params.checksum();
}

}  // namespace

TEST_CASE("zero iterations leave the initial state untouched") {
  Fixture f(Mode::C_m3d);
  f.cfg.train_iterations = 0;
  TempDir dir("m3d_test_train_zero");
  const TrainState init = init_train_state(f.cfg, f.substitute);
  const TrainResult r = train(f.cfg, f.data.train, f.substitute, dir.path.string());
  CHECK(r.state.iteration == 0);
  CHECK(r.state.loss_history.empty());
  CHECK(r.state.generator.params.checksum() == init.generator.params.checksum());
  CHECK(r.state.d1.params.checksum() == init.d1.params.checksum());
  CHECK(r.state.d2.params.checksum() == init.d2.params.checksum());
}

TEST_CASE("mode A keeps its single discriminator frozen") {
  Fixture f(Mode::A_single_fixed);
  TrainState s = init_train_state(f.cfg, f.substitute);
  CHECK_FALSE(s.has_d2());
  const auto d1 = s.d1.params.checksum(), g0 = s.generator.params.checksum();
  TrainOptions opt;
  opt.check_isolation = true;
  for (int k = 0; k < 100; ++k) {
    const LossBundle b = train_step(s, f.batch(k), f.cfg, f.kernel, opt);
    CHECK(b.l_d == 0);
  }
  CHECK(s.d1.params.checksum() == d1);
  CHECK(s.generator.params.checksum() != g0);
  CHECK(s.iteration == 100);
}

TEST_CASE("alternation isolation holds in the two-discriminator modes") {
  for (Mode m : {Mode::B_ensemble, Mode::C_m3d}) {
    Fixture f(m);
    TrainState s = init_train_state(f.cfg, f.substitute);
    TrainOptions opt;
    opt.check_isolation = true;
    for (int k = 0; k < 5; ++k) CHECK_NOTHROW(train_step(s, f.batch(k), f.cfg, f.kernel, opt));
  }
}

TEST_CASE("mode B logs L_d but never trains on it") {
  Fixture f(Mode::B_ensemble);
  TrainState s = init_train_state(f.cfg, f.substitute);
  const ImageBatch b = f.batch(0);
  const auto without_ld = reference_generator_step(s, b, f.cfg, f.kernel, 0.0f);
  const auto with_ld = reference_generator_step(s, b, f.cfg, f.kernel, 1.0f);
  REQUIRE(without_ld != with_ld);

  TrainState c = s;
  AttackConfig ccfg = f.cfg;
  ccfg.mode = Mode::C_m3d;
  const LossBundle lb = train_step(s, b, f.cfg, f.kernel);
  train_step(c, b, ccfg, f.kernel);
  CHECK(lb.l_d > 0);
  CHECK(s.generator.params.checksum() == without_ld);
  CHECK(c.generator.params.checksum() == with_ld);
  // The discriminator phases differ as well.
  CHECK(s.d1.params.checksum() != c.d1.params.checksum());
}

TEST_CASE("identical discriminators cannot separate") {
  Fixture f(Mode::C_m3d);
  f.cfg.jitter_scale = 0;
  TrainState s = init_train_state(f.cfg, f.substitute);
  double worst = 0;
  for (int k = 0; k < 50; ++k) worst = std::max(worst, train_step(s, f.batch(k), f.cfg, f.kernel).l_d);
  CHECK(worst < 1e-6);
  CHECK(s.d1.params.checksum() == s.d2.params.checksum());
}

TEST_CASE("training never touches the substitute or a black box") {
  Fixture f(Mode::A_single_fixed);
  Network<float> blackbox = build_network<float>(kArchCnnB, classifier_meta(3));
  std::mt19937_64 rng(12);
  init_network(blackbox, rng);
  const auto bb = blackbox.params.checksum(), sub = f.substitute.params.checksum();
  for (Mode m : {Mode::A_single_fixed, Mode::C_m3d}) {
    f.cfg.mode = m;
    TempDir dir("m3d_test_train_quarantine");
    train(f.cfg, f.data.train, f.substitute, dir.path.string());
  }
  CHECK(blackbox.params.checksum() == bb);
  CHECK(f.substitute.params.checksum() == sub);
}

TEST_CASE("equal seeds give bit-identical loss traces") {
  Fixture f(Mode::C_m3d);
  TempDir a("m3d_test_train_det_a"), b("m3d_test_train_det_b"), c("m3d_test_train_det_c");
  const TrainResult ra = train(f.cfg, f.data.train, f.substitute, a.path.string());
  const TrainResult rb = train(f.cfg, f.data.train, f.substitute, b.path.string());
  CHECK(slurp(a.path / "losses.csv") == slurp(b.path / "losses.csv"));
  CHECK(ra.state.generator.params.checksum() == rb.state.generator.params.checksum());
  f.cfg.seed = 6;
  train(f.cfg, f.data.train, f.substitute, c.path.string());
  CHECK(slurp(a.path / "losses.csv") != slurp(c.path / "losses.csv"));
}

TEST_CASE("resume continues the uninterrupted trace") {
  Fixture f(Mode::C_m3d);
  TempDir full("m3d_test_train_full"), part("m3d_test_train_part");
  const TrainResult whole = train(f.cfg, f.data.train, f.substitute, full.path.string());
  CHECK(fs::exists(full.path / "gen_10.ckpt"));
  CHECK(fs::exists(full.path / "d1_10.ckpt"));
  CHECK(fs::exists(full.path / "gen_final.ckpt"));

  AttackConfig shorter = f.cfg;
  shorter.train_iterations = 15;
  train(shorter, f.data.train, f.substitute, part.path.string());
  const TrainResult resumed = resume_training(f.cfg, f.data.train, part.path.string(), 10);
  CHECK(resumed.state.iteration == 20);
  CHECK(slurp(part.path / "losses.csv") == slurp(full.path / "losses.csv"));
  CHECK(resumed.state.generator.params.checksum() == whole.state.generator.params.checksum());
  CHECK(resumed.state.d2.params.checksum() == whole.state.d2.params.checksum());
}

TEST_CASE("train state checkpoints round trip") {
  Fixture f(Mode::C_m3d);
  TrainState s = init_train_state(f.cfg, f.substitute);
  for (int k = 0; k < 3; ++k) train_step(s, f.batch(k), f.cfg, f.kernel);
  TempDir dir("m3d_test_train_state");
  fs::create_directories(dir.path);
  const auto p = (dir.path / "state.ckpt").string();
  save_train_state(s, p);
  TrainState back = load_train_state(p, f.cfg);
  CHECK(back.iteration == 3);
  CHECK(back.generator.params.checksum() == s.generator.params.checksum());
  CHECK(back.d1.params.checksum() == s.d1.params.checksum());
  train_step(s, f.batch(3), f.cfg, f.kernel);
  train_step(back, f.batch(3), f.cfg, f.kernel);
  CHECK(back.generator.params.checksum() == s.generator.params.checksum());
  CHECK(back.d2.params.checksum() == s.d2.params.checksum());
}

TEST_CASE("non-finite losses abort with a parameter table") {
  Fixture f(Mode::C_m3d);
  TrainState s = init_train_state(f.cfg, f.substitute);
  s.d1.params[static_cast<int>(s.d1.params.size()) - 1].values[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(train_step(s, f.batch(0), f.cfg, f.kernel), doctest::Contains("iteration 0"), DivergenceError);
}

TEST_CASE("wrong substitute is refused") {
  Fixture f(Mode::C_m3d);
  f.cfg.substitute_arch = kArchCnnB;
  CHECK_THROWS_AS(init_train_state(f.cfg, f.substitute), ArchMismatchError);
}

TEST_CASE("modes B and C reach different generators") {
  Fixture b(Mode::B_ensemble), c(Mode::C_m3d);
  TempDir db("m3d_test_train_b"), dc("m3d_test_train_c");
  const auto rb = train(b.cfg, b.data.train, b.substitute, db.path.string());
  const auto rc = train(c.cfg, c.data.train, c.substitute, dc.path.string());
  CHECK(rb.state.generator.params.checksum() != rc.state.generator.params.checksum());
}

TEST_CASE("discrepancy rises in the discriminator phase") {
  Fixture f(Mode::C_m3d);
  TrainState s = init_train_state(f.cfg, f.substitute);
  double after_g = 0, after_d = 0;
  for (int k = 0; k < 500; ++k) {
    StepProbe p;
    train_step(s, f.batch(k), f.cfg, f.kernel, {}, &p);
    after_g += p.ld_after_g_phase;
    after_d += p.ld_after_d_phase;
  }
  CHECK(after_d / 500 > after_g / 500);
}
