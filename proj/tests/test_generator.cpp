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
#include "m3d/generator.hpp"
#include "m3d/models.hpp"
#include "m3d/objectives.hpp"
#include "m3d/classifier.hpp"

using namespace m3d;
using m3d::testing::central_diff;
using m3d::testing::random_tensor;
using m3d::testing::rel_err;

namespace {

GeneratorArch small_arch(int side = 16, bool skip = true) {
  GeneratorArch a;
  a.base_width = 4;
  a.res_blocks = 1;
  a.side = side;
  a.input_skip = skip;
  return a;
}

Network<double> small_generator(std::uint64_t seed, int side = 16, bool skip = true) {
  std::mt19937_64 rng(seed);
  return recast<double>(make_generator(small_arch(side, skip), rng));
}

double adjacent_variation(const Tensor<double>& t) {
  double s = 0;
  int n = 0;
  for (int i = 0; i < t.n(); ++i)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x + 1 < t.w(); ++x, ++n) s += std::abs(t.at(i, c, y, x + 1) - t.at(i, c, y, x));
  return s / n;
}

}  // namespace

TEST_CASE("smoothing kernel is a normalised low-pass filter") {
  for (const char* desc : {"gaussian3", "gaussian5:1.5"}) {
    const SmoothingKernel k = SmoothingKernel::parse(desc);
    double sum = 0;
    for (double w : k.weights) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(SmoothingKernel::parse("none").weights.size() == 1);
  CHECK_THROWS(SmoothingKernel::parse("box7"));
}

TEST_CASE("smooth keeps constants and matches hand convolution") {
  const SmoothingKernel g = SmoothingKernel::parse("gaussian3");
  Tensor<double> c(2, 3, 8, 8);
  std::fill(c.data.begin(), c.data.end(), 0.37);
  for (double v : smooth(g, c).data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

  SmoothingKernel row;
  row.size = 3;
  row.weights = {0, 0, 0, 0.25, 0.5, 0.25, 0, 0, 0};
  Tensor<double> x(1, 1, 1, 3);
  x.data = {0, 1, 0};
  const Tensor<double> y = smooth(row, x);
  CHECK(y.data[0] == doctest::Approx(0.25));
  CHECK(y.data[1] == doctest::Approx(0.5));
  CHECK(y.data[2] == doctest::Approx(0.25));
}

TEST_CASE("smooth reduces adjacent-pixel variation") {
  const SmoothingKernel g = SmoothingKernel::parse("gaussian3");
  Tensor<double> board(1, 1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) board.at(0, 0, y, x) = ((x + y) % 2) ? 1.0 : -1.0;
  CHECK(adjacent_variation(smooth(g, board)) < adjacent_variation(board));

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto t = random_tensor({2, 3, 9, 7}, rng);
    CHECK(adjacent_variation(smooth(g, t)) <= adjacent_variation(t) + 1e-12);
  }
}

TEST_CASE("smooth_backward is the adjoint of smooth") {
  const SmoothingKernel g = SmoothingKernel::parse("gaussian5:1.5");
  std::mt19937_64 rng(4);
  const auto a = random_tensor({2, 3, 7, 6}, rng), b = random_tensor({2, 3, 7, 6}, rng);
  const auto sa = smooth(g, a), tb = smooth_backward(g, b);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lhs += sa.data[i] * b.data[i];
    rhs += a.data[i] * tb.data[i];
  }
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("projection examples") {
  Tensor<double> x(1, 1, 1, 2), s(1, 1, 1, 2);
  x.data = {0.5, 0.05};
  s.data = {0.9, -0.3};
  const Tensor<double> z = project(x, s, 0.1);
  CHECK(z.data[0] == doctest::Approx(0.6));
  CHECK(z.data[1] == 0.0);
  CHECK(std::abs(z.data[1] - x.data[1]) <= 0.1);

  const Tensor<double> z0 = project(x, s, 0.0);
  CHECK(z0.data == x.data);
  CHECK_THROWS_AS(project(x, s, -0.01), ValidationError);
}

TEST_CASE("projection is idempotent, monotone and within budget") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> eps_d(0.0, 0.3);
  for (int trial = 0; trial < 40; ++trial) {
    const double eps = eps_d(rng);
    const auto x = random_tensor({2, 3, 5, 5}, rng, 0, 1);
    const auto s1 = random_tensor({2, 3, 5, 5}, rng, -1, 2);
    auto s2 = s1;
    std::uniform_real_distribution<double> bump(0, 0.5);
    for (auto& v : s2.data) v += bump(rng);
    const auto z1 = project(x, s1, eps), z2 = project(x, s2, eps);
    const auto again = project(x, z1, eps);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::abs(z1.data[i] - x.data[i]) <= eps + 1e-12);
      CHECK(z1.data[i] >= 0.0);
      CHECK(z1.data[i] <= 1.0);
      CHECK(z1.data[i] <= z2.data[i]);
      CHECK(again.data[i] == z1.data[i]);
    }
  }
}

TEST_CASE("backbone preserves shape and rejects other sides") {
  auto gen = small_generator(1);
  std::mt19937_64 rng(2);
  const auto x = random_tensor({8, 3, 16, 16}, rng, 0, 1);
  const auto y = backbone_forward(gen, x);
  CHECK(y.shape == x.shape);
  CHECK_THROWS_AS(backbone_forward(gen, random_tensor({2, 3, 32, 32}, rng, 0, 1)), ShapeError);
  CHECK_THROWS_AS(backbone_forward(gen, random_tensor({2, 1, 16, 16}, rng, 0, 1)), ShapeError);
}

TEST_CASE("zero final layer leaves only the bias (plus the input skip)") {
  for (bool skip : {true, false}) {
    auto gen = small_generator(3, 16, skip);
    auto& w = gen.params[*gen.params.find("head.weight")];
    std::fill(w.values.begin(), w.values.end(), 0.0);
    auto& b = gen.params[*gen.params.find("head.bias")];
    b.values = {0.1, -0.2, 0.3};
    std::mt19937_64 rng(5);
    const auto x = random_tensor({2, 3, 16, 16}, rng, 0, 1);
    const auto y = backbone_forward(gen, x);
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 3; ++c)
        for (int yy = 0; yy < 16; ++yy)
          for (int xx = 0; xx < 16; ++xx)
            CHECK(y.at(i, c, yy, xx) - (skip ? x.at(i, c, yy, xx) : 0.0) == doctest::Approx(b.values[c]));
  }
}

TEST_CASE("backbone gradient matches central differences") {
  auto gen = small_generator(7);
  std::mt19937_64 rng(8);
  const auto x = random_tensor({2, 3, 16, 16}, rng, 0, 1);
  const auto r = random_tensor({2, 3, 16, 16}, rng);
  auto f = [&] {
    const auto y = backbone_forward(gen, x);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r.data[i] * y.data[i];
    return s;
  };
  Tape<double> tape;
  backbone_forward(gen, x, &tape);
  ParamSet<double> grads = gen.params.zeros_like();
  gen.backward(r, tape, &grads, false);
  std::uniform_int_distribution<int> pick_param(0, static_cast<int>(gen.params.size()) - 1);
  int checked = 0;
  double worst = 0;
  for (int trial = 0; trial < 40; ++trial) {
    auto& p = gen.params[pick_param(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, p.values.size() - 1);
    const std::size_t i = pick(rng);
    const double g = grads[*grads.find(p.name)].values[i];
    const double fd = central_diff(&p.values[i], f);
    if (rel_err(g, fd, 1e-5) > 1e-4) MESSAGE(p.name << " " << i << " an=" << g << " fd=" << fd);
    worst = std::max(worst, rel_err(g, fd, 1e-5));
    ++checked;
  }
  CHECK(checked >= 20);
  CHECK(worst < 1e-3);
}

TEST_CASE("end-to-end generator gradient matches central differences away from clip boundaries") {
  auto gen = small_generator(11);
  // Larger head weights so that the band and the [0,1] clip are both active.
  for (auto& v : gen.params[*gen.params.find("head.weight")].values) v *= 10;
  auto clf = recast<double>(build_network<float>(kArchCnnB, classifier_meta(10)));
  {
    std::mt19937_64 r(12);
    init_network(clf, r);
  }
  const SmoothingKernel k = SmoothingKernel::parse("gaussian3");
  const double eps = 16.0 / 255;
  std::mt19937_64 rng(13);
  const auto x = random_tensor({3, 3, 16, 16}, rng, 0, 1);
  const std::vector<int> target(3, 4);
  auto loss = [&] { return cross_entropy(classify(clf, generate(gen, k, x, eps).z), std::span<const int>(target)).value; };
  auto pass_mask = [&] {
    std::vector<std::uint8_t> pass;
    const auto s = smooth(k, backbone_forward(gen, x));
    project(x, s, eps, &pass);
    return pass;
  };

  GenerateTrace<double> trace;
  const auto z = generate_recorded(gen, k, x, eps, trace);
  std::size_t active = 0;
  for (auto p : trace.pass) active += p;
  CHECK(active > 0);
  CHECK(active < trace.pass.size());  // some coordinates are clipped
  Tape<double> ct;
  const auto logits = classify(clf, z, &ct);
  const auto lg = cross_entropy(logits, std::span<const int>(target));
  const auto gz = clf.backward(lg.grad_a, ct, nullptr, true);
  ParamSet<double> grads = gen.params.zeros_like();
  generate_backward(gen, k, trace, gz, grads);

  const auto base_mask = pass_mask();
  std::uniform_int_distribution<int> pick_param(0, static_cast<int>(gen.params.size()) - 1);
  int checked = 0;
  double worst = 0;
  const double h = 1e-6;
  for (int trial = 0; trial < 200 && checked < 30; ++trial) {
    auto& p = gen.params[pick_param(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, p.values.size() - 1);
    const std::size_t i = pick(rng);
    const double orig = p.values[i];
    p.values[i] = orig + h;
    const bool same_up = pass_mask() == base_mask;
    p.values[i] = orig - h;
    const bool same_down = pass_mask() == base_mask;
    p.values[i] = orig;
    if (!same_up || !same_down) continue;  // a clip boundary lies within the stencil
    const double g = grads[*grads.find(p.name)].values[i];
    worst = std::max(worst, rel_err(g, central_diff(&p.values[i], loss, h), 1e-5));
    ++checked;
  }
  CHECK(checked >= 20);
  CHECK(worst < 1e-3);
}

TEST_CASE("generate respects the budget and is a pure function") {
  std::mt19937_64 rng(17);
  GeneratorArch a = small_arch(32);
  auto gen = make_generator(a, rng);
  for (auto& v : gen.params[*gen.params.find("head.weight")].values) v *= 200;
  const SmoothingKernel k = SmoothingKernel::parse("gaussian3");
  const double eps = 16.0 / 255;
  double worst = 0;
  bool in_range = true;
  for (int chunk = 0; chunk < 4; ++chunk) {
    Tensor<float> x(250, 3, 32, 32);
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& v : x.data) v = u(rng);
    const auto adv = generate(gen, k, x, eps);
    worst = std::max(worst, adv.max_linf());
    for (float v : adv.z.data) in_range = in_range && v >= 0.0f && v <= 1.0f;
    if (chunk == 0) {
      const auto again = generate(gen, k, x, eps);
      CHECK(again.z.data == adv.z.data);
      CHECK(generate(gen, k, x, 0.0).z.data == x.data);
      CHECK(adv.source.get() != nullptr);
      CHECK(adv.epsilon == eps);
    }
  }
  CHECK(worst <= eps + 1e-6);
  CHECK(in_range);
}
