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

#include "m3d/models.hpp"

#include <cmath>
#include <memory>

namespace m3d {

int meta_int(const std::map<std::string, std::string>& meta, const std::string& key, int fallback) {
  auto it = meta.find(key);
  if (it == meta.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ConfigError("architecture meta '" + key + "' is not an integer: " + it->second);
  }
}

bool is_classifier_arch(const std::string& arch_id) { return arch_id == kArchCnnA || arch_id == kArchCnnB; }

std::vector<std::string> classifier_archs() { return {kArchCnnA, kArchCnnB}; }

std::map<std::string, std::string> classifier_meta(int num_classes, int channels) {
  return {{"num_classes", std::to_string(num_classes)}, {"channels", std::to_string(channels)}};
}

std::map<std::string, std::string> GeneratorArch::to_meta() const {
  return {{"base_width", std::to_string(base_width)},
          {"res_blocks", std::to_string(res_blocks)},
          {"input_skip", input_skip ? "1" : "0"},
          {"side", std::to_string(side)},
          {"channels", std::to_string(channels)}};
}

GeneratorArch GeneratorArch::from_meta(const std::map<std::string, std::string>& meta) {
  GeneratorArch a;
  a.base_width = meta_int(meta, "base_width", a.base_width);
  a.res_blocks = meta_int(meta, "res_blocks", a.res_blocks);
  a.input_skip = meta_int(meta, "input_skip", 1) != 0;
  a.side = meta_int(meta, "side", a.side);
  a.channels = meta_int(meta, "channels", a.channels);
  return a;
}

namespace {

template <typename T>
struct Builder {
  Network<T>& net;

  LayerPtr<T> conv(const std::string& name, int in, int out, int k, int stride) {
    int w = net.params.add(name + ".weight", {out, in, k, k});
    int b = net.params.add(name + ".bias", {out});
    return std::make_shared<Conv2d<T>>(in, out, k, stride, k / 2, w, b);
  }
  LayerPtr<T> norm(const std::string& name, int ch) {
    int g = net.params.add(name + ".gamma", {ch});
    int b = net.params.add(name + ".beta", {ch});
    return std::make_shared<InstanceNorm<T>>(ch, g, b);
  }
  LayerPtr<T> linear(const std::string& name, int in, int out) {
    int w = net.params.add(name + ".weight", {out, in});
    int b = net.params.add(name + ".bias", {out});
    return std::make_shared<Linear<T>>(in, out, w, b);
  }
};

template <typename T>
void build_classifier(Network<T>& net, const std::vector<int>& widths, int kernel) {
  Builder<T> b{net};
  const int classes = meta_int(net.meta, "num_classes", 10);
  int in = meta_int(net.meta, "channels", 3);
  if (classes < 2) throw ConfigError("classifier needs at least 2 classes");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    net.layers.push_back(b.conv("conv" + std::to_string(i + 1), in, widths[i], kernel, 1));
    net.layers.push_back(std::make_shared<Relu<T>>());
    net.layers.push_back(std::make_shared<MaxPool2<T>>());
    in = widths[i];
  }
  net.layers.push_back(std::make_shared<GlobalAvgPool<T>>());
  net.layers.push_back(b.linear("fc", in, classes));
}

template <typename T>
void build_generator(Network<T>& net) {
  Builder<T> b{net};
  const GeneratorArch a = GeneratorArch::from_meta(net.meta);
  if (a.side % 4 != 0) throw ConfigError("generator side must be divisible by 4");
  const int w = a.base_width, w2 = 2 * a.base_width;
  std::vector<LayerPtr<T>> body;
  body.push_back(b.conv("down1", a.channels, w, 3, 2));
  body.push_back(b.norm("down1.norm", w));
  body.push_back(std::make_shared<Relu<T>>());
  body.push_back(b.conv("down2", w, w2, 3, 2));
  body.push_back(b.norm("down2.norm", w2));
  body.push_back(std::make_shared<Relu<T>>());
  for (int r = 0; r < a.res_blocks; ++r) {
    const std::string p = "res" + std::to_string(r + 1);
    std::vector<LayerPtr<T>> inner;
    inner.push_back(b.conv(p + ".conv1", w2, w2, 3, 1));
    inner.push_back(b.norm(p + ".norm1", w2));
    inner.push_back(std::make_shared<Relu<T>>());
    inner.push_back(b.conv(p + ".conv2", w2, w2, 3, 1));
    inner.push_back(b.norm(p + ".norm2", w2));
    body.push_back(std::make_shared<Residual<T>>(std::move(inner)));
  }
  body.push_back(std::make_shared<Upsample2<T>>());
  body.push_back(b.conv("up1", w2, w, 3, 1));
  body.push_back(b.norm("up1.norm", w));
  body.push_back(std::make_shared<Relu<T>>());
  body.push_back(std::make_shared<Upsample2<T>>());
  body.push_back(b.conv("head", w, a.channels, 3, 1));
  if (a.input_skip)
    net.layers.push_back(std::make_shared<Residual<T>>(std::move(body)));
  else
    net.layers = std::move(body);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
Network<T> build_network(const std::string& arch_id, const std::map<std::string, std::string>& meta) {
  Network<T> net;
  net.arch_id = arch_id;
  net.meta = meta;
  if (arch_id == kArchCnnA)
    build_classifier(net, {16, 32, 64}, 5);
  else if (arch_id == kArchCnnB)
    build_classifier(net, {12, 24, 32, 48}, 3);
  else if (arch_id == kArchResGen)
    build_generator(net);
  else
    throw ConfigError("unknown architecture: " + arch_id);
  return net;
}

template <typename T>
void init_network(Network<T>& net, std::mt19937_64& rng) {
  for (auto& p : net.params) {
    if (ends_with(p.name, ".weight")) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < p.shape.size(); ++d) fan_in *= static_cast<std::size_t>(p.shape[d]);
      double std = std::sqrt(2.0 / static_cast<double>(fan_in));
      if (p.name == "fc.weight") std = std::sqrt(1.0 / static_cast<double>(fan_in));
      if (p.name == "head.weight") std *= 0.02;
      std::normal_distribution<double> dist(0.0, std);
      for (auto& v : p.values) v = static_cast<T>(dist(rng));
    } else if (ends_with(p.name, ".gamma")) {
      std::fill(p.values.begin(), p.values.end(), T(1));
    } else {
      std::fill(p.values.begin(), p.values.end(), T(0));
    }
  }
}

template Network<float> build_network<float>(const std::string&, const std::map<std::string, std::string>&);
template Network<double> build_network<double>(const std::string&, const std::map<std::string, std::string>&);
template void init_network<float>(Network<float>&, std::mt19937_64&);
template void init_network<double>(Network<double>&, std::mt19937_64&);

}  // namespace m3d
