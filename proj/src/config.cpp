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

#include "m3d/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace m3d {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::A_single_fixed: return "A_single_fixed";
    case Mode::B_ensemble: return "B_ensemble";
    case Mode::C_m3d: return "C_m3d";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "A_single_fixed" || s == "A") return Mode::A_single_fixed;
  if (s == "B_ensemble" || s == "B") return Mode::B_ensemble;
  if (s == "C_m3d" || s == "C") return Mode::C_m3d;
  throw ConfigError("mode must be one of A_single_fixed, B_ensemble, C_m3d; got '" + s + "'");
}

GeneratorArch AttackConfig::generator_arch() const {
  GeneratorArch a;
  a.base_width = gen_base_width;
  a.res_blocks = gen_res_blocks;
  a.input_skip = gen_input_skip;
  a.side = image_side;
  return a;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out))
    throw ConfigError("key '" + key + "': expected a real number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(AttackConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const AttackConfig&)>;

struct Field {
  const char* key;
  Setter set;
  Getter get;
};

#define M3D_INT(name)                                                                                           \
  Field{#name, [](AttackConfig& c, const std::string& k, const std::string& v) { c.name = static_cast<decltype(c.name)>(to_int(k, v)); }, \
        [](const AttackConfig& c) { return std::to_string(c.name); }}
#define M3D_REAL(name)                                                                                          \
  Field{#name, [](AttackConfig& c, const std::string& k, const std::string& v) { c.name = to_double(k, v); },  \
        [](const AttackConfig& c) { return fmt_real(c.name); }}
#define M3D_STR(name)                                                                                           \
  Field{#name, [](AttackConfig& c, const std::string&, const std::string& v) { c.name = v; },                  \
        [](const AttackConfig& c) { return c.name; }}
#define M3D_BOOL(name)                                                                                          \
  Field{#name, [](AttackConfig& c, const std::string& k, const std::string& v) { c.name = to_bool(k, v); },    \
        [](const AttackConfig& c) { return std::string(c.name ? "true" : "false"); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      M3D_INT(target_class),
      M3D_REAL(epsilon),
      Field{"mode", [](AttackConfig& c, const std::string&, const std::string& v) { c.mode = parse_mode(v); },
            [](const AttackConfig& c) { return to_string(c.mode); }},
      M3D_REAL(generator_lr),
      M3D_REAL(discriminator_lr),
      M3D_REAL(adam_beta1),
      M3D_REAL(adam_beta2),
      M3D_INT(batch_size),
      M3D_INT(train_iterations),
      Field{"seed",
            [](AttackConfig& c, const std::string& k, const std::string& v) {
              long long s = to_int(k, v);
              if (s < 0) throw ValidationError("seed must be >= 0, got " + v);
              c.seed = static_cast<std::uint64_t>(s);
            },
            [](const AttackConfig& c) { return std::to_string(c.seed); }},
      M3D_STR(dataset_id),
      M3D_STR(substitute_arch),
      M3D_STR(blackbox_arch),
      M3D_INT(num_classes),
      M3D_INT(image_side),
      M3D_INT(train_per_class),
      M3D_INT(test_per_class),
      M3D_INT(dataset_seed),
      M3D_STR(smoothing_kernel),
      M3D_INT(gen_base_width),
      M3D_INT(gen_res_blocks),
      M3D_BOOL(gen_input_skip),
      M3D_REAL(jitter_scale),
      Field{"discrepancy_space",
            [](AttackConfig& c, const std::string& k, const std::string& v) {
              if (v == "probability")
                c.discrepancy_space = DiscrepancySpace::probability;
              else if (v == "logit")
                c.discrepancy_space = DiscrepancySpace::logit;
              else
                throw ConfigError("key '" + k + "': expected probability|logit, got '" + v + "'");
            },
            [](const AttackConfig& c) {
              return std::string(c.discrepancy_space == DiscrepancySpace::logit ? "logit" : "probability");
            }},
      M3D_INT(d_steps_per_g_step),
      M3D_BOOL(reuse_adversaries),
      M3D_INT(checkpoint_every),
      M3D_INT(pretrain_epochs),
      M3D_REAL(pretrain_lr),
  };
  return f;
}

#undef M3D_INT
#undef M3D_REAL
#undef M3D_STR
#undef M3D_BOOL

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

void apply(AttackConfig& cfg, const std::string& key, const std::string& value, bool& have_eps) {
  if (key == "epsilon_255") {
    long long b = to_int(key, value);
    if (b <= 0 || b > 255) throw ValidationError("epsilon_255 must lie in [1, 255], got " + value);
    cfg.epsilon = static_cast<double>(b) / 255.0;
    have_eps = true;
    return;
  }
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  f->set(cfg, key, value);
  if (key == "epsilon") have_eps = true;
}

template <typename V>
void check_range(const char* name, V v, V lo, V hi) {
  if (v < lo || v > hi) {
    std::ostringstream os;
    os << name << " = " << v << " outside [" << lo << ", " << hi << "]";
    throw ValidationError(os.str());
  }
}

}  // namespace

ConfigEntries parse_config_text(const std::string& text) {
  ConfigEntries out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second) throw ConfigError("duplicate config key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

AttackConfig config_from_entries(const ConfigEntries& entries, const ConfigEntries& overrides) {
  std::set<std::string> seen;
  for (const auto& [k, v] : entries) seen.insert(k);
  if (seen.count("epsilon") && seen.count("epsilon_255"))
    throw ConfigError("config gives both 'epsilon' and 'epsilon_255'; use exactly one");

  AttackConfig cfg;
  bool have_eps = false;
  for (const auto& [k, v] : entries) apply(cfg, k, v, have_eps);
  for (const auto& [k, v] : overrides) {
    apply(cfg, k, v, have_eps);
    seen.insert(k);
  }
  if (!seen.count("target_class")) throw ConfigError("missing required key 'target_class'");
  if (!have_eps) throw ConfigError("missing required key 'epsilon' (or 'epsilon_255')");
  validate(cfg);
  return cfg;
}

AttackConfig load_config(const std::string& path, const ConfigEntries& overrides) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_entries(parse_config_text(ss.str()), overrides);
}

void validate(const AttackConfig& c) {
  if (!(c.epsilon > 0 && c.epsilon <= 1))
    throw ValidationError("epsilon = " + fmt_real(c.epsilon) + " outside (0, 1]");
  check_range("num_classes", c.num_classes, 2, 100000);
  check_range("target_class", c.target_class, 0, c.num_classes - 1);
  check_range("generator_lr", c.generator_lr, 1e-12, 1.0);
  check_range("discriminator_lr", c.discriminator_lr, 1e-12, 1.0);
  check_range("adam_beta1", c.adam_beta1, 0.0, 0.999999);
  check_range("adam_beta2", c.adam_beta2, 0.0, 0.999999);
  check_range("batch_size", c.batch_size, 1, 1 << 20);
  check_range("train_iterations", c.train_iterations, 0, 1 << 30);
  check_range("image_side", c.image_side, 16, 4096);
  if (c.image_side % 4 != 0) throw ValidationError("image_side must be divisible by 4");
  check_range("train_per_class", c.train_per_class, 1, 1 << 24);
  check_range("test_per_class", c.test_per_class, 1, 1 << 24);
  check_range("gen_base_width", c.gen_base_width, 1, 4096);
  check_range("gen_res_blocks", c.gen_res_blocks, 0, 64);
  check_range("jitter_scale", c.jitter_scale, 0.0, 100.0);
  check_range("d_steps_per_g_step", c.d_steps_per_g_step, 1, 1000);
  check_range("checkpoint_every", c.checkpoint_every, 1, 1 << 30);
  check_range("pretrain_epochs", c.pretrain_epochs, 0, 100000);
  check_range("pretrain_lr", c.pretrain_lr, 1e-12, 1.0);
  if (!is_classifier_arch(c.substitute_arch)) throw ValidationError("unknown substitute_arch '" + c.substitute_arch + "'");
  if (!is_classifier_arch(c.blackbox_arch)) throw ValidationError("unknown blackbox_arch '" + c.blackbox_arch + "'");
  if (c.smoothing_kernel != "none" && c.smoothing_kernel.rfind("gaussian", 0) != 0)
    throw ValidationError("smoothing_kernel must be 'none' or 'gaussian<k>[:sigma]'");
}

std::string serialize(const AttackConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::string config_hash(const AttackConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : serialize(cfg)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.emplace_back(f.key);
  k.emplace_back("epsilon_255");
  return k;
}

}  // namespace m3d
