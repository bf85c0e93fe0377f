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

#include "m3d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <random>

#include "m3d/config.hpp"
#include "m3d/image_io.hpp"
#include "m3d/rng.hpp"

namespace fs = std::filesystem;

namespace m3d {

std::vector<int> LabeledDataset::indices_of_class(int c) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (labels[i] == c) out.push_back(i);
  return out;
}

namespace {

constexpr int kShapes = 5;
constexpr double kAlphaLo = 0.4, kAlphaHi = 0.55, kTex = 0.03;
constexpr double kPi = 3.14159265358979323846;

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6), f = h * 6 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: rgb[0] = v, rgb[1] = t, rgb[2] = p; break;
    case 1: rgb[0] = q, rgb[1] = v, rgb[2] = p; break;
    case 2: rgb[0] = p, rgb[1] = v, rgb[2] = t; break;
    case 3: rgb[0] = p, rgb[1] = q, rgb[2] = v; break;
    case 4: rgb[0] = t, rgb[1] = p, rgb[2] = v; break;
    default: rgb[0] = v, rgb[1] = p, rgb[2] = q; break;
  }
}

bool inside_shape(int shape, double u, double v) {
  switch (shape) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return std::max(std::abs(u), std::abs(v)) <= 0.8;
    case 2: return v >= -0.65 && v <= 0.95 - 1.75 * std::abs(u);
    case 3: return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
    default: {
      const double r = std::sqrt(u * u + v * v);
      return r >= 0.55 && r <= 1.0;
    }
  }
}

void render(float* img, int side, int label, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const std::size_t plane = static_cast<std::size_t>(side) * side;

  // Background: tinted grey with a linear gradient and pixel texture.
  const double base = 0.3 + 0.4 * U(rng);
  double tint[3];
  for (double& t : tint) t = (U(rng) - 0.5) * 0.12;
  const double ang = 2 * kPi * U(rng), amp = 0.15 * U(rng);
  const double gx = std::cos(ang) * amp, gy = std::sin(ang) * amp;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double g = base + gx * (x / double(side) - 0.5) + gy * (y / double(side) - 0.5);
      const double tex = (U(rng) - 0.5) * kTex;
      for (int c = 0; c < 3; ++c) img[c * plane + y * side + x] = static_cast<float>(g + tint[c] + tex);
    }

  // Foreground shape.
  const int shape = label % kShapes;
  const int family = label / kShapes;
  const double hue = (family * kShapes + shape) * 0.618034 + (U(rng) - 0.5) * 0.06;
  double rgb[3];
  hsv_to_rgb(hue, 0.55 + 0.35 * U(rng), 0.55 + 0.4 * U(rng), rgb);
  const double mean_rgb = (rgb[0] + rgb[1] + rgb[2]) / 3;
  const double radius = side * (0.22 + 0.12 * U(rng));
  const double cx = side * (0.32 + 0.36 * U(rng)), cy = side * (0.32 + 0.36 * U(rng));
  const double rot = (U(rng) - 0.5) * 0.6;
  // Zero-mean chroma offset plus a small lift: class evidence is a few budget
  // units deep so targeted perturbations can overwrite it.
  const double alpha = kAlphaLo + (kAlphaHi - kAlphaLo) * U(rng);
  const double cr = std::cos(rot), sr = std::sin(rot);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double dx = (x + 0.5 - cx) / radius, dy = (y + 0.5 - cy) / radius;
      const double u = cr * dx + sr * dy, v = -sr * dx + cr * dy;
      if (!inside_shape(shape, u, v)) continue;
      const double shade = (U(rng) - 0.5) * 0.06;
      for (int c = 0; c < 3; ++c) {
        float& px = img[c * plane + y * side + x];
        px = static_cast<float>(px + alpha * (rgb[c] - mean_rgb) + 0.06 + shade);
      }
    }

  for (std::size_t i = 0; i < 3 * plane; ++i) img[i] = std::clamp(img[i], 0.0f, 1.0f);
}

}  // namespace

LabeledDataset make_synthetic_dataset(int num_classes, int per_class, int side, std::uint64_t seed) {
  if (num_classes < 2) throw ValidationError("synthetic dataset needs at least 2 classes, got " + std::to_string(num_classes));
  if (side < 16) throw ValidationError("synthetic dataset side must be >= 16, got " + std::to_string(side));
  if (per_class < 1) throw ValidationError("per_class must be >= 1");
  LabeledDataset ds;
  ds.num_classes = num_classes;
  const int n = num_classes * per_class;
  ds.images = Tensor<float>(n, 3, side, side);
  ds.labels.resize(n);
  ds.sample_ids.resize(n);
  for (int c = 0; c < num_classes; ++c) ds.class_names.push_back("class_" + std::string(c < 10 ? "0" : "") + std::to_string(c));
  const RngSet rngs = seed_all(seed);
  // Interleave classes so any prefix is balanced.
  for (int i = 0; i < n; ++i) {
    const int label = i % num_classes;
    auto rng = rngs.stream("render", static_cast<std::uint64_t>(i));
    render(ds.images.data.data() + i * ds.images.sample_size(), side, label, rng);
    ds.labels[i] = label;
    ds.sample_ids[i] = i;
  }
  return ds;
}

DatasetSplits split_per_class(const LabeledDataset& ds, int test_per_class) {
  std::vector<int> seen(ds.num_classes, 0), train_rows, test_rows;
  for (int i = 0; i < ds.size(); ++i) {
    if (seen[ds.labels[i]]++ < test_per_class)
      test_rows.push_back(i);
    else
      train_rows.push_back(i);
  }
  auto take = [&](const std::vector<int>& rows, Split split) {
    LabeledDataset out;
    out.images = gather(ds.images, std::span<const int>(rows));
    for (int r : rows) {
      out.labels.push_back(ds.labels[r]);
      out.sample_ids.push_back(ds.sample_ids[r]);
    }
    out.class_names = ds.class_names;
    out.num_classes = ds.num_classes;
    out.split = split;
    out.skipped_files = ds.skipped_files;
    return out;
  };
  return {take(train_rows, Split::train), take(test_rows, Split::test)};
}

LabeledDataset load_folder_dataset(const std::string& root, int side) {
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root);
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.size() < 2) throw ValidationError("folder dataset needs at least 2 class directories: " + root);

  LabeledDataset ds;
  ds.class_names = classes;
  ds.num_classes = static_cast<int>(classes.size());
  std::vector<Tensor<float>> imgs;
  for (int c = 0; c < ds.num_classes; ++c) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(fs::path(root) / classes[c]))
      if (e.is_regular_file()) files.push_back(e.path());
    if (files.empty()) throw IoError("empty class directory: " + (fs::path(root) / classes[c]).string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        imgs.push_back(read_png(f.string(), side));
      } catch (const IoError& e) {
        std::cerr << "warning: skipping " << f.string() << " (" << e.what() << ")\n";
        ++ds.skipped_files;
        continue;
      }
      ds.labels.push_back(c);
      ds.sample_ids.push_back(static_cast<std::int64_t>(ds.sample_ids.size()));
    }
  }
  ds.images = Tensor<float>(static_cast<int>(imgs.size()), 3, side, side);
  for (std::size_t i = 0; i < imgs.size(); ++i)
    std::copy(imgs[i].data.begin(), imgs[i].data.end(), ds.images.data.begin() + i * ds.images.sample_size());
  return ds;
}

void export_folder_dataset(const LabeledDataset& ds, const std::string& root) {
  for (int c = 0; c < ds.num_classes; ++c) fs::create_directories(fs::path(root) / ds.class_names[c]);
  for (int i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06lld.png", static_cast<long long>(ds.sample_ids[i]));
    write_png((fs::path(root) / ds.class_names[ds.labels[i]] / name).string(), ds.images, i);
  }
}

DatasetSplits load_splits(const AttackConfig& cfg) {
  if (cfg.dataset_id == "synthetic") {
    auto all = make_synthetic_dataset(cfg.num_classes, cfg.train_per_class + cfg.test_per_class, cfg.image_side,
                                      cfg.dataset_seed);
    return split_per_class(all, cfg.test_per_class);
  }
  if (cfg.dataset_id.rfind("folder:", 0) == 0) {
    auto all = load_folder_dataset(cfg.dataset_id.substr(7), cfg.image_side);
    if (all.num_classes != cfg.num_classes)
      throw ValidationError("folder dataset has " + std::to_string(all.num_classes) + " classes but num_classes = " +
                            std::to_string(cfg.num_classes));
    return split_per_class(all, cfg.test_per_class);
  }
  throw ConfigError("dataset_id must be 'synthetic' or 'folder:<root>', got '" + cfg.dataset_id + "'");
}

ImageBatch make_batch(const LabeledDataset& ds, const std::vector<int>& rows) {
  ImageBatch b;
  b.images = gather(ds.images, std::span<const int>(rows));
  b.labels.reserve(rows.size());
  for (int r : rows) b.labels.push_back(ds.labels[r]);
  return b;
}

std::string to_string(ProtocolKind k) { return k == ProtocolKind::subset_source ? "subset_source" : "all_source"; }

ProtocolKind parse_protocol_kind(const std::string& s) {
  if (s == "subset_source" || s == "subset") return ProtocolKind::subset_source;
  if (s == "all_source" || s == "all") return ProtocolKind::all_source;
  throw ConfigError("protocol must be subset_source or all_source, got '" + s + "'");
}

AttackProtocol build_protocol(const LabeledDataset& test, ProtocolKind kind, int target_class,
                              std::optional<std::vector<int>> subset_classes) {
  if (target_class < 0 || target_class >= test.num_classes)
    throw ValidationError("target class " + std::to_string(target_class) + " not in dataset");
  AttackProtocol p;
  p.kind = kind;
  p.target_class = target_class;
  std::vector<char> allowed(test.num_classes, 1);
  if (kind == ProtocolKind::subset_source) {
    if (!subset_classes) {
      subset_classes.emplace();
      for (int c = 0; c < std::min(10, test.num_classes); ++c) subset_classes->push_back(c);
    }
    p.subset_classes = *subset_classes;
    std::fill(allowed.begin(), allowed.end(), 0);
    for (int c : p.subset_classes) {
      if (c < 0 || c >= test.num_classes) throw ValidationError("subset class " + std::to_string(c) + " not in dataset");
      allowed[c] = 1;
    }
    if (!allowed[target_class]) throw ValidationError("target class is not in the subset");
  }
  for (int i = 0; i < test.size(); ++i) {
    const int y = test.labels[i];
    if (y == target_class)
      p.target_reference_indices.push_back(i);
    else if (allowed[y])
      p.source_indices.push_back(i);
  }
  if (p.target_reference_indices.empty())
    throw ValidationError("target class " + std::to_string(target_class) + " has no test samples");
  return p;
}

BatchStream::BatchStream(const LabeledDataset& ds, int batch_size, std::uint64_t shuffle_seed)
    : ds_(&ds), batch_size_(batch_size), seed_(shuffle_seed) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (ds.size() == 0) throw ValidationError("cannot batch an empty dataset");
  per_epoch_ = (ds.size() + batch_size - 1) / batch_size;
}

std::vector<int> BatchStream::indices(std::int64_t k) {
  const std::int64_t epoch = k / per_epoch_;
  const int within = static_cast<int>(k % per_epoch_);
  if (epoch != cached_epoch_) {
    perm_.resize(ds_->size());
    std::iota(perm_.begin(), perm_.end(), 0);
    auto rng = seed_all(seed_).stream("shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(perm_.begin(), perm_.end(), rng);
    cached_epoch_ = epoch;
  }
  const int begin = within * batch_size_;
  const int end = std::min(ds_->size(), begin + batch_size_);
  return {perm_.begin() + begin, perm_.begin() + end};
}

}  // namespace m3d
