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

#include "m3d/checkpoint.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

namespace m3d {
namespace {

constexpr const char* kMagic = "M3DCKPT 1";

std::string join_shape(const std::vector<int>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out.empty() ? "1" : out;
}

std::vector<int> split_shape(const std::string& s, const std::string& name) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      const int d = std::stoi(tok);
      if (d < 0) throw std::out_of_range("negative");
      out.push_back(d);
    } catch (const std::exception&) {
      throw IntegrityError("checkpoint tensor '" + name + "': bad shape '" + s + "'");
    }
  }
  return out;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream head;
  head << kMagic << "\n";
  head << "arch_id " << ckpt.arch_id << "\n";
  for (const auto& [k, v] : ckpt.meta) head << "meta " << k << " " << v << "\n";
  for (const auto& [k, v] : ckpt.info) head << "info " << k << " " << v << "\n";
  std::size_t offset = 0;
  for (const auto& p : ckpt.tensors) {
    const std::size_t len = p.values.size() * 4;
    head << "tensor " << p.name << " f32le " << join_shape(p.shape) << " " << offset << " " << len << "\n";
    offset += len;
  }
  head << "payload " << offset << "\n";

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  const std::string h = head.str();
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  std::vector<char> buf;
  for (const auto& p : ckpt.tensors) {
    buf.resize(p.values.size() * 4);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(p.values[i]));
      std::memcpy(buf.data() + i * 4, &bits, 4);
    }
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!f) throw IoError("checkpoint write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(f, line) || line != kMagic) throw IntegrityError("not a checkpoint (bad magic): " + path);

  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset, length;
  };
  Checkpoint ck;
  std::vector<Entry> entries;
  std::size_t payload = 0;
  bool have_payload = false;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "arch_id") {
      ls >> ck.arch_id;
    } else if (tag == "meta" || tag == "info") {
      std::string k, v;
      ls >> k;
      std::getline(ls >> std::ws, v);
      (tag == "meta" ? ck.meta : ck.info)[k] = v;
    } else if (tag == "tensor") {
      Entry e;
      std::string dtype, shape;
      if (!(ls >> e.name >> dtype >> shape >> e.offset >> e.length))
        throw IntegrityError("checkpoint manifest: malformed tensor line '" + line + "'");
      if (dtype != "f32le") throw IntegrityError("checkpoint tensor '" + e.name + "': unsupported dtype " + dtype);
      e.shape = split_shape(shape, e.name);
      entries.push_back(std::move(e));
    } else if (tag == "payload") {
      if (!(ls >> payload)) throw IntegrityError("checkpoint manifest: malformed payload line");
      have_payload = true;
      break;
    } else {
      throw IntegrityError("checkpoint manifest: unknown line '" + line + "'");
    }
  }
  if (!have_payload) throw IntegrityError("checkpoint manifest: missing payload line in " + path);

  std::vector<char> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t expect = 0;
  for (const auto& e : entries) {
    std::size_t count = 1;
    for (int d : e.shape) count *= static_cast<std::size_t>(d);
    if (e.length != count * 4)
      throw IntegrityError("checkpoint tensor '" + e.name + "': byte length " + std::to_string(e.length) +
                           " does not match shape");
    if (e.offset != expect)
      throw IntegrityError("checkpoint tensor '" + e.name + "': offset " + std::to_string(e.offset) +
                           " overlaps or leaves a gap (expected " + std::to_string(expect) + ")");
    if (e.offset + e.length > data.size())
      throw IntegrityError("checkpoint tensor '" + e.name + "': extends past end of payload (" +
                           std::to_string(data.size()) + " bytes present)");
    expect += e.length;
  }
  if (expect != payload)
    throw IntegrityError("checkpoint manifest: tensors cover " + std::to_string(expect) + " bytes, payload declares " +
                         std::to_string(payload));
  if (data.size() != payload)
    throw IntegrityError("checkpoint payload has " + std::to_string(data.size()) + " bytes, manifest declares " +
                         std::to_string(payload));

  for (const auto& e : entries) {
    const int idx = ck.tensors.add(e.name, e.shape);
    auto& vals = ck.tensors[idx].values;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, data.data() + e.offset + i * 4, 4);
      vals[i] = std::bit_cast<float>(to_le(bits));
    }
  }
  return ck;
}

void save_checkpoint(const Network<float>& net, const std::string& path, const std::map<std::string, std::string>& info) {
  Checkpoint ck{net.arch_id, net.meta, info, net.params};
  if (!ck.info.count("created_at")) ck.info["created_at"] = now_iso8601();
  write_checkpoint(path, ck);
}

Network<float> load_checkpoint(const std::string& path, const std::optional<std::string>& expected_arch) {
  Checkpoint ck = read_checkpoint(path);
  if (expected_arch && *expected_arch != ck.arch_id)
    throw ArchMismatchError("checkpoint " + path + " holds arch '" + ck.arch_id + "', expected '" + *expected_arch + "'");
  Network<float> net = build_network<float>(ck.arch_id, ck.meta);
  if (net.params.size() != ck.tensors.size())
    throw ArchMismatchError("checkpoint " + path + " has " + std::to_string(ck.tensors.size()) + " tensors, arch '" +
                            ck.arch_id + "' expects " + std::to_string(net.params.size()));
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    auto& dst = net.params[i];
    const auto& src = ck.tensors[i];
    if (dst.name != src.name || dst.shape != src.shape)
      throw ArchMismatchError("checkpoint tensor '" + src.name + "' does not match arch entry '" + dst.name + "'");
    dst.values = src.values;
  }
  return net;
}

}  // namespace m3d
