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

#include "m3d/run.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "m3d/errors.hpp"

namespace m3d {

void RunManifest::write(const std::string& path) const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["config_hash"] = config_hash;
  j["started_at"] = started_at;
  j["artifact_paths"] = artifact_paths;
  j["build_stamp"] = build_stamp;
  j["notes"] = notes;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path);
  f << j.dump(2) << "\n";
}

RunManifest RunManifest::read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed manifest " + path + ": " + e.what());
  }
  RunManifest m;
  m.run_id = j.value("run_id", "");
  m.config_hash = j.value("config_hash", "");
  m.started_at = j.value("started_at", "");
  m.artifact_paths = j.value("artifact_paths", std::map<std::string, std::string>{});
  m.build_stamp = j.value("build_stamp", "");
  m.notes = j.value("notes", std::map<std::string, std::string>{});
  return m;
}

std::string utc_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string build_stamp() {
#ifdef M3D_BUILD_STAMP
  return M3D_BUILD_STAMP;
#else
  return std::string("m3d ") + __DATE__ + " " + __TIME__;
#endif
}

RunDirLock::RunDirLock(const std::string& dir) {
  std::filesystem::create_directories(dir);
  path_ = (std::filesystem::path(dir) / ".lock").string();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    path_.clear();
    throw IoError("run directory is locked by another invocation: " + dir);
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunDirLock::~RunDirLock() {
  if (!path_.empty()) ::unlink(path_.c_str());
}

std::string default_runs_root() {
  if (const char* e = std::getenv("M3D_RUNS_DIR"); e && *e) return e;
  return "runs";
}

}  // namespace m3d
