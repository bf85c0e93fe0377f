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

#pragma once

#include <map>
#include <string>

namespace m3d {

// Per-output-directory record of what produced the artifacts in it.
struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::string started_at;
  std::map<std::string, std::string> artifact_paths;
  std::string build_stamp;
  std::map<std::string, std::string> notes;

  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);
};

std::string utc_timestamp();
std::string build_stamp();

// Exclusive writer lock on a run directory, held for the object's lifetime.
// A second lock on the same directory fails with IoError.
class RunDirLock {
 public:
  explicit RunDirLock(const std::string& dir);
  ~RunDirLock();
  RunDirLock(const RunDirLock&) = delete;
  RunDirLock& operator=(const RunDirLock&) = delete;

 private:
  std::string path_;
};

// Default output root: $M3D_RUNS_DIR, else ./runs.
std::string default_runs_root();

}  // namespace m3d
