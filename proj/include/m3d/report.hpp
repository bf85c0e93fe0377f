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

#include <string>
#include <vector>

namespace m3d {

struct ReportResult {
  std::vector<std::string> written;  // paths relative to the run directory
  std::vector<std::string> notes;
};

// Reads `metrics.csv` (required) and every `losses.csv` below `run_dir`,
// writes `summary.csv`, `transfer_bars.svg` (error rate next to target
// accuracy per mode and victim) and one `loss_*.svg` per non-empty trace.
ReportResult render_report(const std::string& run_dir);

// Minimal CSV access used by the report and the tests.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

}  // namespace m3d
