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

#include "m3d/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "m3d/errors.hpp"

namespace fs = std::filesystem;

namespace m3d {

int CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
}

struct Cell {
  double target = 0, err = 0;
  int n = 0;
};

std::string bar_chart(const std::vector<std::string>& victims, const std::vector<std::string>& modes,
                      const std::map<std::pair<std::string, std::string>, Cell>& cells) {
  const double bar = 16, gap = 10, group_gap = 40, left = 60, top = 40, height = 220;
  const double group_w = modes.size() * (2 * bar + gap);
  const double width = left + victims.size() * (group_w + group_gap) + 20;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(top + height + 70)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">Classification error rate vs target accuracy</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = top + height * (1 - k / 4.0);
    s << "<line x1=\"" << left - 4 << "\" x2=\"" << num(width - 20) << "\" y1=\"" << num(y) << "\" y2=\"" << num(y)
      << "\" stroke=\"#ddd\"/><text x=\"" << left - 8 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
      << k * 25 << "%</text>\n";
  }
  double x = left + 10;
  for (const auto& v : victims) {
    const double gx = x;
    for (const auto& m : modes) {
      auto it = cells.find({m, v});
      const Cell c = it == cells.end() ? Cell{} : it->second;
      const double he = height * c.err, ht = height * c.target;
      s << "<rect x=\"" << num(x) << "\" y=\"" << num(top + height - he) << "\" width=\"" << bar << "\" height=\""
        << num(he) << "\" fill=\"#9bb7d4\"><title>" << xml_escape(m + " " + v) << " error " << num(100 * c.err)
        << "%</title></rect>\n";
      s << "<rect x=\"" << num(x + bar) << "\" y=\"" << num(top + height - ht) << "\" width=\"" << bar
        << "\" height=\"" << num(ht) << "\" fill=\"#c0504d\"><title>" << xml_escape(m + " " + v) << " target "
        << num(100 * c.target) << "%</title></rect>\n";
      s << "<text x=\"" << num(x + bar) << "\" y=\"" << num(top + height + 14) << "\" text-anchor=\"middle\">"
        << xml_escape(m) << "</text>\n";
      x += 2 * bar + gap;
    }
    s << "<text x=\"" << num(gx + group_w / 2) << "\" y=\"" << num(top + height + 32)
      << "\" text-anchor=\"middle\" font-weight=\"bold\">" << xml_escape(v) << "</text>\n";
    x += group_gap;
  }
  const double ly = top + height + 52;
  s << "<rect x=\"" << left << "\" y=\"" << num(ly - 9) << "\" width=\"10\" height=\"10\" fill=\"#9bb7d4\"/><text x=\""
    << left + 14 << "\" y=\"" << num(ly) << "\">classification error rate</text>\n";
  s << "<rect x=\"" << left + 170 << "\" y=\"" << num(ly - 9)
    << "\" width=\"10\" height=\"10\" fill=\"#c0504d\"/><text x=\"" << left + 184 << "\" y=\"" << num(ly)
    << "\">target accuracy</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string loss_chart(const std::string& title, const CsvTable& t) {
  const double left = 60, top = 40, w = 480, h = 220;
  const char* colors[] = {"#c0504d", "#4f81bd", "#9bbb59"};
  const char* names[] = {"l_a", "l_d", "l_c"};
  const int ci = t.column("iteration");
  double it_max = 1, y_max = 1e-9;
  std::vector<std::vector<std::pair<double, double>>> series(3);
  for (int k = 0; k < 3; ++k) {
    const int col = t.column(names[k]);
    if (col < 0) continue;
    for (const auto& r : t.rows) {
      const double it = std::stod(r.at(ci)), v = std::stod(r.at(col));
      series[k].push_back({it, v});
      it_max = std::max(it_max, it);
      y_max = std::max(y_max, v);
    }
  }
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + w + 120 << "\" height=\"" << top + h + 40
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w << "\" height=\"" << h
    << "\" fill=\"none\" stroke=\"#888\"/>\n";
  s << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << num(y_max) << "</text>\n";
  s << "<text x=\"" << left - 6 << "\" y=\"" << top + h << "\" text-anchor=\"end\">0</text>\n";
  s << "<text x=\"" << left + w << "\" y=\"" << top + h + 16 << "\" text-anchor=\"end\">iteration "
    << static_cast<long long>(it_max) << "</text>\n";
  for (int k = 0; k < 3; ++k) {
    if (series[k].empty()) continue;
    s << "<polyline fill=\"none\" stroke=\"" << colors[k] << "\" stroke-width=\"1\" points=\"";
    const std::size_t stride = std::max<std::size_t>(1, series[k].size() / 1000);
    for (std::size_t i = 0; i < series[k].size(); i += stride)
      s << num(left + w * series[k][i].first / it_max) << "," << num(top + h - h * series[k][i].second / y_max)
        << " ";
    s << "\"/>\n<text x=\"" << left + w + 10 << "\" y=\"" << top + 14 + 16 * k << "\" fill=\"" << colors[k] << "\">"
      << names[k] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  CsvTable t;
  std::string line;
  if (std::getline(in, line)) t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto r = split_line(line);
    if (r.size() != t.header.size())
      throw ValidationError(path + ": row " + std::to_string(t.rows.size() + 1) + " has " + std::to_string(r.size()) +
                            " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(r));
  }
  return t;
}

ReportResult render_report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const fs::path metrics = dir / "metrics.csv";
  if (!fs::is_directory(dir)) throw IoError("run directory not found: " + run_dir);
  if (!fs::exists(metrics)) throw IoError("report inputs missing in " + run_dir + ": metrics.csv");
  const CsvTable t = read_csv(metrics.string());
  const int cv = t.column("victim"), ct = t.column("target_acc"), ce = t.column("err_rate"), cm = t.column("mode");
  std::vector<std::string> absent;
  for (const char* c : {"victim", "target_acc", "err_rate"})
    if (t.column(c) < 0) absent.push_back(std::string("metrics.csv:") + c);
  if (!absent.empty()) {
    std::string msg = "report inputs missing in " + run_dir + ":";
    for (const auto& a : absent) msg += " " + a;
    throw IoError(msg);
  }

  std::vector<std::string> victims, modes;
  std::map<std::pair<std::string, std::string>, Cell> cells;
  for (const auto& r : t.rows) {
    const std::string mode = cm >= 0 ? r[cm] : "-";
    if (std::find(victims.begin(), victims.end(), r[cv]) == victims.end()) victims.push_back(r[cv]);
    if (std::find(modes.begin(), modes.end(), mode) == modes.end()) modes.push_back(mode);
    Cell& c = cells[{mode, r[cv]}];
    c.target += std::stod(r[ct]);
    c.err += std::stod(r[ce]);
    ++c.n;
  }
  std::sort(modes.begin(), modes.end());
  std::ostringstream summary;
  summary << "mode,victim,mean_target_acc,mean_err_rate,n_reports\n";
  for (auto& [key, c] : cells) {
    c.target /= c.n;
    c.err /= c.n;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", c.target, c.err);
    summary << key.first << "," << key.second << "," << buf << "," << c.n << "\n";
  }
  ReportResult res;
  write_text(dir / "summary.csv", summary.str());
  res.written.push_back("summary.csv");
  write_text(dir / "transfer_bars.svg", bar_chart(victims, modes, cells));
  res.written.push_back("transfer_bars.svg");

  std::vector<fs::path> traces;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "losses.csv") traces.push_back(e.path());
  std::sort(traces.begin(), traces.end());
  if (traces.empty()) res.notes.push_back("no losses.csv found; loss charts skipped");
  for (const auto& p : traces) {
    std::string rel = fs::relative(p.parent_path(), dir).generic_string();
    if (rel == ".") rel = "run";
    std::replace(rel.begin(), rel.end(), '/', '_');
    const CsvTable lt = read_csv(p.string());
    if (lt.rows.empty() || lt.column("iteration") < 0) {
      res.notes.push_back(fs::relative(p, dir).generic_string() + " is empty; loss chart skipped");
      continue;
    }
    const std::string name = "loss_" + rel + ".svg";
    write_text(dir / name, loss_chart("Loss trace " + rel, lt));
    res.written.push_back(name);
  }
  return res;
}

}  // namespace m3d
