// Copyright 2026 The dida Authors. All Rights Reserved.
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

#include "dida/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace dida {
namespace fs = std::filesystem;

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "sweep") return PlotKind::kSweep;
  if (name == "mmd") return PlotKind::kMmd;
  throw std::invalid_argument("unknown plot kind '" + std::string(name) +
                              "' (expected sweep or mmd)");
}

namespace {

std::vector<std::vector<std::string>> read_rows(const fs::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) {
    throw std::runtime_error(path.string() + ": expected header '" + header + "', got '" + line +
                             "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": CSV has no data rows");
  return rows;
}

double to_number(const std::string& cell, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::runtime_error(path.string() + ": non-numeric cell '" + cell + "'");
}

const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
                               {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};

std::string tick_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

std::vector<Series> read_sweep_csv(const fs::path& path) {
  const auto rows = read_rows(path, "mode,t_degrade,t_input,miou");
  std::vector<Series> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    if (r.size() != 4) throw std::runtime_error(path.string() + ": expected 4 columns");
    auto [it, inserted] = index.emplace(r[0], out.size());
    if (inserted) out.push_back({r[0], {}, {}});
    out[it->second].x.push_back(to_number(r[1], path));
    out[it->second].y.push_back(to_number(r[3], path));
  }
  return out;
}

std::vector<Series> read_mmd_csv(const fs::path& path) {
  const auto rows = read_rows(path, "t,mmd,bandwidth");
  Series s{path.stem().string(), {}, {}};
  for (const auto& r : rows) {
    if (r.size() != 3) throw std::runtime_error(path.string() + ": expected 3 columns");
    s.x.push_back(to_number(r[0], path));
    s.y.push_back(to_number(r[1], path));
  }
  return {s};
}

void render_line_chart(const std::vector<Series>& series, const PlotLabels& labels,
                       const fs::path& out) {
  if (series.empty()) throw std::invalid_argument("nothing to plot");
  constexpr int kW = 900, kH = 560, kLeft = 90, kRight = 210, kTop = 50, kBottom = 70;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0) || !std::isfinite(y0)) throw std::invalid_argument("no finite points");
  y0 = std::min(y0, 0.0);
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  y1 += 0.05 * (y1 - y0);

  cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + static_cast<int>(std::lround((x - x0) / (x1 - x0) * pw)); };
  auto py = [&](double y) { return kTop + ph - static_cast<int>(std::lround((y - y0) / (y1 - y0) * ph)); };
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  const cv::Scalar ink(40, 40, 40), grid(225, 225, 225);

  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
    cv::line(img, {px(xv), kTop}, {px(xv), kTop + ph}, grid, 1);
    cv::line(img, {kLeft, py(yv)}, {kLeft + pw, py(yv)}, grid, 1);
    cv::putText(img, tick_text(xv), {px(xv) - 12, kTop + ph + 22}, font, 0.45, ink, 1, cv::LINE_AA);
    cv::putText(img, tick_text(yv), {kLeft - 60, py(yv) + 5}, font, 0.45, ink, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {kLeft, kTop}, {kLeft + pw, kTop + ph}, ink, 1);
  cv::putText(img, labels.title, {kLeft, kTop - 18}, font, 0.65, ink, 1, cv::LINE_AA);
  cv::putText(img, labels.x_label, {kLeft + pw / 2 - 10, kH - 20}, font, 0.55, ink, 1, cv::LINE_AA);
  cv::putText(img, labels.y_label, {10, kTop - 18}, font, 0.5, ink, 1, cv::LINE_AA);

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const auto colour = kPalette[i % std::size(kPalette)];
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) pts.emplace_back(s.x[k], s.y[k]);
    std::sort(pts.begin(), pts.end());
    std::vector<cv::Point> poly;
    for (const auto& [x, y] : pts) poly.emplace_back(px(x), py(y));
    if (poly.size() > 1) cv::polylines(img, poly, false, colour, 2, cv::LINE_AA);
    for (const auto& p : poly) cv::circle(img, p, 4, colour, cv::FILLED, cv::LINE_AA);
    const int ly = kTop + 20 + static_cast<int>(i) * 24;
    cv::line(img, {kLeft + pw + 15, ly - 5}, {kLeft + pw + 45, ly - 5}, colour, 2, cv::LINE_AA);
    cv::putText(img, s.name, {kLeft + pw + 52, ly}, font, 0.45, ink, 1, cv::LINE_AA);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  if (!cv::imwrite(out.string(), img)) throw std::runtime_error("cannot write " + out.string());
}

void plot_csv_files(const std::vector<fs::path>& csv_paths, PlotKind kind, const fs::path& out) {
  if (csv_paths.empty()) throw std::invalid_argument("plot needs at least one CSV");
  std::vector<Series> all;
  for (const auto& p : csv_paths) {
    auto s = kind == PlotKind::kSweep ? read_sweep_csv(p) : read_mmd_csv(p);
    if (kind == PlotKind::kSweep && csv_paths.size() > 1) {
      for (auto& one : s) one.name = p.stem().string() + "/" + one.name;
    }
    all.insert(all.end(), s.begin(), s.end());
  }
  PlotLabels labels;
  if (kind == PlotKind::kSweep) {
    labels.title = "mIoU versus degradation level";
    labels.x_label = "t (degradation level)";
    labels.y_label = "mIoU";
  } else {
    labels.title = "MMD between domains versus degradation level";
    labels.x_label = "t (degradation level)";
    labels.y_label = "MMD";
  }
  render_line_chart(all, labels, out);
}

}  // namespace dida
