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

#ifndef DIDA_PLOT_HPP_
#define DIDA_PLOT_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace dida {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

enum class PlotKind { kSweep, kMmd };
PlotKind parse_plot_kind(std::string_view name);

// One series per mode (x = t_degrade, y = mIoU). Throws on a header that is
// not the sweep schema or on a file without data rows.
std::vector<Series> read_sweep_csv(const std::filesystem::path& path);
// Single series (x = t, y = MMD); a "name" is taken from the file stem.
std::vector<Series> read_mmd_csv(const std::filesystem::path& path);

struct PlotLabels {
  std::string title;
  std::string x_label = "t";
  std::string y_label;
};

// Fixed-size 900x560 PNG line chart.
void render_line_chart(const std::vector<Series>& series, const PlotLabels& labels,
                       const std::filesystem::path& out);

// Reads every CSV as `kind`, then renders one chart. Nothing is written when
// any input fails to parse.
void plot_csv_files(const std::vector<std::filesystem::path>& csv_paths, PlotKind kind,
                    const std::filesystem::path& out);

}  // namespace dida

#endif  // DIDA_PLOT_HPP_
