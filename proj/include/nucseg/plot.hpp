// Copyright 2026 The nucseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

namespace nucseg {

/// One named curve / bar group.
struct ChartSeries {
  std::string name;
  std::vector<double> values;
};

/// Static PNG line chart: one x tick per label, auto-scaled y axis.
void render_line_chart(const std::string& path, const std::string& title,
                       const std::vector<std::string>& x_labels,
                       const std::vector<ChartSeries>& series);

/// Static PNG grouped bar chart.
void render_bar_chart(const std::string& path, const std::string& title,
                      const std::vector<std::string>& labels,
                      const std::vector<ChartSeries>& series);

}  // namespace nucseg
