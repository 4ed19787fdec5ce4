/* Copyright 2026 The modfuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Minimal standalone SVG charts: line plots (precision-recall curves) and
// grouped bar charts (drop rates, ablation rows).

#ifndef MODFUSE_PLOT_HPP_
#define MODFUSE_PLOT_HPP_

#include <string>
#include <vector>

namespace modfuse::plot {

struct Series {
  std::string name;
  std::vector<double> x;  // ignored by bar charts
  std::vector<double> y;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
};

// Throws std::invalid_argument if a series has mismatched x/y lengths.
std::string line_chart(const Axes& axes, const std::vector<Series>& series);

// One group per category; series[s].y[c] is the bar of series s in
// category c. Negative values extend below the zero line.
std::string bar_chart(const Axes& axes, const std::vector<std::string>& categories,
                      const std::vector<Series>& series);

// Escapes &, <, >, " for text nodes and attributes.
std::string xml_escape(const std::string& s);

}  // namespace modfuse::plot

#endif  // MODFUSE_PLOT_HPP_
