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

#include "modfuse/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace modfuse::plot {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 150, kTop = 40, kBottom = 56;
constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const {
    return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

void open_svg(std::ostringstream& os, const Axes& axes) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" "
     << "font-size=\"15\">" << xml_escape(axes.title) << "</text>\n";
}

void draw_axes(std::ostringstream& os, const Frame& f, const Axes& axes, bool x_ticks) {
  const double left = f.px(f.x0), right = f.px(f.x1);
  const double bottom = f.py(f.y0), top = f.py(f.y1);
  os << "<g stroke=\"black\" fill=\"none\">\n"
     << "<line x1=\"" << num(left) << "\" y1=\"" << num(bottom) << "\" x2=\"" << num(right)
     << "\" y2=\"" << num(bottom) << "\"/>\n"
     << "<line x1=\"" << num(left) << "\" y1=\"" << num(bottom) << "\" x2=\"" << num(left)
     << "\" y2=\"" << num(top) << "\"/>\n</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(f.py(yv) + 4)
       << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
    if (x_ticks) {
      const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
      os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(bottom + 16)
         << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
    }
  }
  os << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << num(kHeight - 12)
     << "\" text-anchor=\"middle\">" << xml_escape(axes.x_label) << "</text>\n"
     << "<text x=\"16\" y=\"" << num((top + bottom) / 2)
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << num((top + bottom) / 2)
     << ")\">" << xml_escape(axes.y_label) << "</text>\n";
}

void draw_legend(std::ostringstream& os, const std::vector<Series>& series) {
  const double x = kWidth - kRight + 16;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 8 + 18.0 * i;
    os << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 9) << "\" width=\"12\" "
       << "height=\"10\" fill=\"" << color(i) << "\"/>\n"
       << "<text x=\"" << num(x + 18) << "\" y=\"" << num(y) << "\">"
       << xml_escape(series[i].name) << "</text>\n";
  }
}

}  // namespace

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_chart(const Axes& axes, const std::vector<Series>& series) {
  Frame f{0, 1, 0, 1};
  bool any = false;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) {
      throw std::invalid_argument("line_chart: series '" + s.name +
                                  "' has mismatched x/y lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) f = {s.x[i], s.x[i], s.y[i], s.y[i]};
      any = true;
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, s.y[i]);
      f.y1 = std::max(f.y1, s.y[i]);
    }
  }
  f.y0 = std::min(f.y0, 0.0);
  if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
  if (f.y1 <= f.y0) f.y1 = f.y0 + 1;

  std::ostringstream os;
  open_svg(os, axes);
  draw_axes(os, f, axes, true);
  for (std::size_t i = 0; i < series.size(); ++i) {
    os << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << color(i)
       << "\" points=\"";
    for (std::size_t k = 0; k < series[i].x.size(); ++k) {
      if (!std::isfinite(series[i].x[k]) || !std::isfinite(series[i].y[k])) continue;
      os << num(f.px(series[i].x[k])) << "," << num(f.py(series[i].y[k])) << " ";
    }
    os << "\"/>\n";
  }
  draw_legend(os, series);
  os << "</svg>\n";
  return os.str();
}

std::string bar_chart(const Axes& axes, const std::vector<std::string>& categories,
                      const std::vector<Series>& series) {
  Frame f{0, 1, 0, 0};
  for (const auto& s : series) {
    if (s.y.size() != categories.size()) {
      throw std::invalid_argument("bar_chart: series '" + s.name +
                                  "' does not have one value per category");
    }
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      f.y0 = std::min(f.y0, v);
      f.y1 = std::max(f.y1, v);
    }
  }
  if (f.y1 <= f.y0) f.y1 = f.y0 + 1;

  std::ostringstream os;
  open_svg(os, axes);
  draw_axes(os, f, axes, false);
  const double n = std::max<std::size_t>(1, categories.size());
  const double group = 1.0 / n;
  const double bar = group * 0.8 / std::max<std::size_t>(1, series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = group * c + group * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = std::isfinite(series[s].y[c]) ? series[s].y[c] : 0.0;
      const double x = f.px(gx + bar * s);
      const double w = f.px(gx + bar * (s + 1)) - x;
      const double ya = f.py(std::max(v, 0.0)), yb = f.py(std::min(v, 0.0));
      os << "<rect x=\"" << num(x) << "\" y=\"" << num(ya) << "\" width=\"" << num(w)
         << "\" height=\"" << num(yb - ya) << "\" fill=\"" << color(s) << "\"/>\n";
    }
    os << "<text x=\"" << num(f.px(group * (c + 0.5))) << "\" y=\""
       << num(f.py(f.y0) + 16) << "\" text-anchor=\"middle\">"
       << xml_escape(categories[c]) << "</text>\n";
  }
  if (f.y0 < 0) {
    os << "<line stroke=\"black\" x1=\"" << num(f.px(0)) << "\" y1=\"" << num(f.py(0))
       << "\" x2=\"" << num(f.px(1)) << "\" y2=\"" << num(f.py(0)) << "\"/>\n";
  }
  draw_legend(os, series);
  os << "</svg>\n";
  return os.str();
}

}  // namespace modfuse::plot
