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

#include "nucseg/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>

#include "nucseg/png_io.hpp"

namespace nucseg {

namespace {

// 5×7 column-major glyphs, LSB = top row. Uppercase-only subset.
const std::map<char, std::array<std::uint8_t, 5>>& font() {
  static const std::map<char, std::array<std::uint8_t, 5>> f = {
      {'0', {0x3E, 0x51, 0x49, 0x45, 0x3E}}, {'1', {0x00, 0x42, 0x7F, 0x40, 0x00}},
      {'2', {0x42, 0x61, 0x51, 0x49, 0x46}}, {'3', {0x21, 0x41, 0x45, 0x4B, 0x31}},
      {'4', {0x18, 0x14, 0x12, 0x7F, 0x10}}, {'5', {0x27, 0x45, 0x45, 0x45, 0x39}},
      {'6', {0x3C, 0x4A, 0x49, 0x49, 0x30}}, {'7', {0x01, 0x71, 0x09, 0x05, 0x03}},
      {'8', {0x36, 0x49, 0x49, 0x49, 0x36}}, {'9', {0x06, 0x49, 0x49, 0x29, 0x1E}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00}}, {'.', {0x00, 0x60, 0x60, 0x00, 0x00}},
      {'-', {0x08, 0x08, 0x08, 0x08, 0x08}}, {'+', {0x08, 0x08, 0x3E, 0x08, 0x08}},
      {'/', {0x20, 0x10, 0x08, 0x04, 0x02}}, {'=', {0x14, 0x14, 0x14, 0x14, 0x14}},
      {'%', {0x23, 0x13, 0x08, 0x64, 0x62}}, {'(', {0x00, 0x1C, 0x22, 0x41, 0x00}},
      {')', {0x00, 0x41, 0x22, 0x1C, 0x00}}, {':', {0x00, 0x36, 0x36, 0x00, 0x00}},
      {'_', {0x40, 0x40, 0x40, 0x40, 0x40}}, {'A', {0x7E, 0x11, 0x11, 0x11, 0x7E}},
      {'B', {0x7F, 0x49, 0x49, 0x49, 0x36}}, {'C', {0x3E, 0x41, 0x41, 0x41, 0x22}},
      {'D', {0x7F, 0x41, 0x41, 0x22, 0x1C}}, {'E', {0x7F, 0x49, 0x49, 0x49, 0x41}},
      {'F', {0x7F, 0x09, 0x09, 0x09, 0x01}}, {'G', {0x3E, 0x41, 0x49, 0x49, 0x7A}},
      {'H', {0x7F, 0x08, 0x08, 0x08, 0x7F}}, {'I', {0x00, 0x41, 0x7F, 0x41, 0x00}},
      {'J', {0x20, 0x40, 0x41, 0x3F, 0x01}}, {'K', {0x7F, 0x08, 0x14, 0x22, 0x41}},
      {'L', {0x7F, 0x40, 0x40, 0x40, 0x40}}, {'M', {0x7F, 0x02, 0x0C, 0x02, 0x7F}},
      {'N', {0x7F, 0x04, 0x08, 0x10, 0x7F}}, {'O', {0x3E, 0x41, 0x41, 0x41, 0x3E}},
      {'P', {0x7F, 0x09, 0x09, 0x09, 0x06}}, {'Q', {0x3E, 0x41, 0x51, 0x21, 0x5E}},
      {'R', {0x7F, 0x09, 0x19, 0x29, 0x46}}, {'S', {0x46, 0x49, 0x49, 0x49, 0x31}},
      {'T', {0x01, 0x01, 0x7F, 0x01, 0x01}}, {'U', {0x3F, 0x40, 0x40, 0x40, 0x3F}},
      {'V', {0x1F, 0x20, 0x40, 0x20, 0x1F}}, {'W', {0x3F, 0x40, 0x38, 0x40, 0x3F}},
      {'X', {0x63, 0x14, 0x08, 0x14, 0x63}}, {'Y', {0x07, 0x08, 0x70, 0x08, 0x07}},
      {'Z', {0x61, 0x51, 0x49, 0x45, 0x43}},
  };
  return f;
}

struct Color {
  std::uint8_t r, g, b;
};

const Color kPalette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40},
                          {148, 103, 189}, {140, 86, 75}};

struct Canvas {
  int w, h;
  std::vector<std::uint8_t> rgb;

  Canvas(int w_, int h_) : w(w_), h(h_), rgb(static_cast<size_t>(w_) * h_ * 3, 255) {}

  void put(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    auto* p = &rgb[(static_cast<size_t>(y) * w + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void line(int x0, int y0, int x1, int y1, Color c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void fill_rect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) put(x, y, c);
  }

  void text(int x, int y, const std::string& s, Color c) {
    int cx = x;
    for (char raw : s) {
      const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
      const auto it = font().find(ch);
      if (it != font().end())
        for (int col = 0; col < 5; ++col)
          for (int row = 0; row < 7; ++row)
            if (it->second[col] & (1 << row)) put(cx + col, y + row, c);
      cx += 6;
    }
  }

  void save(const std::string& path) const { write_png_rgb8(path, w, h, rgb.data()); }
};

struct Frame {
  int x0, y0, x1, y1;  // plot area
  double lo, hi;       // y range

  int ypix(double v) const {
    const double t = (v - lo) / (hi - lo);
    return y1 - static_cast<int>(std::lround(t * (y1 - y0)));
  }
};

Frame draw_frame(Canvas& cv, const std::string& title, double vmin, double vmax) {
  Frame fr;
  fr.x0 = 60;
  fr.y0 = 30;
  fr.x1 = cv.w - 20;
  fr.y1 = cv.h - 40;
  double lo = vmin, hi = vmax;
  if (hi - lo < 1e-9) { hi += 1.0; lo -= 1.0; }
  const double pad = 0.08 * (hi - lo);
  fr.lo = lo - pad;
  fr.hi = hi + pad;

  const Color black{0, 0, 0}, grey{210, 210, 210};
  cv.text(fr.x0, 10, title, black);
  cv.line(fr.x0, fr.y0, fr.x0, fr.y1, black);
  cv.line(fr.x0, fr.y1, fr.x1, fr.y1, black);
  for (int i = 0; i <= 4; ++i) {
    const double v = fr.lo + (fr.hi - fr.lo) * i / 4.0;
    const int y = fr.ypix(v);
    cv.line(fr.x0 + 1, y, fr.x1, y, grey);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.1f", v);
    cv.text(6, y - 3, buf, black);
  }
  return fr;
}

}  // namespace

void render_line_chart(const std::string& path, const std::string& title,
                       const std::vector<std::string>& x_labels,
                       const std::vector<ChartSeries>& series) {
  Canvas cv(640, 420);
  double vmin = 1e300, vmax = -1e300;
  for (const auto& s : series)
    for (double v : s.values) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  if (series.empty() || x_labels.empty()) { vmin = 0; vmax = 1; }
  const auto fr = draw_frame(cv, title, vmin, vmax);

  const int n = static_cast<int>(x_labels.size());
  auto xpix = [&](int i) {
    return n == 1 ? (fr.x0 + fr.x1) / 2
                  : fr.x0 + static_cast<int>(std::lround(
                                static_cast<double>(i) * (fr.x1 - fr.x0) / (n - 1)));
  };
  const Color black{0, 0, 0};
  for (int i = 0; i < n; ++i)
    cv.text(xpix(i) - 3 * static_cast<int>(x_labels[i].size()), fr.y1 + 8, x_labels[i], black);

  for (size_t s = 0; s < series.size(); ++s) {
    const Color c = kPalette[s % 6];
    const auto& vals = series[s].values;
    for (int i = 0; i + 1 < static_cast<int>(vals.size()) && i + 1 < n; ++i)
      cv.line(xpix(i), fr.ypix(vals[i]), xpix(i + 1), fr.ypix(vals[i + 1]), c);
    for (int i = 0; i < static_cast<int>(vals.size()) && i < n; ++i)
      cv.fill_rect(xpix(i) - 2, fr.ypix(vals[i]) - 2, xpix(i) + 2, fr.ypix(vals[i]) + 2, c);
    cv.fill_rect(fr.x0 + 10, fr.y0 + 8 + 12 * static_cast<int>(s), fr.x0 + 22,
                 fr.y0 + 14 + 12 * static_cast<int>(s), c);
    cv.text(fr.x0 + 28, fr.y0 + 5 + 12 * static_cast<int>(s), series[s].name, black);
  }
  cv.save(path);
}

void render_bar_chart(const std::string& path, const std::string& title,
                      const std::vector<std::string>& labels,
                      const std::vector<ChartSeries>& series) {
  Canvas cv(640, 420);
  double vmax = 0;
  for (const auto& s : series)
    for (double v : s.values) vmax = std::max(vmax, v);
  const auto fr = draw_frame(cv, title, 0.0, vmax <= 0 ? 1.0 : vmax);

  const int n = static_cast<int>(labels.size());
  const int ns = std::max<int>(1, static_cast<int>(series.size()));
  const int group_w = n ? (fr.x1 - fr.x0) / n : 1;
  const int bar_w = std::max(2, group_w / (ns + 1));
  const Color black{0, 0, 0};

  for (int i = 0; i < n; ++i) {
    const int gx = fr.x0 + i * group_w;
    cv.text(gx + group_w / 2 - 3 * static_cast<int>(labels[i].size()), fr.y1 + 8, labels[i],
            black);
    for (int s = 0; s < ns && s < static_cast<int>(series.size()); ++s) {
      if (i >= static_cast<int>(series[s].values.size())) continue;
      const Color c = kPalette[s % 6];
      const int x0 = gx + bar_w / 2 + s * bar_w;
      cv.fill_rect(x0, fr.ypix(series[s].values[i]), x0 + bar_w - 2, fr.y1 - 1, c);
    }
  }
  for (size_t s = 0; s < series.size(); ++s) {
    cv.fill_rect(fr.x0 + 10, fr.y0 + 8 + 12 * static_cast<int>(s), fr.x0 + 22,
                 fr.y0 + 14 + 12 * static_cast<int>(s), kPalette[s % 6]);
    cv.text(fr.x0 + 28, fr.y0 + 5 + 12 * static_cast<int>(s), series[s].name, black);
  }
  cv.save(path);
}

}  // namespace nucseg
