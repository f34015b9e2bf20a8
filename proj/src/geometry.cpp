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

#include "nucseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nucseg/kernels.hpp"

namespace nucseg {

namespace {
constexpr std::int64_t kUnreachable = std::numeric_limits<std::int64_t>::max();
}

std::vector<std::int32_t> extract_contour(const BinaryMask& mask) {
  std::vector<std::int32_t> out;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      if (!mask.at(y, x)) continue;
      const bool bg_up = y == 0 || !mask.at(y - 1, x);
      const bool bg_dn = y == mask.h - 1 || !mask.at(y + 1, x);
      const bool bg_lf = x == 0 || !mask.at(y, x - 1);
      const bool bg_rt = x == mask.w - 1 || !mask.at(y, x + 1);
      if (bg_up || bg_dn || bg_lf || bg_rt) out.push_back(y * mask.w + x);
    }
  return out;
}

std::vector<std::int64_t> distance_sq_to(const BinaryMask& shape_ref,
                                         const std::vector<std::int32_t>& sources) {
  const int h = shape_ref.h, w = shape_ref.w;
  std::vector<std::int64_t> d2(static_cast<size_t>(h) * w, kUnreachable);
  if (sources.empty()) return d2;

  // Pass 1: per row, squared distance (in x only) to the nearest in-row source.
  std::vector<std::int32_t> rowdist(static_cast<size_t>(h) * w, -1);
  for (auto idx : sources) rowdist[idx] = 0;
  kern::parallel_for(h, kern::default_exec(), [&](long y) {
    std::int32_t* row = rowdist.data() + y * w;
    std::int32_t run = std::numeric_limits<std::int32_t>::max() / 4;
    for (int x = 0; x < w; ++x) {
      run = row[x] == 0 ? 0 : (run < w + 1 ? run + 1 : run);
      row[x] = run <= w ? run : -1;
    }
    run = std::numeric_limits<std::int32_t>::max() / 4;
    for (int x = w - 1; x >= 0; --x) {
      run = (row[x] == 0) ? 0 : (run < w + 1 ? run + 1 : run);
      if (run <= w && (row[x] < 0 || run < row[x])) row[x] = run;
    }
  });

  // Pass 2: per column, lower envelope of parabolas over rows (exact for
  // integer inputs; doubles are exact well past this range).
  kern::parallel_for(w, kern::default_exec(), [&](long x) {
    std::vector<int> vtx(h);
    std::vector<double> zed(h + 1);
    std::vector<double> f(h);
    int n = 0;
    for (int y = 0; y < h; ++y) {
      const std::int32_t r = rowdist[static_cast<size_t>(y) * w + x];
      if (r < 0) continue;
      const double fy = static_cast<double>(r) * r;
      double s;
      while (true) {
        if (n == 0) { s = -1e18; break; }
        const int vy = vtx[n - 1];
        s = ((fy + static_cast<double>(y) * y) - (f[n - 1] + static_cast<double>(vy) * vy)) /
            (2.0 * (y - vy));
        if (s > zed[n - 1]) break;
        --n;
      }
      vtx[n] = y;
      f[n] = fy;
      zed[n] = s;
      zed[n + 1] = 1e18;
      ++n;
    }
    if (n == 0) return;  // no sources reach this column
    int k = 0;
    for (int y = 0; y < h; ++y) {
      while (zed[k + 1] < y) ++k;
      const double dy = y - vtx[k];
      d2[static_cast<size_t>(y) * w + x] = static_cast<std::int64_t>(dy * dy + f[k] + 0.5);
    }
  });
  return d2;
}

ContourBands compute_bands(const BinaryMask& mask, float d) {
  if (d < 0) throw std::invalid_argument("compute_bands: d must be >= 0");
  ContourBands bands;
  bands.h = mask.h;
  bands.w = mask.w;
  bands.d = d;
  bands.contour = extract_contour(mask);

  const bool banded = d > 0 && !bands.contour.empty();
  std::vector<std::int64_t> d2;
  if (banded) d2 = distance_sq_to(mask, bands.contour);
  const double thr = static_cast<double>(d) * static_cast<double>(d);

  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      const std::int32_t idx = y * mask.w + x;
      const bool near =
          banded && d2[idx] != kUnreachable && static_cast<double>(d2[idx]) <= thr;
      if (mask.at(y, x))
        (near ? bands.p_inn : bands.p_fore_inn).push_back(idx);
      else
        (near ? bands.p_out : bands.p_back_out).push_back(idx);
    }
  return bands;
}

WeightMap boundary_weight_map(const BinaryMask& mask, float band, float w_boundary,
                              float w_interior) {
  if (band < 0) throw std::invalid_argument("boundary_weight_map: band must be >= 0");
  if (!(0.f <= w_boundary && w_boundary <= w_interior))
    throw std::invalid_argument("boundary_weight_map: need 0 <= w_boundary <= w_interior");
  WeightMap wm(mask.h, mask.w, w_interior);
  const auto contour = extract_contour(mask);
  if (contour.empty()) return wm;
  const auto d2 = distance_sq_to(mask, contour);
  const double thr = static_cast<double>(band) * static_cast<double>(band);
  for (size_t i = 0; i < wm.v.size(); ++i)
    if (d2[i] != kUnreachable && static_cast<double>(d2[i]) <= thr) wm.v[i] = w_boundary;
  return wm;
}

BinaryMask downsample_majority(const BinaryMask& mask, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0 || out_h > mask.h || out_w > mask.w)
    throw std::invalid_argument("downsample_majority: bad output dims");
  BinaryMask out(out_h, out_w);
  // Exact rational overlap: pixel row py overlaps cell row i by
  // min((i+1)H, (py+1)oh) - max(iH, py*oh) in units of 1/oh, analogous in x.
  const std::int64_t H = mask.h, W = mask.w, OH = out_h, OW = out_w;
  for (int i = 0; i < out_h; ++i) {
    const std::int64_t cy0 = i * H, cy1 = (i + 1) * H;  // in units of 1/oh
    const int py0 = static_cast<int>(cy0 / OH);
    const int py1 = static_cast<int>((cy1 + OH - 1) / OH);
    for (int j = 0; j < out_w; ++j) {
      const std::int64_t cx0 = j * W, cx1 = (j + 1) * W;
      const int px0 = static_cast<int>(cx0 / OW);
      const int px1 = static_cast<int>((cx1 + OW - 1) / OW);
      std::int64_t fg = 0;
      for (int py = py0; py < py1 && py < mask.h; ++py) {
        const std::int64_t oly =
            std::min<std::int64_t>(cy1, (py + 1) * OH) - std::max<std::int64_t>(cy0, py * OH);
        if (oly <= 0) continue;
        for (int px = px0; px < px1 && px < mask.w; ++px) {
          if (!mask.at(py, px)) continue;
          const std::int64_t olx =
              std::min<std::int64_t>(cx1, (px + 1) * OW) - std::max<std::int64_t>(cx0, px * OW);
          if (olx > 0) fg += oly * olx;
        }
      }
      out.set(i, j, 2 * fg > H * W);  // ties to background
    }
  }
  return out;
}

BinaryMask rasterize_box_majority(const BinaryMask& mask, const Box& box, int out_h,
                                  int out_w) {
  BinaryMask out(out_h, out_w);
  const double bw = box.width(), bh = box.height();
  if (bw <= 0 || bh <= 0) return out;
  const double ch = bh / out_h, cw = bw / out_w;
  for (int i = 0; i < out_h; ++i) {
    const double y0 = box.y1 + i * ch, y1 = y0 + ch;
    for (int j = 0; j < out_w; ++j) {
      const double x0 = box.x1 + j * cw, x1 = x0 + cw;
      double fg = 0.0;
      const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
      const int py1 = std::min(mask.h, static_cast<int>(std::ceil(y1)));
      const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
      const int px1 = std::min(mask.w, static_cast<int>(std::ceil(x1)));
      for (int py = py0; py < py1; ++py) {
        const double oly = std::min(y1, py + 1.0) - std::max(y0, static_cast<double>(py));
        if (oly <= 0) continue;
        for (int px = px0; px < px1; ++px) {
          if (!mask.at(py, px)) continue;
          const double olx = std::min(x1, px + 1.0) - std::max(x0, static_cast<double>(px));
          if (olx > 0) fg += oly * olx;
        }
      }
      out.set(i, j, fg > 0.5 * ch * cw);
    }
  }
  return out;
}

void paste_instance(InstanceLabelMap& dst, const BinaryMask& roi_mask, const Box& box,
                    std::uint16_t id) {
  const double bw = box.width(), bh = box.height();
  if (bw <= 0 || bh <= 0) return;
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y1)));
  const int y1 = std::min(dst.h, static_cast<int>(std::ceil(box.y2)));
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x1)));
  const int x1 = std::min(dst.w, static_cast<int>(std::ceil(box.x2)));
  for (int y = y0; y < y1; ++y) {
    const double v = (y + 0.5 - box.y1) / bh * roi_mask.h;
    const int my = std::clamp(static_cast<int>(std::floor(v)), 0, roi_mask.h - 1);
    if (y + 0.5 < box.y1 || y + 0.5 > box.y2) continue;
    for (int x = x0; x < x1; ++x) {
      if (x + 0.5 < box.x1 || x + 0.5 > box.x2) continue;
      const double u = (x + 0.5 - box.x1) / bw * roi_mask.w;
      const int mx = std::clamp(static_cast<int>(std::floor(u)), 0, roi_mask.w - 1);
      if (roi_mask.at(my, mx)) dst.set(y, x, id);
    }
  }
}

bool instance_box(const InstanceLabelMap& labels, std::uint16_t id, Box* out) {
  int miny = labels.h, maxy = -1, minx = labels.w, maxx = -1;
  for (int y = 0; y < labels.h; ++y)
    for (int x = 0; x < labels.w; ++x)
      if (labels.at(y, x) == id) {
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
      }
  if (maxy < 0) return false;
  *out = Box{static_cast<float>(minx), static_cast<float>(miny),
             static_cast<float>(maxx + 1), static_cast<float>(maxy + 1)};
  return true;
}

}  // namespace nucseg
