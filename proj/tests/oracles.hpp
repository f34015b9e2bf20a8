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

// Test-side reference implementations, deliberately written the slow obvious
// way and kept independent of the library's computation paths: brute-force
// band construction, exhaustive overlap-table metrics, and central finite
// differences. The production code is checked against these, never the other
// way around.

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "nucseg/geometry.hpp"
#include "nucseg/rng.hpp"
#include "nucseg/types.hpp"

namespace nucseg::oracle {

/// All-pairs Euclidean distance band construction (O(N^2) per mask).
struct BruteBands {
  std::vector<std::int32_t> contour, p_inn, p_out, p_fore_inn, p_back_out;
};

inline BruteBands brute_bands(const BinaryMask& mask, float d) {
  BruteBands out;
  // Contour rule mirrors the documented definition: foreground with a
  // background 4-neighbor, image border counts as background.
  std::vector<std::pair<int, int>> contour_pts;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = y == 0 || y == mask.h - 1 || x == 0 || x == mask.w - 1;
      const bool bg = (y > 0 && !mask.at(y - 1, x)) || (y < mask.h - 1 && !mask.at(y + 1, x)) ||
                      (x > 0 && !mask.at(y, x - 1)) || (x < mask.w - 1 && !mask.at(y, x + 1));
      if (edge || bg) {
        out.contour.push_back(y * mask.w + x);
        contour_pts.push_back({y, x});
      }
    }
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      const std::int32_t idx = y * mask.w + x;
      bool near = false;
      if (d > 0)
        for (const auto& [cy, cx] : contour_pts) {
          const long dy = y - cy, dx = x - cx;
          if (static_cast<double>(dy * dy + dx * dx) <=
              static_cast<double>(d) * static_cast<double>(d)) {
            near = true;
            break;
          }
        }
      if (mask.at(y, x))
        (near ? out.p_inn : out.p_fore_inn).push_back(idx);
      else
        (near ? out.p_out : out.p_back_out).push_back(idx);
    }
  return out;
}

/// Exhaustive nested-loop overlap tables and metric formulas.
struct BruteOverlaps {
  std::map<int, long> gt_area, pred_area;
  std::map<std::pair<int, int>, long> inter;
};

inline BruteOverlaps brute_overlaps(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  BruteOverlaps t;
  for (int g = 1; g <= gt.max_id(); ++g) {
    long a = 0;
    for (auto v : gt.v) a += v == g;
    if (a) t.gt_area[g] = a;
  }
  for (int p = 1; p <= pred.max_id(); ++p) {
    long a = 0;
    for (auto v : pred.v) a += v == p;
    if (a) t.pred_area[p] = a;
  }
  for (const auto& [g, ga] : t.gt_area)
    for (const auto& [p, pa] : t.pred_area) {
      long i = 0;
      for (size_t k = 0; k < gt.v.size(); ++k) i += gt.v[k] == g && pred.v[k] == p;
      if (i) t.inter[{g, p}] = i;
    }
  return t;
}

inline double brute_dice(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  long p = 0, g = 0, both = 0;
  for (size_t i = 0; i < gt.v.size(); ++i) {
    p += pred.v[i] != 0;
    g += gt.v[i] != 0;
    both += pred.v[i] != 0 && gt.v[i] != 0;
  }
  return p + g == 0 ? 100.0 : 200.0 * both / static_cast<double>(p + g);
}

inline double brute_aji(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  const auto t = brute_overlaps(pred, gt);
  if (t.gt_area.empty() && t.pred_area.empty()) return 100.0;
  long num = 0, den = 0;
  std::map<int, bool> used;
  for (const auto& [g, ga] : t.gt_area) {
    double best_j = 0;
    int best_p = 0;
    long best_i = 0;
    for (const auto& [p, pa] : t.pred_area) {
      const auto it = t.inter.find({g, p});
      if (it == t.inter.end()) continue;
      const double j = static_cast<double>(it->second) / (ga + pa - it->second);
      if (j > best_j) {
        best_j = j;
        best_p = p;
        best_i = it->second;
      }
    }
    if (best_p) {
      num += best_i;
      den += ga + t.pred_area.at(best_p) - best_i;
      used[best_p] = true;
    } else {
      den += ga;
    }
  }
  for (const auto& [p, pa] : t.pred_area)
    if (!used.count(p)) den += pa;
  return den == 0 ? 100.0 : 100.0 * num / static_cast<double>(den);
}

struct BrutePq {
  double pq = 0, sq = 0, rq = 0;
  long tp = 0, fp = 0, fn = 0;
};

inline BrutePq brute_pq(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  const auto t = brute_overlaps(pred, gt);
  BrutePq r;
  if (t.gt_area.empty() && t.pred_area.empty()) {
    r.pq = r.sq = r.rq = 100.0;
    return r;
  }
  double iou_sum = 0;
  for (const auto& [gp, i] : t.inter) {
    const double iou =
        static_cast<double>(i) / (t.gt_area.at(gp.first) + t.pred_area.at(gp.second) - i);
    if (iou > 0.5) {
      ++r.tp;
      iou_sum += iou;
    }
  }
  r.fp = static_cast<long>(t.pred_area.size()) - r.tp;
  r.fn = static_cast<long>(t.gt_area.size()) - r.tp;
  r.sq = r.tp ? 100.0 * iou_sum / r.tp : 0.0;
  const double den = r.tp + 0.5 * r.fp + 0.5 * r.fn;
  r.rq = den > 0 ? 100.0 * r.tp / den : 0.0;
  r.pq = r.sq * r.rq / 100.0;
  return r;
}

/// Central finite differences with the acceptance step (1e-4, float64).
inline double central_diff(const std::function<double(double)>& f, double x,
                           double step = 1e-4) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

/// Central differences evaluated at two step sizes; `smooth` reports whether
/// they agree, i.e. whether the function is locally C^2 (probes that straddle
/// a ReLU or smooth-L1 kink are not valid derivative estimates).
inline double central_diff_checked(const std::function<double(double)>& f, double x,
                                   bool* smooth, double step = 1e-4) {
  const double a = central_diff(f, x, step);
  const double b = central_diff(f, x, step / 2);
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  if (smooth) *smooth = std::abs(a - b) / scale < 1e-3;
  return b;
}

/// Relative error with an absolute floor for near-zero gradients. The floor
/// defaults to tiny; gradient checks pass a floor tied to the gradient scale
/// of the probed tensor so truncation noise on negligible coordinates does
/// not drown the comparison.
inline double rel_err(double got, double want, double floor = 1e-8) {
  const double denom = std::max({std::abs(got), std::abs(want), floor});
  return std::abs(got - want) / denom;
}

/// 1e-3 of the largest gradient magnitude: coordinates far below the tensor's
/// own scale are compared against this floor instead of their tiny selves.
template <typename It>
double grad_floor(It begin, It end) {
  double m = 0;
  for (It it = begin; it != end; ++it) m = std::max(m, std::abs(static_cast<double>(*it)));
  return std::max(1e-3 * m, 1e-9);
}

/// Random instance label map: k axis-aligned blobs stamped in order
/// (overwrites allowed), then relabeled to skip vanished ids.
inline InstanceLabelMap random_label_map(int h, int w, int max_instances, Rng& rng) {
  InstanceLabelMap m(h, w);
  const int k = static_cast<int>(rng.uniform_int(0, max_instances));
  for (int id = 1; id <= k; ++id) {
    const int bw = static_cast<int>(rng.uniform_int(1, std::max(1, w / 2)));
    const int bh = static_cast<int>(rng.uniform_int(1, std::max(1, h / 2)));
    const int x0 = static_cast<int>(rng.uniform_int(0, w - bw));
    const int y0 = static_cast<int>(rng.uniform_int(0, h - bh));
    for (int y = y0; y < y0 + bh; ++y)
      for (int x = x0; x < x0 + bw; ++x) m.set(y, x, static_cast<std::uint16_t>(id));
  }
  // Compact ids so every nonzero id is present.
  std::vector<std::uint16_t> remap(k + 1, 0);
  std::uint16_t next = 1;
  for (auto v : m.v)
    if (v && !remap[v]) remap[v] = next++;
  for (auto& v : m.v) v = remap[v];
  return m;
}

inline BinaryMask random_mask(int h, int w, Rng& rng, double fg_prob = -1) {
  BinaryMask m(h, w);
  if (fg_prob < 0) {
    // Blobby masks: a few random ellipses, more like real instance masks.
    const int k = static_cast<int>(rng.uniform_int(0, 4));
    for (int i = 0; i < k; ++i) {
      const double cx = rng.uniform(0, w), cy = rng.uniform(0, h);
      const double rx = rng.uniform(1, w / 3.0), ry = rng.uniform(1, h / 3.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double u = (x + 0.5 - cx) / rx, v = (y + 0.5 - cy) / ry;
          if (u * u + v * v <= 1) m.set(y, x, true);
        }
    }
  } else {
    for (auto& v : m.v) v = rng.uniform() < fg_prob ? 1 : 0;
  }
  return m;
}

}  // namespace nucseg::oracle
