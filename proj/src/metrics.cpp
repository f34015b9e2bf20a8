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

#include "nucseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace nucseg {

namespace {

void require_same_shape(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw std::invalid_argument("metrics: shape mismatch between prediction and ground truth");
}

struct OverlapTable {
  std::vector<long> gt_area;    // indexed by gt id (0 unused)
  std::vector<long> pred_area;  // indexed by pred id (0 unused)
  // inter[g] = sorted (pred id, pixels) pairs with nonzero overlap
  std::vector<std::vector<std::pair<int, long>>> inter;
};

OverlapTable build_overlaps(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  OverlapTable t;
  t.gt_area.assign(gt.max_id() + 1, 0);
  t.pred_area.assign(pred.max_id() + 1, 0);
  std::map<std::pair<int, int>, long> pairs;
  for (size_t i = 0; i < gt.v.size(); ++i) {
    const int g = gt.v[i], p = pred.v[i];
    if (g) ++t.gt_area[g];
    if (p) ++t.pred_area[p];
    if (g && p) ++pairs[{g, p}];
  }
  t.inter.assign(t.gt_area.size(), {});
  for (const auto& [key, n] : pairs) t.inter[key.first].push_back({key.second, n});
  return t;
}

}  // namespace

double dice(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  require_same_shape(pred, gt);
  long p = 0, g = 0, both = 0;
  for (size_t i = 0; i < gt.v.size(); ++i) {
    const bool pf = pred.v[i] != 0, gf = gt.v[i] != 0;
    p += pf;
    g += gf;
    both += pf && gf;
  }
  if (p + g == 0) return 100.0;
  return 100.0 * 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double aji(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  require_same_shape(pred, gt);
  const auto t = build_overlaps(pred, gt);
  const int n_gt = static_cast<int>(t.gt_area.size()) - 1;
  const int n_pred = static_cast<int>(t.pred_area.size()) - 1;
  if (n_gt <= 0 && n_pred <= 0) return 100.0;

  long num = 0, den = 0;
  std::vector<char> used(t.pred_area.size(), 0);
  for (int g = 1; g <= n_gt; ++g) {
    if (t.gt_area[g] == 0) continue;
    double best_j = 0.0;
    int best_p = 0;
    long best_i = 0;
    for (const auto& [p, inter] : t.inter[g]) {
      const long uni = t.gt_area[g] + t.pred_area[p] - inter;
      const double j = static_cast<double>(inter) / static_cast<double>(uni);
      if (j > best_j) {
        best_j = j;
        best_p = p;
        best_i = inter;
      }
    }
    if (best_p != 0) {
      num += best_i;
      den += t.gt_area[g] + t.pred_area[best_p] - best_i;
      used[best_p] = 1;
    } else {
      den += t.gt_area[g];  // ground truth nobody predicted
    }
  }
  for (size_t p = 1; p < t.pred_area.size(); ++p)
    if (!used[p]) den += t.pred_area[p];
  if (den == 0) return 100.0;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

PqResult pq(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  require_same_shape(pred, gt);
  const auto t = build_overlaps(pred, gt);
  int n_gt = 0, n_pred = 0;
  for (size_t g = 1; g < t.gt_area.size(); ++g) n_gt += t.gt_area[g] > 0;
  for (size_t p = 1; p < t.pred_area.size(); ++p) n_pred += t.pred_area[p] > 0;

  PqResult r;
  if (n_gt == 0 && n_pred == 0) {
    r.pq = r.sq = r.rq = 100.0;
    return r;
  }
  double iou_sum = 0.0;
  for (size_t g = 1; g < t.gt_area.size(); ++g)
    for (const auto& [p, inter] : t.inter[g]) {
      const long uni = t.gt_area[g] + t.pred_area[p] - inter;
      const double iou = static_cast<double>(inter) / static_cast<double>(uni);
      if (iou > 0.5) {  // strict: IoU exactly 0.5 does not match
        ++r.tp;
        iou_sum += iou;
      }
    }
  r.fp = n_pred - r.tp;
  r.fn = n_gt - r.tp;
  r.sq = r.tp > 0 ? 100.0 * iou_sum / r.tp : 0.0;
  const double den = r.tp + 0.5 * r.fp + 0.5 * r.fn;
  r.rq = den > 0 ? 100.0 * r.tp / den : 0.0;
  r.pq = r.sq * r.rq / 100.0;
  return r;
}

MetricsReport compute_metrics(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  MetricsReport rep;
  rep.dice = dice(pred, gt);
  rep.aji = aji(pred, gt);
  const auto q = pq(pred, gt);
  rep.pq = q.pq;
  rep.sq = q.sq;
  rep.rq = q.rq;
  rep.tp = q.tp;
  rep.fp = q.fp;
  rep.fn = q.fn;
  return rep;
}

MetricsReport aggregate_metrics(const std::vector<MetricsReport>& per_image,
                                const std::vector<PqResult>& pq_pool) {
  MetricsReport agg;
  if (per_image.empty()) return agg;
  for (const auto& r : per_image) {
    agg.dice += r.dice;
    agg.aji += r.aji;
  }
  agg.dice /= static_cast<double>(per_image.size());
  agg.aji /= static_cast<double>(per_image.size());

  long tp = 0, fp = 0, fn = 0;
  double iou_sum = 0.0;
  bool any_instances = false;
  for (const auto& q : pq_pool) {
    tp += q.tp;
    fp += q.fp;
    fn += q.fn;
    iou_sum += q.sq / 100.0 * q.tp;
    any_instances = any_instances || (q.tp + q.fp + q.fn) > 0;
  }
  agg.tp = tp;
  agg.fp = fp;
  agg.fn = fn;
  if (!any_instances) {
    agg.pq = agg.sq = agg.rq = 100.0;  // vacuously perfect run
    return agg;
  }
  agg.sq = tp > 0 ? 100.0 * iou_sum / tp : 0.0;
  const double den = tp + 0.5 * fp + 0.5 * fn;
  agg.rq = den > 0 ? 100.0 * tp / den : 0.0;
  agg.pq = agg.sq * agg.rq / 100.0;
  return agg;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["dice"] = r.dice;
  j["aji"] = r.aji;
  j["pq"] = r.pq;
  j["sq"] = r.sq;
  j["rq"] = r.rq;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricsReport r;
  r.dice = j.at("dice").get<double>();
  r.aji = j.at("aji").get<double>();
  r.pq = j.at("pq").get<double>();
  r.sq = j.at("sq").get<double>();
  r.rq = j.at("rq").get<double>();
  r.tp = j.at("tp").get<long>();
  r.fp = j.at("fp").get<long>();
  r.fn = j.at("fn").get<long>();
  return r;
}

std::string format_metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-24s %8s %8s %8s\n", "Run", "Dice", "AJI", "PQ");
  out += buf;
  out += std::string(52, '-') + "\n";
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf), "%-24s %8.2f %8.2f %8.2f\n", name.c_str(), r.dice,
                  r.aji, r.pq);
    out += buf;
  }
  return out;
}

}  // namespace nucseg
