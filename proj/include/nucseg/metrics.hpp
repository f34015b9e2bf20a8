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

#include "nucseg/types.hpp"

namespace nucseg {

/// Dice / AJI / PQ for one evaluation (single map or a pooled run).
/// All headline values are percentages in [0, 100].
struct MetricsReport {
  double dice = 0.0;
  double aji = 0.0;
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  long tp = 0, fp = 0, fn = 0;
};

/// Semantic Dice over binarized foregrounds; both empty -> 100.
double dice(const InstanceLabelMap& pred, const InstanceLabelMap& gt);

/// Aggregated Jaccard Index, original greedy formulation: per GT instance the
/// best-Jaccard prediction is matched (a prediction may be claimed more than
/// once); unmatched areas on both sides inflate the denominator.
double aji(const InstanceLabelMap& pred, const InstanceLabelMap& gt);

/// Panoptic quality under strict IoU > 0.5 matching.
struct PqResult {
  double pq = 0.0, sq = 0.0, rq = 0.0;
  long tp = 0, fp = 0, fn = 0;
};
PqResult pq(const InstanceLabelMap& pred, const InstanceLabelMap& gt);

MetricsReport compute_metrics(const InstanceLabelMap& pred, const InstanceLabelMap& gt);

/// Run-level aggregation: Dice and AJI are per-image means; PQ/SQ/RQ are
/// pooled over all images (the canonical dataset-level PQ), which keeps the
/// pq = sq * rq / 100 identity intact.
MetricsReport aggregate_metrics(const std::vector<MetricsReport>& per_image,
                                const std::vector<PqResult>& pq_pool);

std::string metrics_to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const std::string& text);

/// Fixed-width Dice/AJI/PQ table, one row per (label, report).
std::string format_metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace nucseg
