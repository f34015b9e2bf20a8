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

#include <optional>
#include <vector>

#include "nucseg/tensor.hpp"
#include "nucseg/types.hpp"

namespace nucseg {

using Vec = std::vector<double>;

/// Balancing weights of the student composite loss plus the contrastive
/// temperature. The three omegas default to 1.
struct LossWeights {
  double w1 = 1.0;  // naive high-resolution mask head
  double w2 = 1.0;  // low-resolution denoising head
  double w3 = 1.0;  // contrastive term
  double tau = 0.1;
};

/// Per-pixel binary cross-entropy on sigmoid(logits), optionally weighted,
/// averaged over pixels. Gradients w.r.t. logits accumulate into *dlogits.
double seg_loss(const Tensor3<double>& logits, const BinaryMask& target,
                const WeightMap* weights, Tensor3<double>* dlogits = nullptr);

/// Detection loss over a single-level anchor grid: mean binary cross-entropy
/// on objectness over positive (IoU >= 0.5) and negative (IoU < 0.3) anchors
/// plus smooth-L1 on the box offsets of positives (summed over the four
/// coordinates, averaged over positive anchors).
///
/// raw layout: channels a*5+0 objectness logit, a*5+1..4 offsets (dx,dy,dw,dh);
/// anchors indexed (a*h + y)*w + x.
double det_loss(const Tensor3<double>& raw, const std::vector<Box>& anchors,
                const std::vector<Box>& targets, Tensor3<double>* draw = nullptr);

/// InfoNCE term, eq. per-positive: -log(e^{cos(q,k+)/tau} /
/// (e^{cos(q,k+)/tau} + sum_i e^{cos(q,k-_i)/tau})), averaged over positives.
/// Cosines are computed on the raw vectors (unit-normalized upstream).
/// Throws on empty positives or on a zero-norm vector.
double cl_term(const Vec& q, const std::vector<Vec>& positives,
               const std::vector<Vec>& negatives, double tau, Vec* dq = nullptr,
               std::vector<Vec>* dpositives = nullptr,
               std::vector<Vec>* dnegatives = nullptr);

struct CrcLossGrads {
  Vec dq_b, dq_f;
  std::vector<Vec> dk_back, dk_out, dk_fore, dk_inn;
};

/// The four-pair region contrastive loss:
///   CL(q_b,k_back,k_fore) + CL(q_b,k_out,k_inn) +
///   CL(q_f,k_fore,k_back) + CL(q_f,k_inn,k_out)
/// where the key lists are the cross-RoI concatenations. All four sets must be
/// non-empty.
double crc_loss(const Vec& q_b, const Vec& q_f, const std::vector<Vec>& k_back,
                const std::vector<Vec>& k_out, const std::vector<Vec>& k_fore,
                const std::vector<Vec>& k_inn, double tau,
                CrcLossGrads* grads = nullptr);

inline double teacher_loss(double seg, double det) { return seg + det; }

inline double student_loss(double det, double nmh, double lrd, double cl,
                           const LossWeights& w) {
  return det + w.w1 * nmh + w.w2 * lrd + w.w3 * cl;
}

/// Anchor-to-target assignment shared by det_loss and its tests.
/// label: +1 positive, -1 negative, 0 ignored; match = target index (positives).
struct AnchorMatch {
  std::vector<int> label;
  std::vector<int> match;
};
AnchorMatch match_anchors(const std::vector<Box>& anchors, const std::vector<Box>& targets);

/// Offset parameterization between an anchor and a target box.
void encode_box_offsets(const Box& anchor, const Box& target, double out[4]);
Box decode_box_offsets(const Box& anchor, const double off[4], int img_h, int img_w);

}  // namespace nucseg
