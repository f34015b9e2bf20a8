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

#include "nucseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nucseg {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Stable BCE on a logit: max(l,0) - l*t + log(1 + e^{-|l|}).
double bce_logit(double l, double t) {
  return std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
}

double smooth_l1(double e, double* de) {
  const double a = std::abs(e);
  if (a < 1.0) {
    if (de) *de = e;
    return 0.5 * e * e;
  }
  if (de) *de = e > 0 ? 1.0 : -1.0;
  return a - 0.5;
}

double norm2(const Vec& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// cos(a,b) plus its partials w.r.t. both vectors (added into da/db scaled by g).
double cosine(const Vec& a, const Vec& b) {
  const double na = norm2(a), nb = norm2(b);
  if (na < 1e-12 || nb < 1e-12)
    throw std::invalid_argument("cl_term: zero-norm vector (normalize upstream)");
  return dot(a, b) / (na * nb);
}

void cosine_backward(const Vec& a, const Vec& b, double g, Vec* da, Vec* db) {
  const double na = norm2(a), nb = norm2(b);
  const double c = dot(a, b) / (na * nb);
  for (size_t i = 0; i < a.size(); ++i) {
    if (da) (*da)[i] += g * (b[i] / (na * nb) - c * a[i] / (na * na));
    if (db) (*db)[i] += g * (a[i] / (na * nb) - c * b[i] / (nb * nb));
  }
}

}  // namespace

double seg_loss(const Tensor3<double>& logits, const BinaryMask& target,
                const WeightMap* weights, Tensor3<double>* dlogits) {
  if (logits.c != 1 || logits.h != target.h || logits.w != target.w)
    throw std::invalid_argument("seg_loss: logits/target shape mismatch");
  if (weights && (weights->h != target.h || weights->w != target.w))
    throw std::invalid_argument("seg_loss: weight map shape mismatch");
  if (dlogits && !dlogits->same_shape(logits)) *dlogits = Tensor3<double>(1, logits.h, logits.w);

  const size_t n = target.size();
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double t = target.v[i] ? 1.0 : 0.0;
    const double w = weights ? weights->v[i] : 1.0;
    sum += w * bce_logit(logits.v[i], t);
    if (dlogits) dlogits->v[i] += w * (sigmoid(logits.v[i]) - t) / static_cast<double>(n);
  }
  return sum / static_cast<double>(n);
}

AnchorMatch match_anchors(const std::vector<Box>& anchors, const std::vector<Box>& targets) {
  AnchorMatch m;
  m.label.assign(anchors.size(), -1);
  m.match.assign(anchors.size(), -1);
  for (size_t i = 0; i < anchors.size(); ++i) {
    float best = 0.f;
    int arg = -1;
    for (size_t t = 0; t < targets.size(); ++t) {
      const float iou = box_iou(anchors[i], targets[t]);
      if (iou > best) {
        best = iou;
        arg = static_cast<int>(t);
      }
    }
    if (best >= 0.5f) {
      m.label[i] = 1;
      m.match[i] = arg;
    } else if (best >= 0.3f) {
      m.label[i] = 0;  // ignored
    }
  }
  return m;
}

void encode_box_offsets(const Box& anchor, const Box& target, double out[4]) {
  const double aw = anchor.width(), ah = anchor.height();
  out[0] = (target.cx() - anchor.cx()) / aw;
  out[1] = (target.cy() - anchor.cy()) / ah;
  out[2] = std::log(target.width() / aw);
  out[3] = std::log(target.height() / ah);
}

Box decode_box_offsets(const Box& anchor, const double off[4], int img_h, int img_w) {
  const double aw = anchor.width(), ah = anchor.height();
  const double cx = anchor.cx() + off[0] * aw;
  const double cy = anchor.cy() + off[1] * ah;
  const double w = aw * std::exp(std::clamp(off[2], -4.0, 4.0));
  const double h = ah * std::exp(std::clamp(off[3], -4.0, 4.0));
  Box b;
  b.x1 = static_cast<float>(std::clamp(cx - 0.5 * w, 0.0, static_cast<double>(img_w)));
  b.y1 = static_cast<float>(std::clamp(cy - 0.5 * h, 0.0, static_cast<double>(img_h)));
  b.x2 = static_cast<float>(std::clamp(cx + 0.5 * w, 0.0, static_cast<double>(img_w)));
  b.y2 = static_cast<float>(std::clamp(cy + 0.5 * h, 0.0, static_cast<double>(img_h)));
  return b;
}

double det_loss(const Tensor3<double>& raw, const std::vector<Box>& anchors,
                const std::vector<Box>& targets, Tensor3<double>* draw) {
  const int per_cell = raw.h * raw.w;
  const int a_per_cell = raw.c / 5;
  if (raw.c % 5 != 0 || anchors.size() != static_cast<size_t>(a_per_cell) * per_cell)
    throw std::invalid_argument("det_loss: raw/anchor layout mismatch");
  if (draw && !draw->same_shape(raw)) *draw = Tensor3<double>(raw.c, raw.h, raw.w);

  const auto m = match_anchors(anchors, targets);
  long n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < anchors.size(); ++i) {
    if (m.label[i] == 1) ++n_pos;
    if (m.label[i] == -1) ++n_neg;
  }
  if (n_pos + n_neg == 0) return 0.0;

  // Positive anchors are vastly outnumbered, so the objectness term balances
  // the two pools instead of averaging over every anchor.
  const double w_pos = n_pos ? (n_neg ? 0.5 / n_pos : 1.0 / n_pos) : 0.0;
  const double w_neg = n_neg ? (n_pos ? 0.5 / n_neg : 1.0 / n_neg) : 0.0;

  double cls = 0.0, reg = 0.0;
  for (size_t i = 0; i < anchors.size(); ++i) {
    if (m.label[i] == 0) continue;
    const int a = static_cast<int>(i) / per_cell;
    const int cell = static_cast<int>(i) % per_cell;
    const size_t obj_idx = (static_cast<size_t>(a) * 5) * per_cell + cell;
    const double t = m.label[i] == 1 ? 1.0 : 0.0;
    const double w = m.label[i] == 1 ? w_pos : w_neg;
    cls += w * bce_logit(raw.v[obj_idx], t);
    if (draw) draw->v[obj_idx] += w * (sigmoid(raw.v[obj_idx]) - t);
    if (m.label[i] == 1) {
      double want[4];
      encode_box_offsets(anchors[i], targets[m.match[i]], want);
      for (int k = 0; k < 4; ++k) {
        const size_t idx = (static_cast<size_t>(a) * 5 + 1 + k) * per_cell + cell;
        double de = 0;
        reg += smooth_l1(raw.v[idx] - want[k], &de);
        if (draw) draw->v[idx] += de / static_cast<double>(n_pos);
      }
    }
  }
  if (n_pos > 0) reg /= static_cast<double>(n_pos);
  return cls + reg;
}

double cl_term(const Vec& q, const std::vector<Vec>& positives,
               const std::vector<Vec>& negatives, double tau, Vec* dq,
               std::vector<Vec>* dpositives, std::vector<Vec>* dnegatives) {
  if (positives.empty()) throw std::invalid_argument("cl_term: positives must be non-empty");
  if (tau <= 0) throw std::invalid_argument("cl_term: tau must be > 0");
  const size_t np = positives.size(), nn = negatives.size();

  std::vector<double> s_pos(np), s_neg(nn);
  for (size_t i = 0; i < np; ++i) s_pos[i] = cosine(q, positives[i]) / tau;
  for (size_t i = 0; i < nn; ++i) s_neg[i] = cosine(q, negatives[i]) / tau;

  if (dq) dq->assign(q.size(), 0.0);
  if (dpositives) dpositives->assign(np, Vec(q.size(), 0.0));
  if (dnegatives) dnegatives->assign(nn, Vec(q.size(), 0.0));

  double total = 0.0;
  std::vector<double> g_neg(nn, 0.0);  // accumulated dL/ds_neg over positives
  for (size_t p = 0; p < np; ++p) {
    double mx = s_pos[p];
    for (double s : s_neg) mx = std::max(mx, s);
    double z = std::exp(s_pos[p] - mx);
    const double z_pos = z;
    for (double s : s_neg) z += std::exp(s - mx);
    total += std::log(z) + mx - s_pos[p];

    if (dq || dpositives || dnegatives) {
      const double w_pos = z_pos / z;
      const double gp = (w_pos - 1.0) / static_cast<double>(np);
      if (dq || dpositives)
        cosine_backward(q, positives[p], gp / tau, dq,
                        dpositives ? &(*dpositives)[p] : nullptr);
      for (size_t i = 0; i < nn; ++i)
        g_neg[i] += (std::exp(s_neg[i] - mx) / z) / static_cast<double>(np);
    }
  }
  if (dq || dnegatives)
    for (size_t i = 0; i < nn; ++i)
      cosine_backward(q, negatives[i], g_neg[i] / tau, dq,
                      dnegatives ? &(*dnegatives)[i] : nullptr);
  return total / static_cast<double>(np);
}

double crc_loss(const Vec& q_b, const Vec& q_f, const std::vector<Vec>& k_back,
                const std::vector<Vec>& k_out, const std::vector<Vec>& k_fore,
                const std::vector<Vec>& k_inn, double tau, CrcLossGrads* grads) {
  if (k_back.empty() || k_out.empty() || k_fore.empty() || k_inn.empty())
    throw std::invalid_argument("crc_loss: all four key sets must be non-empty");

  const size_t d = q_b.size();
  Vec dq_b, dq_f;
  std::vector<Vec> g_back, g_out, g_fore, g_inn;
  auto add_into = [](std::vector<Vec>& acc, const std::vector<Vec>& delta) {
    if (acc.empty()) {
      acc = delta;
      return;
    }
    for (size_t i = 0; i < acc.size(); ++i)
      for (size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += delta[i][j];
  };
  auto add_vec = [](Vec& acc, const Vec& delta) {
    if (acc.empty()) {
      acc = delta;
      return;
    }
    for (size_t j = 0; j < acc.size(); ++j) acc[j] += delta[j];
  };

  double loss = 0.0;
  Vec dq;
  std::vector<Vec> dp, dn;
  const bool want = grads != nullptr;

  loss += cl_term(q_b, k_back, k_fore, tau, want ? &dq : nullptr, want ? &dp : nullptr,
                  want ? &dn : nullptr);
  if (want) { add_vec(dq_b, dq); add_into(g_back, dp); add_into(g_fore, dn); }

  loss += cl_term(q_b, k_out, k_inn, tau, want ? &dq : nullptr, want ? &dp : nullptr,
                  want ? &dn : nullptr);
  if (want) { add_vec(dq_b, dq); add_into(g_out, dp); add_into(g_inn, dn); }

  loss += cl_term(q_f, k_fore, k_back, tau, want ? &dq : nullptr, want ? &dp : nullptr,
                  want ? &dn : nullptr);
  if (want) { add_vec(dq_f, dq); add_into(g_fore, dp); add_into(g_back, dn); }

  loss += cl_term(q_f, k_inn, k_out, tau, want ? &dq : nullptr, want ? &dp : nullptr,
                  want ? &dn : nullptr);
  if (want) { add_vec(dq_f, dq); add_into(g_inn, dp); add_into(g_out, dn); }

  if (want) {
    grads->dq_b = dq_b.empty() ? Vec(d, 0.0) : dq_b;
    grads->dq_f = dq_f.empty() ? Vec(d, 0.0) : dq_f;
    grads->dk_back = std::move(g_back);
    grads->dk_out = std::move(g_out);
    grads->dk_fore = std::move(g_fore);
    grads->dk_inn = std::move(g_inn);
  }
  return loss;
}

}  // namespace nucseg
