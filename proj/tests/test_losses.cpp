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

#include <cmath>

#include "doctest.h"
#include "nucseg/losses.hpp"
#include "nucseg/rng.hpp"
#include "oracles.hpp"

using namespace nucseg;

namespace {

Vec unit(std::initializer_list<double> xs) {
  Vec v(xs);
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

Vec random_unit(int d, Rng& rng) {
  Vec v(d);
  for (auto& x : v) x = rng.normal();
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(std::max(n, 1e-12));
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace

TEST_CASE("seg_loss closed forms") {
  BinaryMask target(2, 2);
  target.set(0, 0, true);

  // Saturated logits: loss vanishes.
  Tensor3<double> sat(1, 2, 2, -20.0);
  sat.at(0, 0, 0) = 20.0;
  CHECK(seg_loss(sat, target, nullptr) < 1e-8);

  // All-zero logits: ln 2 regardless of target.
  Tensor3<double> zeros(1, 2, 2, 0.0);
  CHECK(seg_loss(zeros, target, nullptr) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Hand-computed weighted case: (0.2+1+1+1)*ln2/4.
  WeightMap w(2, 2, 1.f);
  w.set(0, 0, 0.2f);
  CHECK(seg_loss(zeros, target, &w) ==
        doctest::Approx(0.8 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("seg_loss rejects shape mismatches") {
  Tensor3<double> logits(1, 2, 2, 0.0);
  BinaryMask target(3, 2);
  CHECK_THROWS_AS(seg_loss(logits, target, nullptr), std::invalid_argument);
}

TEST_CASE("det_loss closed forms") {
  // Single-cell grid, one anchor type.
  const std::vector<Box> anchors = {Box{0, 0, 10, 10}};

  Tensor3<double> raw(5, 1, 1, 0.0);
  raw.v[0] = -20.0;  // objectness logit
  CHECK(det_loss(raw, anchors, {}) < 1e-8);

  // One positive anchor with perfect offsets: only the classification term.
  const std::vector<Box> targets = {Box{0, 0, 10, 10}};
  Tensor3<double> raw2(5, 1, 1, 0.0);
  raw2.v[0] = 20.0;
  CHECK(det_loss(raw2, anchors, targets) < 1e-8);

  // Offset error of 0.5 per coordinate: smooth-L1 sums to 4*(0.25/2) = 0.5.
  Tensor3<double> raw3(5, 1, 1, 0.5);
  raw3.v[0] = 20.0;
  double want[4];
  encode_box_offsets(anchors[0], targets[0], want);  // all zero here
  CHECK(det_loss(raw3, anchors, targets) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("cl_term closed forms") {
  const Vec q = unit({1, 0});
  const Vec k_pos = q;

  SUBCASE("no negatives -> exactly zero") {
    CHECK(cl_term(q, {k_pos}, {}, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("antipodal negative") {
    const Vec k_neg = unit({-1, 0});
    CHECK(cl_term(q, {k_pos}, {k_neg}, 1.0) ==
          doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-9));
  }
  SUBCASE("orthogonal positive and negative") {
    const Vec k90 = unit({0, 1});
    CHECK(cl_term(q, {k90}, {unit({0, -1})}, 1.0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }
}

TEST_CASE("cl_term errors") {
  const Vec q = unit({1, 0});
  CHECK_THROWS_AS(cl_term(q, {}, {}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(cl_term(q, {Vec{0.0, 0.0}}, {}, 1.0), std::invalid_argument);
}

TEST_CASE("cl_term is invariant to negative permutation and decreases in cos(q,k+)") {
  Rng rng(21);
  const Vec q = random_unit(8, rng);
  std::vector<Vec> negs;
  for (int i = 0; i < 5; ++i) negs.push_back(random_unit(8, rng));
  const Vec pos = random_unit(8, rng);
  const double base = cl_term(q, {pos}, negs, 0.1);
  std::vector<Vec> shuffled = {negs[3], negs[0], negs[4], negs[2], negs[1]};
  CHECK(cl_term(q, {pos}, shuffled, 0.1) == doctest::Approx(base).epsilon(1e-12));

  // Pulling the positive toward q strictly decreases the loss.
  double prev = cl_term(q, {pos}, negs, 0.1);
  for (double t : {0.25, 0.5, 0.75, 1.0}) {
    Vec mix(8);
    for (int i = 0; i < 8; ++i) mix[i] = (1 - t) * pos[i] + t * q[i];
    const double cur = cl_term(q, {mix}, negs, 0.1);
    CHECK(cur < prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("crc_loss closed forms") {
  const Vec u = unit({1, 0}), v = unit({0, 1});
  SUBCASE("orthogonal symmetric case, one key per set") {
    const double want = 4.0 * std::log1p(std::exp(-1.0));
    CHECK(crc_loss(u, v, {u}, {u}, {v}, {v}, 1.0) == doctest::Approx(want).epsilon(1e-9));
  }
  SUBCASE("identical keys on both sides -> 4*log(1+N)") {
    // With every key equal to q the similarities cancel: each term is
    // -log(1/(1+N)) with N negatives.
    const std::vector<Vec> same = {u, u};
    CHECK(crc_loss(u, u, same, same, same, same, 1.0) ==
          doctest::Approx(4.0 * std::log(3.0)).epsilon(1e-9));
  }
  SUBCASE("empty set throws") {
    CHECK_THROWS_AS(crc_loss(u, v, {}, {u}, {v}, {v}, 1.0), std::invalid_argument);
  }
}

TEST_CASE("crc_loss is symmetric under swapping the RoI concatenation order") {
  Rng rng(22);
  const int d = 6;
  const Vec qb = random_unit(d, rng), qf = random_unit(d, rng);
  std::vector<Vec> bi, bj, oi, oj, fi, fj, ii, ij;
  for (int k = 0; k < 3; ++k) {
    bi.push_back(random_unit(d, rng));
    bj.push_back(random_unit(d, rng));
    oi.push_back(random_unit(d, rng));
    oj.push_back(random_unit(d, rng));
    fi.push_back(random_unit(d, rng));
    fj.push_back(random_unit(d, rng));
    ii.push_back(random_unit(d, rng));
    ij.push_back(random_unit(d, rng));
  }
  auto cat = [](const std::vector<Vec>& a, const std::vector<Vec>& b) {
    std::vector<Vec> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
  };
  const double ij_order = crc_loss(qb, qf, cat(bi, bj), cat(oi, oj), cat(fi, fj),
                                   cat(ii, ij), 0.1);
  const double ji_order = crc_loss(qb, qf, cat(bj, bi), cat(oj, oi), cat(fj, fi),
                                   cat(ij, ii), 0.1);
  CHECK(ij_order == doctest::Approx(ji_order).epsilon(1e-12));
}

TEST_CASE("losses are non-negative and seg_loss vanishes only at saturation") {
  Rng rng(55);
  for (int t = 0; t < 30; ++t) {
    BinaryMask target(4, 4);
    for (auto& v : target.v) v = rng.uniform() < 0.5;
    Tensor3<double> logits(1, 4, 4);
    for (auto& v : logits.v) v = rng.uniform(-6, 6);
    const double loss = seg_loss(logits, target, nullptr);
    CHECK(loss >= 0.0);
    CHECK(loss > 1e-8);  // finite logits never reach exactly zero
  }
  BinaryMask target(2, 2);
  target.set(0, 1, true);
  Tensor3<double> sat(1, 2, 2, -40.0);
  sat.at(0, 0, 1) = 40.0;
  CHECK(seg_loss(sat, target, nullptr) < 1e-12);
}

TEST_CASE("teacher and student composites") {
  CHECK(teacher_loss(0, 0) == 0.0);
  CHECK(teacher_loss(0.3, 0.2) == doctest::Approx(0.5));
  LossWeights w;
  CHECK(student_loss(0, 0, 0, 0, w) == 0.0);
  CHECK(student_loss(1, 1, 1, 1, w) == doctest::Approx(4.0));  // omegas default to 1
  w.w1 = 2;
  w.w2 = 0;
  w.w3 = 1;
  CHECK(student_loss(0.5, 0.2, 0.1, 0.3, w) == doctest::Approx(1.2));
}

// ---- gradient checks (float64 central differences, step 1e-4) -------------

TEST_CASE("seg_loss gradient matches finite differences") {
  Rng rng(31);
  BinaryMask target(3, 3);
  for (auto& v : target.v) v = rng.uniform() < 0.5;
  WeightMap w(3, 3, 1.f);
  w.set(1, 1, 0.2f);
  Tensor3<double> logits(1, 3, 3);
  for (auto& v : logits.v) v = rng.uniform(-2, 2);

  Tensor3<double> grad;
  seg_loss(logits, target, &w, &grad);
  const double floor = oracle::grad_floor(grad.v.begin(), grad.v.end());
  for (int i = 0; i < 9; ++i) {
    const double fd = oracle::central_diff(
        [&](double x) {
          Tensor3<double> l = logits;
          l.v[i] = x;
          return seg_loss(l, target, &w);
        },
        logits.v[i]);
    CHECK(oracle::rel_err(grad.v[i], fd, floor) < 1e-4);
  }
}

TEST_CASE("det_loss gradient matches finite differences") {
  Rng rng(32);
  // 2x2 grid, one anchor size.
  std::vector<Box> anchors;
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      anchors.push_back(Box{8.f * x, 8.f * y, 8.f * x + 10, 8.f * y + 10});
  const std::vector<Box> targets = {Box{0, 0, 9, 9}};
  Tensor3<double> raw(5, 2, 2);
  for (auto& v : raw.v) v = rng.uniform(-1, 1);

  Tensor3<double> grad;
  det_loss(raw, anchors, targets, &grad);
  const double floor = oracle::grad_floor(grad.v.begin(), grad.v.end());
  for (size_t i = 0; i < raw.size(); ++i) {
    bool smooth = true;
    const double fd = oracle::central_diff_checked(
        [&](double x) {
          Tensor3<double> r = raw;
          r.v[i] = x;
          return det_loss(r, anchors, targets);
        },
        raw.v[i], &smooth);
    if (!smooth) continue;  // probe straddles the smooth-L1 kink
    CHECK(oracle::rel_err(grad.v[i], fd, floor) < 1e-4);
  }
}

TEST_CASE("cl_term gradients match finite differences") {
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 5;
    Vec q = random_unit(d, rng);
    std::vector<Vec> pos = {random_unit(d, rng), random_unit(d, rng)};
    std::vector<Vec> neg = {random_unit(d, rng), random_unit(d, rng), random_unit(d, rng)};

    Vec dq;
    std::vector<Vec> dpos, dneg;
    cl_term(q, pos, neg, 0.1, &dq, &dpos, &dneg);
    double gmax = oracle::grad_floor(dq.begin(), dq.end());
    for (const auto& v : dpos) gmax = std::max(gmax, oracle::grad_floor(v.begin(), v.end()));
    for (const auto& v : dneg) gmax = std::max(gmax, oracle::grad_floor(v.begin(), v.end()));

    for (int i = 0; i < d; ++i) {
      const double fd = oracle::central_diff(
          [&](double x) {
            Vec qq = q;
            qq[i] = x;
            return cl_term(qq, pos, neg, 0.1);
          },
          q[i]);
      CHECK(oracle::rel_err(dq[i], fd, gmax) < 1e-4);
    }
    for (size_t p = 0; p < pos.size(); ++p)
      for (int i = 0; i < d; ++i) {
        const double fd = oracle::central_diff(
            [&](double x) {
              auto pp = pos;
              pp[p][i] = x;
              return cl_term(q, pp, neg, 0.1);
            },
            pos[p][i]);
        CHECK(oracle::rel_err(dpos[p][i], fd, gmax) < 1e-4);
      }
    for (size_t n = 0; n < neg.size(); ++n)
      for (int i = 0; i < d; ++i) {
        const double fd = oracle::central_diff(
            [&](double x) {
              auto nn = neg;
              nn[n][i] = x;
              return cl_term(q, pos, nn, 0.1);
            },
            neg[n][i]);
        CHECK(oracle::rel_err(dneg[n][i], fd, gmax) < 1e-4);
      }
  }
}

TEST_CASE("crc_loss gradients match finite differences") {
  Rng rng(34);
  const int d = 4;
  const Vec qb = random_unit(d, rng), qf = random_unit(d, rng);
  std::vector<Vec> kb = {random_unit(d, rng), random_unit(d, rng)};
  std::vector<Vec> ko = {random_unit(d, rng)};
  std::vector<Vec> kf = {random_unit(d, rng), random_unit(d, rng)};
  std::vector<Vec> ki = {random_unit(d, rng)};

  CrcLossGrads g;
  crc_loss(qb, qf, kb, ko, kf, ki, 0.1, &g);
  double gmax = oracle::grad_floor(g.dq_b.begin(), g.dq_b.end());
  for (const auto* lists : {&g.dk_back, &g.dk_out, &g.dk_fore, &g.dk_inn})
    for (const auto& v : *lists)
      gmax = std::max(gmax, oracle::grad_floor(v.begin(), v.end()));

  auto check_list = [&](std::vector<Vec>& list, const std::vector<Vec>& grads) {
    for (size_t n = 0; n < list.size(); ++n)
      for (int i = 0; i < d; ++i) {
        const double fd = oracle::central_diff(
            [&](double x) {
              const double keep = list[n][i];
              list[n][i] = x;
              const double val = crc_loss(qb, qf, kb, ko, kf, ki, 0.1);
              list[n][i] = keep;
              return val;
            },
            list[n][i]);
        CHECK(oracle::rel_err(grads[n][i], fd, gmax) < 1e-4);
      }
  };
  check_list(kb, g.dk_back);
  check_list(ko, g.dk_out);
  check_list(kf, g.dk_fore);
  check_list(ki, g.dk_inn);

  for (int i = 0; i < d; ++i) {
    const double fd = oracle::central_diff(
        [&](double x) {
          Vec q = qb;
          q[i] = x;
          return crc_loss(q, qf, kb, ko, kf, ki, 0.1);
        },
        qb[i]);
    CHECK(oracle::rel_err(g.dq_b[i], fd, gmax) < 1e-4);
  }
}
