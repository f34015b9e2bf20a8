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
#include <filesystem>

#include "doctest.h"
#include "nucseg/model.hpp"
#include "oracles.hpp"

using namespace nucseg;

namespace {

template <typename T>
Tensor3<T> random_tensor(int c, int h, int w, Rng& rng, double scale = 1.0) {
  Tensor3<T> t(c, h, w);
  for (auto& v : t.v) v = static_cast<T>(rng.uniform(-scale, scale));
  return t;
}

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.channels = 16;  // keep double-precision head checks cheap
  cfg.embed_dim = 8;
  return cfg;
}

}  // namespace

TEST_CASE("backbone stride arithmetic and determinism") {
  Model<float> m(ModelConfig{}, 1);
  Rng rng(3);
  const auto img = random_tensor<float>(3, 64, 48, rng);
  BackboneCache<float> c1, c2;
  const auto& f1 = m.backbone_forward(img, c1);
  CHECK(f1.c == m.cfg.channels);
  CHECK(f1.h == 16);
  CHECK(f1.w == 12);
  const auto& f2 = m.backbone_forward(img, c2);
  CHECK(f1.v == f2.v);
  CHECK(m.backbone_calls == 2);

  Tensor3<float> bad(3, 30, 30, 0.f);
  BackboneCache<float> c3;
  CHECK_THROWS_AS(m.backbone_forward(bad, c3), std::invalid_argument);
}

TEST_CASE("zero-initialized final layer maps anything to zero features") {
  Model<float> m(ModelConfig{}, 2);
  m.zero_param("backbone.conv3.w");
  m.zero_param("backbone.conv3.b");
  Rng rng(4);
  const auto img = random_tensor<float>(3, 32, 32, rng);
  BackboneCache<float> c;
  const auto& f = m.backbone_forward(img, c);
  for (auto v : f.v) CHECK(v == 0.f);
}

TEST_CASE("untrained detection head scores 0.5 everywhere before NMS") {
  Model<float> m(ModelConfig{}, 5);
  m.zero_param("det.out.w");
  m.zero_param("det.out.b");
  Rng rng(6);
  const auto img = random_tensor<float>(3, 32, 32, rng);
  BackboneCache<float> bc;
  const auto& feat = m.backbone_forward(img, bc);
  DetCache<float> dc;
  const auto& raw = m.det_forward(feat, dc);
  for (float s : m.score_anchors(raw)) CHECK(s == doctest::Approx(0.5));
}

TEST_CASE("NMS keeps one of two near-duplicate boxes") {
  const std::vector<Detection> dets = {{Box{0, 0, 10, 10}, 0.9f},
                                       {Box{0.5f, 0, 10.5f, 10}, 0.8f},
                                       {Box{30, 30, 40, 40}, 0.7f}};
  const auto kept = Model<float>::nms(dets, 0.5f, 100);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].score == doctest::Approx(0.9));
  CHECK(kept[1].score == doctest::Approx(0.7));
}

TEST_CASE("anchor grid covers cells at both scales") {
  Model<float> m(ModelConfig{}, 7);
  const auto anchors = m.anchors_for(4, 6);
  REQUIRE(anchors.size() == 2 * 4 * 6);
  CHECK(anchors[0].cx() == doctest::Approx(2.0));  // (0.5)*stride
  CHECK(anchors[0].width() == doctest::Approx(m.cfg.anchor_sizes[0]));
  CHECK(anchors[4 * 6].width() == doctest::Approx(m.cfg.anchor_sizes[1]));
}

TEST_CASE("roi_align: constant features give the constant") {
  Model<float> m(ModelConfig{}, 8);
  Tensor3<float> feat(4, 16, 16, 3.25f);
  const auto roi = m.roi_align(feat, Box{3.f, 5.f, 50.f, 60.f});
  REQUIRE(roi.c == 4);
  REQUIRE(roi.h == 14);
  for (auto v : roi.v) CHECK(v == doctest::Approx(3.25f));
}

TEST_CASE("roi_align: cell-aligned box is an exact crop") {
  Model<float> m(ModelConfig{}, 9);
  Tensor3<float> feat(1, 20, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) feat.at(0, y, x) = static_cast<float>(100 * y + x);
  // Box covering feature cells [2,16) x [3,17): image coords stride 4.
  const auto roi = m.roi_align(feat, Box{3 * 4.f, 2 * 4.f, 17 * 4.f, 16 * 4.f});
  for (int i = 0; i < 14; ++i)
    for (int j = 0; j < 14; ++j)
      CHECK(roi.at(0, i, j) == doctest::Approx(100.0 * (2 + i) + (3 + j)));
}

TEST_CASE("roi_align: half-cell shift on a linear ramp shifts by half a step") {
  Model<float> m(ModelConfig{}, 10);
  Tensor3<float> feat(1, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) feat.at(0, y, x) = static_cast<float>(x);
  const auto base = m.roi_align(feat, Box{4.f, 4.f, 4.f + 14 * 4, 4.f + 14 * 4});
  const auto shifted = m.roi_align(feat, Box{6.f, 4.f, 6.f + 14 * 4, 4.f + 14 * 4});
  for (int j = 0; j < 13; ++j)
    CHECK(shifted.at(0, 7, j) == doctest::Approx(base.at(0, 7, j) + 0.5).epsilon(1e-4));
}

TEST_CASE("roi_align rejects sub-cell boxes") {
  Model<float> m(ModelConfig{}, 11);
  Tensor3<float> feat(1, 16, 16, 0.f);
  CHECK_THROWS_AS(m.roi_align(feat, Box{0, 0, 3.f, 3.f}), std::invalid_argument);
}

TEST_CASE("mask head output shapes and zero-head behavior") {
  Model<float> m(ModelConfig{}, 12);
  Rng rng(13);
  const auto roi = random_tensor<float>(m.cfg.channels, 14, 14, rng);
  MaskHeadCache<float> c;
  const auto pred = m.mask_heads(roi, c);
  CHECK(pred.high_res.h == 28);
  CHECK(pred.high_res.w == 28);
  CHECK(pred.low_res.h == 14);
  CHECK(pred.low_res.w == 14);

  Model<float> z(ModelConfig{}, 14);
  for (const char* name : {"nmh.conv1.w", "nmh.conv1.b", "nmh.conv2.w", "nmh.conv2.b",
                           "nmh.up.w", "nmh.up.b", "lrd.conv1.w", "lrd.conv1.b",
                           "lrd.conv2.w", "lrd.conv2.b"})
    z.zero_param(name);
  MaskHeadCache<float> zc;
  const auto zp = z.mask_heads(roi, zc);
  for (auto v : zp.high_res.v) CHECK(v == 0.f);
  for (auto v : zp.low_res.v) CHECK(v == 0.f);
}

TEST_CASE("mask head gradients w.r.t. RoI features match finite differences") {
  Model<double> m(small_cfg(), 15);
  Rng rng(16);
  const auto roi = random_tensor<double>(m.cfg.channels, 14, 14, rng, 0.5);
  const auto dout28 = random_tensor<double>(1, 28, 28, rng);
  const auto dout14 = random_tensor<double>(1, 14, 14, rng);

  auto objective = [&](const Tensor3<double>& r) {
    MaskHeadCache<double> c;
    const auto pred = m.mask_heads(r, c);
    double s = 0;
    for (size_t i = 0; i < pred.high_res.size(); ++i) s += pred.high_res.v[i] * dout28.v[i];
    for (size_t i = 0; i < pred.low_res.size(); ++i) s += pred.low_res.v[i] * dout14.v[i];
    return s;
  };

  MaskHeadCache<double> c;
  m.mask_heads(roi, c);
  Tensor3<double> droi(m.cfg.channels, 14, 14);
  m.params.zero_grads();
  m.mask_heads_backward(c, &dout28, &dout14, droi);

  const double floor = oracle::grad_floor(droi.v.begin(), droi.v.end());
  Rng pick(17);
  int checked = 0;
  for (int t = 0; t < 40 && checked < 25; ++t) {
    const size_t i = static_cast<size_t>(pick.uniform_int(0, static_cast<long>(roi.size()) - 1));
    bool smooth = true;
    const double fd = oracle::central_diff_checked(
        [&](double x) {
          auto r = roi;
          r.v[i] = x;
          return objective(r);
        },
        roi.v[i], &smooth);
    if (!smooth) continue;  // probe straddles a ReLU kink
    CHECK(oracle::rel_err(droi.v[i], fd, floor) < 1e-3);
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("embedding head: unit norms, determinism, finite-difference gradient") {
  Model<double> m(small_cfg(), 18);
  Rng rng(19);
  const auto roi = random_tensor<double>(m.cfg.channels, 14, 14, rng, 0.5);

  EmbedCache<double> c1, c2;
  const auto& e1 = m.embed_forward(roi, c1);
  const auto& e2 = m.embed_forward(roi, c2);
  CHECK(e1.v == e2.v);
  for (int y = 0; y < 14; ++y)
    for (int x = 0; x < 14; ++x) {
      double n = 0;
      for (int d = 0; d < m.cfg.embed_dim; ++d) n += e1.at(d, y, x) * e1.at(d, y, x);
      CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
    }

  const auto dout = random_tensor<double>(m.cfg.embed_dim, 14, 14, rng);
  auto objective = [&](const Tensor3<double>& r) {
    EmbedCache<double> c;
    const auto& e = m.embed_forward(r, c);
    double s = 0;
    for (size_t i = 0; i < e.size(); ++i) s += e.v[i] * dout.v[i];
    return s;
  };
  EmbedCache<double> c;
  m.embed_forward(roi, c);
  Tensor3<double> droi(m.cfg.channels, 14, 14);
  m.params.zero_grads();
  m.embed_backward(c, dout, droi);

  const double floor = oracle::grad_floor(droi.v.begin(), droi.v.end());
  Rng pick(20);
  int checked = 0;
  for (int t = 0; t < 40 && checked < 25; ++t) {
    const size_t i = static_cast<size_t>(pick.uniform_int(0, static_cast<long>(roi.size()) - 1));
    bool smooth = true;
    const double fd = oracle::central_diff_checked(
        [&](double x) {
          auto r = roi;
          r.v[i] = x;
          return objective(r);
        },
        roi.v[i], &smooth);
    if (!smooth) continue;
    CHECK(oracle::rel_err(droi.v[i], fd, floor) < 1e-3);
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("model stays under the desk-scale parameter budget") {
  Model<float> m(ModelConfig{}, 21);
  CHECK(m.params.total_parameters() < 2'000'000);
  CHECK(m.params.total_parameters() > 10'000);
}

TEST_CASE("checkpoints roundtrip bit-exactly") {
  Model<float> m(ModelConfig{}, 22);
  const auto path =
      (std::filesystem::temp_directory_path() / "nucseg_ckpt_test.bin").string();
  m.save_checkpoint(path);
  const auto back = Model<float>::load_checkpoint(path);
  CHECK(back.cfg.channels == m.cfg.channels);
  CHECK(back.cfg.anchor_sizes == m.cfg.anchor_sizes);
  REQUIRE(back.params.items().size() == m.params.items().size());
  for (size_t i = 0; i < m.params.items().size(); ++i) {
    CHECK(back.params.items()[i].name == m.params.items()[i].name);
    CHECK(back.params.items()[i].w == m.params.items()[i].w);
  }
  std::filesystem::remove(path);
}
