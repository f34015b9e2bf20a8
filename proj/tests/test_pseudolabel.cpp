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

#include <filesystem>

#include "doctest.h"
#include "nucseg/geometry.hpp"
#include "nucseg/pseudolabel.hpp"
#include "nucseg/rng.hpp"

using namespace nucseg;

namespace {

RawInstance raw_instance(float score, float prob, Rng* rng = nullptr) {
  RawInstance ri;
  ri.det.box = Box{4, 4, 36, 36};
  ri.det.score = score;
  ri.prob28 = Tensor3<float>(1, 28, 28, prob);
  if (rng)
    for (auto& v : ri.prob28.v) v = static_cast<float>(rng->uniform());
  return ri;
}

std::vector<RawInstance> random_raw(Rng& rng, int n) {
  std::vector<RawInstance> out;
  for (int i = 0; i < n; ++i)
    out.push_back(raw_instance(static_cast<float>(rng.uniform()), 0.f, &rng));
  return out;
}

}  // namespace

TEST_CASE("box threshold keeps only confident detections") {
  std::vector<RawInstance> raw = {raw_instance(0.9f, 0.8f), raw_instance(0.6f, 0.8f),
                                  raw_instance(0.3f, 0.8f)};
  const auto pl = filter_pseudo(raw, "img0", 64, 64, 0.7f, 0.5f);
  CHECK(pl.instances.size() == 1);
  CHECK(pl.instances[0].det.score == doctest::Approx(0.9));
}

TEST_CASE("all-low probability grids drop the instance") {
  std::vector<RawInstance> raw = {raw_instance(0.9f, 0.4f)};
  const auto pl = filter_pseudo(raw, "img0", 64, 64, 0.7f, 0.5f);
  CHECK(pl.instances.empty());
}

TEST_CASE("degenerate zero thresholds keep everything with all-true masks") {
  Rng rng(1);
  const auto raw = random_raw(rng, 5);
  const auto pl = filter_pseudo(raw, "img0", 64, 64, 0.f, 0.f);
  CHECK(pl.instances.size() == 5);
  for (const auto& pi : pl.instances) {
    CHECK(pi.mask28.count() == 28 * 28);
    CHECK(pi.mask14.count() == 14 * 14);
  }
}

TEST_CASE("pseudo-label invariants hold for every retained instance") {
  Rng rng(2);
  const auto raw = random_raw(rng, 20);
  const auto pl = filter_pseudo(raw, "img0", 64, 64, 0.5f, 0.55f);
  for (const auto& pi : pl.instances) {
    CHECK(pi.det.score >= 0.5f);
    CHECK(pi.mask28.count() > 0);
    CHECK(pi.mask14 == downsample_majority(pi.mask28, 14, 14));
  }
}

TEST_CASE("raising either threshold never increases the retained count") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto raw = random_raw(rng, 12);
    const float tb = static_cast<float>(rng.uniform());
    const float tp = static_cast<float>(rng.uniform());
    const auto base = filter_pseudo(raw, "x", 64, 64, tb, tp).instances.size();
    const float tb2 = tb + static_cast<float>(rng.uniform(0, 1.0 - tb));
    const float tp2 = tp + static_cast<float>(rng.uniform(0, 1.0 - tp));
    CHECK(filter_pseudo(raw, "x", 64, 64, tb2, tp).instances.size() <= base);
    CHECK(filter_pseudo(raw, "x", 64, 64, tb, tp2).instances.size() <= base);
  }
}

TEST_CASE("re-filtering with the same thresholds is the identity") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto raw = random_raw(rng, 8);
    const float tb = static_cast<float>(rng.uniform());
    const float tp = static_cast<float>(rng.uniform());
    const auto once = filter_pseudo(raw, "x", 64, 64, tb, tp);
    const auto twice = filter_pseudo(once, tb, tp);
    REQUIRE(twice.instances.size() == once.instances.size());
    for (size_t i = 0; i < once.instances.size(); ++i) {
      CHECK(twice.instances[i].mask28 == once.instances[i].mask28);
      CHECK(twice.instances[i].mask14 == once.instances[i].mask14);
      CHECK(twice.instances[i].det.score == once.instances[i].det.score);
    }
  }
}

TEST_CASE("assemble_student_set unions with provenance flags") {
  Sample s1;
  s1.id = "a";
  s1.image = ImageRGB(32, 32);
  s1.labels = InstanceLabelMap(32, 32);
  for (int y = 4; y < 10; ++y)
    for (int x = 4; x < 10; ++x) s1.labels.set(y, x, 1);
  Sample s2 = s1;
  s2.id = "b";
  Sample s3 = s1;
  s3.id = "c";

  PseudoLabel pl;
  pl.image_id = "p1";
  pl.img_h = pl.img_w = 32;
  PseudoInstance pi;
  pi.det = {Box{2, 2, 18, 18}, 0.9f};
  pi.mask28 = BinaryMask(28, 28, true);
  pi.mask14 = BinaryMask(14, 14, true);
  pl.instances.push_back(pi);
  PseudoLabel pl2 = pl;
  pl2.image_id = "p2";

  const auto set = assemble_student_set({s1, s2, s3}, {{ImageRGB(32, 32), pl},
                                                       {ImageRGB(32, 32), pl2}});
  REQUIRE(set.size() == 5);
  int human = 0, pseudo = 0;
  for (const auto& r : set)
    (r.provenance == MaskProvenance::human ? human : pseudo)++;
  CHECK(human == 3);
  CHECK(pseudo == 2);

  // Empty pseudo set -> supervised only.
  CHECK(assemble_student_set({s1, s2}, {}).size() == 2);

  // Duplicate image id -> error.
  PseudoLabel dup = pl;
  dup.image_id = "a";
  CHECK_THROWS_AS(assemble_student_set({s1}, {{ImageRGB(32, 32), dup}}),
                  std::invalid_argument);
}

TEST_CASE("ground-truth records expose per-instance boxes and masks") {
  Sample s;
  s.id = "gt";
  s.image = ImageRGB(32, 32);
  s.labels = InstanceLabelMap(32, 32);
  for (int y = 2; y < 8; ++y)
    for (int x = 3; x < 11; ++x) s.labels.set(y, x, 1);
  for (int y = 20; y < 30; ++y)
    for (int x = 20; x < 26; ++x) s.labels.set(y, x, 2);
  const auto rec = record_from_ground_truth(s);
  REQUIRE(rec.instances.size() == 2);
  CHECK(rec.instances[0].box.x1 == 3.f);
  CHECK(rec.instances[0].box.x2 == 11.f);
  CHECK(rec.instances[0].mask.count() == 6 * 8);
  CHECK(rec.instances[1].mask.count() == 10 * 6);
}

TEST_CASE("pseudo-label store roundtrips bit-exactly") {
  Rng rng(5);
  const auto dir = (std::filesystem::temp_directory_path() / "nucseg_pl_test").string();
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  const auto raw = random_raw(rng, 6);
  auto pl = filter_pseudo(raw, "img_007", 64, 64, 0.3f, 0.5f);
  REQUIRE(!pl.instances.empty());
  save_pseudo_label(dir, pl);
  const auto back = load_pseudo_label(dir, "img_007");
  CHECK(back.image_id == pl.image_id);
  CHECK(back.t_box == pl.t_box);
  CHECK(back.t_pix == pl.t_pix);
  REQUIRE(back.instances.size() == pl.instances.size());
  for (size_t i = 0; i < pl.instances.size(); ++i) {
    CHECK(back.instances[i].det.box.x1 == pl.instances[i].det.box.x1);
    CHECK(back.instances[i].det.score == pl.instances[i].det.score);
    CHECK(back.instances[i].mask28 == pl.instances[i].mask28);
    CHECK(back.instances[i].mask14 == pl.instances[i].mask14);
  }

  // Empty labels roundtrip too.
  PseudoLabel empty;
  empty.image_id = "img_empty";
  empty.img_h = empty.img_w = 64;
  empty.t_box = 0.7f;
  empty.t_pix = 0.5f;
  save_pseudo_label(dir, empty);
  CHECK(load_pseudo_label(dir, "img_empty").instances.empty());
  std::filesystem::remove_all(dir);
}
