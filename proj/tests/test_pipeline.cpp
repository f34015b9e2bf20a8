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
#include "nucseg/datagen.hpp"
#include "nucseg/pipeline.hpp"

using namespace nucseg;

namespace {

std::vector<TrainRecord> tiny_records(int n, std::uint64_t seed) {
  std::vector<TrainRecord> out;
  for (int i = 0; i < n; ++i) {
    const auto scene = generate_scene(seed + i, 64, 64, 3, 0.03f);
    Sample s;
    s.id = "scene" + std::to_string(i);
    s.image = scene.image;
    s.labels = scene.labels;
    out.push_back(record_from_ground_truth(s));
  }
  return out;
}

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs_teacher = 2;
  cfg.epochs_student = 2;
  cfg.batch_size = 2;
  cfg.max_rois_per_image = 3;
  return cfg;
}

bool same_params(const Model<float>& a, const Model<float>& b) {
  if (a.params.items().size() != b.params.items().size()) return false;
  for (size_t i = 0; i < a.params.items().size(); ++i)
    if (a.params.items()[i].w != b.params.items()[i].w) return false;
  return true;
}

}  // namespace

TEST_CASE("config json roundtrip and hash sensitivity") {
  TrainConfig cfg = tiny_config(5);
  cfg.heads = {true, false, true};
  cfg.alpha = 0.3;
  cfg.d = 4.f;
  const auto back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.d == cfg.d);
  CHECK(back.heads.lrd == false);
  CHECK(back.heads.crc == true);
  CHECK(train_config_hash(back) == train_config_hash(cfg));
  TrainConfig other = cfg;
  other.alpha = 0.7;
  CHECK(train_config_hash(other) != train_config_hash(cfg));
}

TEST_CASE("teacher training rejects an empty labeled set") {
  CHECK_THROWS_AS(train_teacher(tiny_config(1), {}), std::invalid_argument);
}

TEST_CASE("teacher loss decreases on a tiny overfit run") {
  auto records = tiny_records(1, 77);
  TrainConfig cfg = tiny_config(7);
  cfg.epochs_teacher = 12;
  cfg.batch_size = 1;
  const auto res = train_teacher(cfg, records);
  REQUIRE(res.epochs.size() >= 10);
  const double first = res.epochs.front().total;
  const double last = res.epochs.back().total;
  CHECK(last < first);
  CHECK(res.events.empty());  // no divergence guard events expected
}

TEST_CASE("student: disabled heads contribute exactly zero loss") {
  auto records = tiny_records(4, 21);
  TrainConfig cfg = tiny_config(3);
  cfg.heads = {true, false, false};
  const auto res = train_student(cfg, records);
  REQUIRE(!res.record.student_epochs.empty());
  for (const auto& ep : res.record.student_epochs) {
    CHECK(ep.lrd == 0.0);
    CHECK(ep.cl == 0.0);
    CHECK(ep.nmh > 0.0);
  }
  CHECK(res.record.bookkeeping_ok);
}

TEST_CASE("student: omega3 = 0 equals disabling the contrastive head bit-for-bit") {
  auto records = tiny_records(4, 22);
  TrainConfig with_w0 = tiny_config(4);
  with_w0.heads = {true, true, true};
  with_w0.loss_weights.w3 = 0.0;
  TrainConfig disabled = tiny_config(4);
  disabled.heads = {true, true, false};

  const auto a = train_student(with_w0, records);
  const auto b = train_student(disabled, records);
  CHECK(same_params(a.model, b.model));
  // The w3=0 run still records the forward contrastive loss.
  bool any_cl = false;
  for (const auto& ep : a.record.student_epochs) any_cl = any_cl || ep.cl != 0.0;
  CHECK(any_cl);
}

TEST_CASE("one backbone pass per image per step") {
  auto records = tiny_records(3, 23);
  TrainConfig cfg = tiny_config(6);
  cfg.epochs_student = 2;
  cfg.batch_size = 4;  // single batch of 3 images per epoch
  const auto res = train_student(cfg, records);
  CHECK(res.model.backbone_calls == 2 * 3);
}

TEST_CASE("training is deterministic per seed") {
  auto records = tiny_records(3, 24);
  TrainConfig cfg = tiny_config(9);
  cfg.heads = {true, true, true};
  const auto a = train_student(cfg, records);
  const auto b = train_student(cfg, records);
  CHECK(same_params(a.model, b.model));
  REQUIRE(a.record.student_epochs.size() == b.record.student_epochs.size());
  for (size_t i = 0; i < a.record.student_epochs.size(); ++i)
    CHECK(a.record.student_epochs[i].total == b.record.student_epochs[i].total);

  TrainConfig other = cfg;
  other.seed = 10;
  const auto c = train_student(other, records);
  CHECK_FALSE(same_params(a.model, c.model));
}

TEST_CASE("student training leaves the teacher untouched") {
  auto records = tiny_records(2, 25);
  TrainConfig cfg = tiny_config(11);
  cfg.epochs_teacher = 1;
  const auto teacher = train_teacher(cfg, records);
  const auto before = teacher.model.params;
  cfg.student_from_teacher = true;
  const auto student = train_student(cfg, records, &teacher.model);
  for (size_t i = 0; i < before.items().size(); ++i)
    CHECK(teacher.model.params.items()[i].w == before.items()[i].w);
  CHECK_FALSE(same_params(student.model, teacher.model));
}

TEST_CASE("evaluate: empty predictions on a blank scene score vacuous 100") {
  Model<float> model(ModelConfig{}, 31);
  model.zero_param("det.out.w");
  model.zero_param("det.out.b");  // all scores exactly 0.5 < t_box
  Sample blank;
  blank.id = "blank";
  blank.image = ImageRGB(64, 64, 0.8f);
  blank.labels = InstanceLabelMap(64, 64);
  TrainConfig cfg = tiny_config(0);
  const auto rep = evaluate(model, {blank}, cfg);
  CHECK(rep.dice == doctest::Approx(100.0));
  CHECK(rep.pq == doctest::Approx(100.0));
  CHECK(rep.tp + rep.fp + rep.fn == 0);
}

TEST_CASE("evaluation is invariant to eval-set ordering") {
  auto records = tiny_records(2, 26);
  TrainConfig cfg = tiny_config(13);
  cfg.epochs_teacher = 2;
  const auto teacher = train_teacher(cfg, records);

  std::vector<Sample> ab(2), ba(2);
  for (int i = 0; i < 2; ++i) {
    const auto scene = generate_scene(500 + i, 64, 64, 3, 0.03f);
    ab[i].id = "e" + std::to_string(i);
    ab[i].image = scene.image;
    ab[i].labels = scene.labels;
  }
  ba[0] = ab[1];
  ba[1] = ab[0];
  TrainConfig ecfg = cfg;
  ecfg.heads = {true, false, false};
  const auto r1 = evaluate(teacher.model, ab, ecfg);
  const auto r2 = evaluate(teacher.model, ba, ecfg);
  CHECK(r1.dice == doctest::Approx(r2.dice).epsilon(1e-12));
  CHECK(r1.aji == doctest::Approx(r2.aji).epsilon(1e-12));
  CHECK(r1.pq == doctest::Approx(r2.pq).epsilon(1e-12));
}

TEST_CASE("run record json roundtrip") {
  RunRecord rec;
  rec.config = tiny_config(15);
  rec.student_epochs.push_back({0.1, 0.2, 0.3, 0.4, 1.0});
  rec.val.dice = 55.5;
  rec.test.dice = 44.4;
  rec.seed = 15;
  rec.wall_clock_sec = 1.25;
  rec.events.push_back("divergence guard: test");
  const auto path =
      (std::filesystem::temp_directory_path() / "nucseg_runrec.json").string();
  save_run_record(path, rec);
  const auto back = load_run_record(path);
  CHECK(back.student_epochs.size() == 1);
  CHECK(back.student_epochs[0].cl == doctest::Approx(0.4));
  CHECK(back.val.dice == doctest::Approx(55.5));
  CHECK(back.events.size() == 1);
  CHECK(back.config.seed == rec.config.seed);
  std::filesystem::remove(path);
}

TEST_CASE("crc supervision provenance is threaded through training") {
  // Two human records and two pseudo records: the contrastive step must see
  // bands from both sources, tagged correctly.
  auto records = tiny_records(2, 31);
  PseudoLabel pl;
  pl.image_id = "pseudo0";
  pl.img_h = pl.img_w = 64;
  PseudoInstance pi;
  pi.det = {Box{10, 10, 30, 30}, 0.95f};
  pi.mask28 = BinaryMask(28, 28);
  for (int y = 6; y < 22; ++y)
    for (int x = 6; x < 22; ++x) pi.mask28.set(y, x, true);
  pi.mask14 = downsample_majority(pi.mask28, 14, 14);
  pl.instances.push_back(pi);
  PseudoLabel pl2 = pl;
  pl2.image_id = "pseudo1";
  const auto scene = generate_scene(900, 64, 64, 2, 0.03f);
  records.push_back(record_from_pseudo(scene.image, pl));
  records.push_back(record_from_pseudo(scene.image, pl2));

  TrainConfig cfg = tiny_config(19);
  cfg.heads = {true, true, true};
  cfg.epochs_student = 1;
  cfg.batch_size = 4;
  const auto res = train_student(cfg, records);
  CHECK(res.record.crc_rois_human > 0);
  CHECK(res.record.crc_rois_pseudo > 0);

  // With the contrastive head off nothing is counted.
  TrainConfig off = cfg;
  off.heads = {true, true, false};
  const auto quiet = train_student(off, records);
  CHECK(quiet.record.crc_rois_human == 0);
  CHECK(quiet.record.crc_rois_pseudo == 0);
}

TEST_CASE("pseudo labels generated from a frozen teacher are deterministic") {
  auto records = tiny_records(2, 27);
  TrainConfig cfg = tiny_config(17);
  cfg.epochs_teacher = 2;
  const auto teacher = train_teacher(cfg, records);

  std::vector<Sample> unlabeled(2);
  for (int i = 0; i < 2; ++i) {
    const auto scene = generate_scene(700 + i, 64, 64, 3, 0.03f);
    unlabeled[i].id = "u" + std::to_string(i);
    unlabeled[i].image = scene.image;
    unlabeled[i].labels = scene.labels;
  }
  const auto a = generate_pseudo_labels(teacher.model, unlabeled, cfg);
  const auto b = generate_pseudo_labels(teacher.model, unlabeled, cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].instances.size() == b[i].instances.size());
    for (size_t k = 0; k < a[i].instances.size(); ++k) {
      CHECK(a[i].instances[k].det.score == b[i].instances[k].det.score);
      CHECK(a[i].instances[k].mask28 == b[i].instances[k].mask28);
    }
  }
}
