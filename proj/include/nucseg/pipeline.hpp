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

#include "nucseg/datagen.hpp"
#include "nucseg/losses.hpp"
#include "nucseg/metrics.hpp"
#include "nucseg/model.hpp"
#include "nucseg/pseudolabel.hpp"

// Three-stage training: (1) the teacher learns from labeled data with the
// detection loss plus the high-resolution mask loss; (2) the frozen teacher
// labels the unlabeled pool and box/pixel thresholds keep the confident
// instances; (3) the student learns from the union with the weighted
// four-term composite loss. Everything is seeded and bit-reproducible.

namespace nucseg {

struct HeadFlags {
  bool nmh = true;
  bool lrd = true;
  bool crc = true;
  bool any() const { return nmh || lrd || crc; }
};

struct TrainConfig {
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.001;
  int epochs_teacher = 40;
  int epochs_student = 30;
  int batch_size = 4;
  LossWeights loss_weights;    // w1 = w2 = w3 = 1, tau = 0.1
  double alpha = 0.7;          // contrastive sampling ratio
  float d = 2.f;               // band half-width in 14×14 cells
  float t_box = 0.7f;
  float t_pix = 0.5f;
  HeadFlags heads;
  int max_rois_per_image = 6;
  float roi_jitter = 0.1f;     // training boxes jittered ±10%
  bool student_from_teacher = false;
  std::uint64_t seed = 0;
  ModelConfig model;
  float lrd_band = 1.f;        // boundary down-weighting of the 14×14 loss
  float lrd_w_boundary = 0.2f;
  float lrd_w_interior = 1.f;
  double grad_clip = 5.0;      // global gradient-norm ceiling (0 disables)
  // Average the parameters over the steps of the last N epochs (0 disables);
  // evens out the endpoint of constant-rate momentum SGD.
  int avg_tail_epochs = 0;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
/// FNV-1a hash of the canonical config JSON; names run directories.
std::string train_config_hash(const TrainConfig& cfg);

/// Training configuration paired with benchmark_dataset_config for the
/// standard synthetic benchmark (ablation harness and acceptance runs).
TrainConfig benchmark_train_config(std::uint64_t seed);

struct EpochLosses {
  double det = 0, nmh = 0, lrd = 0, cl = 0, total = 0;
};

struct RunRecord {
  TrainConfig config;
  std::vector<EpochLosses> teacher_epochs;
  std::vector<EpochLosses> student_epochs;
  MetricsReport val, test;
  double wall_clock_sec = 0;
  std::uint64_t seed = 0;
  bool bookkeeping_ok = true;  // per-step total equals the composite formula
  // Contrastive supervision provenance: RoIs whose bands derived from human
  // ground truth vs filtered pseudo-labels.
  long crc_rois_human = 0;
  long crc_rois_pseudo = 0;
  std::vector<std::string> events;
};

void save_run_record(const std::string& path, const RunRecord& rec);
RunRecord load_run_record(const std::string& path);

struct TeacherResult {
  Model<float> model;
  std::vector<EpochLosses> epochs;
  std::vector<std::string> events;
};

/// Stage 1. Throws when the labeled set is empty; aborts (after one guarded
/// 0.1× learning-rate rescale) when the loss leaves the finite range.
TeacherResult train_teacher(const TrainConfig& cfg, const std::vector<TrainRecord>& labeled);

/// Stage 2, frozen teacher, parallel across images.
std::vector<PseudoLabel> generate_pseudo_labels(const Model<float>& teacher,
                                                const std::vector<Sample>& unlabeled,
                                                const TrainConfig& cfg);

struct StudentResult {
  Model<float> model;
  RunRecord record;
};

/// Stage 3. Disabled heads contribute exactly zero loss and zero gradient.
StudentResult train_student(const TrainConfig& cfg, const std::vector<TrainRecord>& records,
                            const Model<float>* teacher_init = nullptr);

/// Inference to an instance map: detect, filter at (t_box, t_pix), paste the
/// per-RoI masks in ascending score order (higher scores overwrite).
InstanceLabelMap predict_labelmap(const Model<float>& model, const ImageRGB& image,
                                  const TrainConfig& cfg);

MetricsReport evaluate(const Model<float>& model, const std::vector<Sample>& eval_set,
                       const TrainConfig& cfg,
                       std::vector<MetricsReport>* per_image = nullptr);

/// Writes the per-detection embedding grids of one image as a named-tensor
/// archive (offline feature inspection).
void dump_roi_features(const Model<float>& model, const ImageRGB& image,
                       const TrainConfig& cfg, const std::string& path);

}  // namespace nucseg
