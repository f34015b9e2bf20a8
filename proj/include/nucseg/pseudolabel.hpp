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

#include "nucseg/crc.hpp"
#include "nucseg/datagen.hpp"
#include "nucseg/model.hpp"
#include "nucseg/types.hpp"

namespace nucseg {

/// One raw teacher prediction: a detection plus its 28×28 mask probabilities.
struct RawInstance {
  Detection det;
  Tensor3<float> prob28;  // (1, 28, 28), sigmoid probabilities
};

struct PseudoInstance {
  Detection det;
  BinaryMask mask28;  // thresholded at t_pix
  BinaryMask mask14;  // majority-downsampled mask28
};

/// Filtered teacher output for one image.
struct PseudoLabel {
  std::string image_id;
  int img_h = 0, img_w = 0;
  std::vector<PseudoInstance> instances;
  float t_box = 0.f, t_pix = 0.f;
};

/// Frozen-teacher inference: detect, align, run the high-resolution mask
/// branch, return per-RoI sigmoid probabilities. Deterministic.
std::vector<RawInstance> infer_teacher(const Model<float>& teacher, const ImageRGB& image);

/// Box and pixel threshold filtering: detections below t_box are dropped,
/// surviving probability grids are binarized at t_pix (probability >= t_pix is
/// foreground), instances with an empty mask are dropped.
PseudoLabel filter_pseudo(const std::vector<RawInstance>& raw, const std::string& image_id,
                          int img_h, int img_w, float t_box, float t_pix);

/// Re-filtering an already-filtered label with the same thresholds is the
/// identity (masks are treated as 0/1 probability grids).
PseudoLabel filter_pseudo(const PseudoLabel& label, float t_box, float t_pix);

/// One training record of the student set: instance supervision as full-
/// resolution per-instance masks plus a provenance flag.
struct TrainInstance {
  Box box;
  BinaryMask mask;  // full image resolution
  float score = 1.f;
};

struct TrainRecord {
  std::string id;
  ImageRGB image;
  std::vector<TrainInstance> instances;
  MaskProvenance provenance = MaskProvenance::human;
};

TrainRecord record_from_ground_truth(const Sample& sample);
TrainRecord record_from_pseudo(const ImageRGB& image, const PseudoLabel& label);

/// D_L ∪ D_U with provenance flags; throws on duplicate image ids.
std::vector<TrainRecord> assemble_student_set(const std::vector<Sample>& labeled,
                                              const std::vector<std::pair<ImageRGB, PseudoLabel>>& pseudo);

// On-disk pseudo-label store, one record per image: JSON sidecar with boxes,
// scores and thresholds; a 16-bit composite instance PNG (same format as the
// ground-truth masks); and per-instance 14×14 / 28×28 masks packed as 8-bit
// PNG strips.
void save_pseudo_label(const std::string& dir, const PseudoLabel& label);
PseudoLabel load_pseudo_label(const std::string& dir, const std::string& image_id);

/// Composite instance map of a pseudo-label (instances pasted in ascending
/// score order, later/higher scores overwrite).
InstanceLabelMap pseudo_to_labelmap(const PseudoLabel& label);

}  // namespace nucseg
