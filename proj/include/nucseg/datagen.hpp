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

/// One rendered nucleus: a rotated ellipse.
struct Nucleus {
  float cx = 0.f, cy = 0.f;    // center, pixel coordinates
  float rx = 0.f, ry = 0.f;    // radii along the rotated axes
  float rotation = 0.f;        // radians
  float intensity = 1.f;       // contrast scale in [0,1]
};

/// Synthetic H&E-like image with exact instance masks. Label ids are
/// consecutive 1..K and each id maps to exactly one nuclei entry.
struct SyntheticScene {
  ImageRGB image;
  InstanceLabelMap labels;
  std::vector<Nucleus> nuclei;
};

struct SceneOptions {
  float contrast_gap = 0.15f;   // foreground/background intensity gap
  float radius_min = 6.f;
  float radius_max = 11.f;
  float aspect_max = 1.5f;
  float max_overlap = 0.3f;     // candidate rejection threshold
  int attempts_per_nucleus = 100;
};

/// Labeled/unlabeled fraction of the training pool.
struct Ratio {
  int num = 1, den = 2;
  double value() const { return static_cast<double>(num) / den; }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};
Ratio parse_ratio(const std::string& s);  // accepts 1/8, 1/4, 1/2

struct DatasetSplit {
  std::vector<int> labeled, unlabeled, val, test;
  Ratio ratio;
  std::uint64_t seed = 0;
};

/// Deterministic scene synthesis: rotated ellipses with low
/// foreground/background contrast and Gaussian texture noise. Overlaps are
/// resolved by painter order (later id wins); a candidate is rejected when it
/// would cover too much of the existing nuclei. Throws when `n_nuclei`
/// ellipses cannot be placed within the attempt budget.
SyntheticScene generate_scene(std::uint64_t seed, int height, int width, int n_nuclei,
                              float texture_noise, const SceneOptions& opt = {});

/// Tile into patch × patch crops with the given overlap; edge patches clamp to
/// the border. Ids are relabeled to consecutive 1..K' per patch and nuclei
/// clipped to zero area are dropped.
std::vector<SyntheticScene> crop_patches(const SyntheticScene& scene, int patch,
                                         int overlap);

/// 6:2:2 train/val/test split of the scene ids, then the training portion is
/// split into labeled/unlabeled by `ratio` (labeled count =
/// round(train * ratio) clamped to [1, train-1]).
DatasetSplit make_split(const std::vector<int>& scene_ids, Ratio ratio,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// On-disk dataset (8-bit RGB PNG + 16-bit instance PNG + JSON manifest).

struct Sample {
  std::string id;
  ImageRGB image;
  InstanceLabelMap labels;
};

struct GenConfig {
  std::uint64_t seed = 0;
  int scenes = 14;
  int height = 128, width = 128;
  int nuclei_per_scene = 14;
  float noise = 0.05f;
  float contrast = 0.15f;
  int patch = 64;
  int overlap = 32;
  Ratio ratio{1, 4};
};

/// The fixed configuration used by the benchmark and ablation harness.
GenConfig benchmark_dataset_config(std::uint64_t seed);

struct DatasetManifest {
  GenConfig gen;
  DatasetSplit scene_split;
  // Patch ids per partition, e.g. "s0003_p04".
  std::vector<std::string> labeled, unlabeled, val, test;
};

/// Generates scenes, patches them, writes PNGs and the manifest under `dir`.
DatasetManifest generate_dataset(const GenConfig& cfg, const std::string& dir);

DatasetManifest load_manifest(const std::string& dir);
void save_manifest(const std::string& dir, const DatasetManifest& m);

/// Loads the samples of one partition ("labeled", "unlabeled", "val", "test").
std::vector<Sample> load_partition(const std::string& dir, const DatasetManifest& m,
                                   const std::string& partition);

}  // namespace nucseg
