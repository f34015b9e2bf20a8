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

#include "nucseg/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "nucseg/png_io.hpp"
#include "nucseg/rng.hpp"

namespace fs = std::filesystem;

namespace nucseg {

namespace {

// Background tint and the per-channel direction the nuclei darken along,
// loosely H&E: pinkish tissue, bluish-purple nuclei.
constexpr float kBackground[3] = {0.82f, 0.67f, 0.76f};
constexpr float kNucleusShift[3] = {1.2f, 1.3f, 0.8f};

struct Support {
  std::vector<std::int32_t> pixels;
};

Support ellipse_support(const Nucleus& n, int h, int w) {
  Support s;
  const float r = std::max(n.rx, n.ry);
  const int y0 = std::max(0, static_cast<int>(std::floor(n.cy - r - 1)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(n.cy + r + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(n.cx - r - 1)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(n.cx + r + 1)));
  const float c = std::cos(n.rotation), sn = std::sin(n.rotation);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const float dx = (x + 0.5f) - n.cx;
      const float dy = (y + 0.5f) - n.cy;
      const float u = (dx * c + dy * sn) / n.rx;
      const float v = (-dx * sn + dy * c) / n.ry;
      if (u * u + v * v <= 1.f) s.pixels.push_back(y * w + x);
    }
  return s;
}

}  // namespace

Ratio parse_ratio(const std::string& s) {
  if (s == "1/8") return Ratio{1, 8};
  if (s == "1/4") return Ratio{1, 4};
  if (s == "1/2") return Ratio{1, 2};
  throw std::invalid_argument("ratio must be one of 1/8, 1/4, 1/2 (got " + s + ")");
}

SyntheticScene generate_scene(std::uint64_t seed, int height, int width, int n_nuclei,
                              float texture_noise, const SceneOptions& opt) {
  if (height < 64 || width < 64)
    throw std::invalid_argument("generate_scene: height and width must be >= 64");
  if (n_nuclei < 0) throw std::invalid_argument("generate_scene: n_nuclei must be >= 0");

  Rng rng(mix_seed(seed, seed_tag::scene));
  SyntheticScene scene;
  scene.labels = InstanceLabelMap(height, width);
  scene.image = ImageRGB(height, width);

  std::vector<long> area;  // by id, [0] unused
  area.push_back(0);
  for (int k = 1; k <= n_nuclei; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < opt.attempts_per_nucleus && !placed; ++attempt) {
      Nucleus n;
      n.rx = static_cast<float>(rng.uniform(opt.radius_min + 0.5, opt.radius_max));
      const float minor_lo = std::max(opt.radius_min, n.rx / opt.aspect_max);
      n.ry = static_cast<float>(rng.uniform(minor_lo, n.rx));
      n.rotation = static_cast<float>(rng.uniform(0.0, 3.14159265358979323846));
      const float margin = std::max(n.rx, n.ry) + 1.f;
      if (2 * margin >= std::min(height, width)) continue;
      n.cx = static_cast<float>(rng.uniform(margin, width - margin));
      n.cy = static_cast<float>(rng.uniform(margin, height - margin));
      n.intensity = static_cast<float>(rng.uniform(0.85, 1.0));

      const auto sup = ellipse_support(n, height, width);
      if (sup.pixels.empty()) continue;

      std::map<int, long> hit;
      for (auto idx : sup.pixels)
        if (scene.labels.v[idx]) ++hit[scene.labels.v[idx]];
      long overlap = 0;
      for (const auto& [id, cnt] : hit) overlap += cnt;
      if (static_cast<double>(overlap) >
          opt.max_overlap * static_cast<double>(sup.pixels.size()))
        continue;
      // Painting must not erode any earlier nucleus below half its area.
      bool erodes = false;
      for (const auto& [id, cnt] : hit)
        if (2 * (area[id] - cnt) < area[id]) erodes = true;
      if (erodes) continue;

      for (auto idx : sup.pixels) {
        const int old = scene.labels.v[idx];
        if (old) --area[old];
        scene.labels.v[idx] = static_cast<std::uint16_t>(k);
      }
      area.push_back(static_cast<long>(sup.pixels.size()));
      scene.nuclei.push_back(n);
      placed = true;
    }
    if (!placed)
      throw std::runtime_error(
          "generate_scene: could not place nucleus " + std::to_string(k) +
          " within attempt budget (scene too dense)");
  }

  // Render: flat background, darker ellipses, then texture noise.
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::uint16_t id = scene.labels.at(y, x);
      for (int c = 0; c < 3; ++c) {
        float v = kBackground[c];
        if (id) v -= opt.contrast_gap * scene.nuclei[id - 1].intensity * kNucleusShift[c];
        scene.image.set(c, y, x, v);
      }
    }
  if (texture_noise > 0.f) {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) {
          const float v = scene.image.at(c, y, x) +
                          static_cast<float>(rng.normal()) * texture_noise;
          scene.image.set(c, y, x, std::clamp(v, 0.f, 1.f));
        }
  }
  return scene;
}

std::vector<SyntheticScene> crop_patches(const SyntheticScene& scene, int patch,
                                         int overlap) {
  const int h = scene.labels.h, w = scene.labels.w;
  if (patch > std::min(h, w))
    throw std::invalid_argument("crop_patches: patch larger than scene");
  if (overlap < 0 || overlap >= patch)
    throw std::invalid_argument("crop_patches: need 0 <= overlap < patch");
  const int stride = patch - overlap;

  auto positions = [&](int dim) {
    std::vector<int> pos;
    for (int p = 0; p + patch <= dim; p += stride) pos.push_back(p);
    if (pos.back() + patch < dim) pos.push_back(dim - patch);
    return pos;
  };

  std::vector<SyntheticScene> out;
  for (int py : positions(h))
    for (int px : positions(w)) {
      SyntheticScene p;
      p.image = ImageRGB(patch, patch);
      p.labels = InstanceLabelMap(patch, patch);
      std::vector<int> present;  // old ids, ascending by first appearance scan
      std::vector<int> remap(scene.labels.max_id() + 1, 0);
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x) {
          for (int c = 0; c < 3; ++c)
            p.image.set(c, y, x, scene.image.at(c, py + y, px + x));
          const std::uint16_t id = scene.labels.at(py + y, px + x);
          if (id && !remap[id]) {
            present.push_back(id);
            remap[id] = -1;
          }
        }
      std::sort(present.begin(), present.end());
      for (size_t i = 0; i < present.size(); ++i) remap[present[i]] = static_cast<int>(i) + 1;
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x) {
          const std::uint16_t id = scene.labels.at(py + y, px + x);
          if (id) p.labels.set(y, x, static_cast<std::uint16_t>(remap[id]));
        }
      for (int old_id : present) {
        Nucleus n = scene.nuclei[old_id - 1];
        n.cx -= static_cast<float>(px);
        n.cy -= static_cast<float>(py);
        p.nuclei.push_back(n);
      }
      out.push_back(std::move(p));
    }
  return out;
}

DatasetSplit make_split(const std::vector<int>& scene_ids, Ratio ratio,
                        std::uint64_t seed) {
  if (scene_ids.size() < 8)
    throw std::invalid_argument("make_split: need at least 8 scenes");
  const int n = static_cast<int>(scene_ids.size());
  std::vector<int> ids = scene_ids;
  Rng rng(mix_seed(seed, seed_tag::split));
  rng.shuffle(ids);

  const int n_val = std::max(1, static_cast<int>(std::lround(0.2 * n)));
  const int n_test = std::max(1, static_cast<int>(std::lround(0.2 * n)));
  const int n_train = n - n_val - n_test;
  const int n_labeled = std::clamp(static_cast<int>(std::lround(n_train * ratio.value())),
                                   1, n_train - 1);

  DatasetSplit split;
  split.ratio = ratio;
  split.seed = seed;
  split.labeled.assign(ids.begin(), ids.begin() + n_labeled);
  split.unlabeled.assign(ids.begin() + n_labeled, ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  return split;
}

GenConfig benchmark_dataset_config(std::uint64_t seed) {
  GenConfig cfg;
  cfg.seed = seed;
  return cfg;  // defaults are the benchmark: 14 scenes, 128^2, 64/32 patches, 1/4
}

namespace {

std::string scene_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%04d", id);
  return buf;
}

nlohmann::json split_to_json(const DatasetSplit& s) {
  nlohmann::json j;
  j["labeled"] = s.labeled;
  j["unlabeled"] = s.unlabeled;
  j["val"] = s.val;
  j["test"] = s.test;
  j["ratio"] = s.ratio.str();
  j["seed"] = s.seed;
  return j;
}

DatasetSplit split_from_json(const nlohmann::json& j) {
  DatasetSplit s;
  s.labeled = j.at("labeled").get<std::vector<int>>();
  s.unlabeled = j.at("unlabeled").get<std::vector<int>>();
  s.val = j.at("val").get<std::vector<int>>();
  s.test = j.at("test").get<std::vector<int>>();
  s.ratio = parse_ratio(j.at("ratio").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void save_manifest(const std::string& dir, const DatasetManifest& m) {
  nlohmann::json j;
  j["seed"] = m.gen.seed;
  j["scenes"] = m.gen.scenes;
  j["height"] = m.gen.height;
  j["width"] = m.gen.width;
  j["nuclei_per_scene"] = m.gen.nuclei_per_scene;
  j["noise"] = m.gen.noise;
  j["contrast"] = m.gen.contrast;
  j["patch"] = m.gen.patch;
  j["overlap"] = m.gen.overlap;
  j["ratio"] = m.gen.ratio.str();
  j["scene_split"] = split_to_json(m.scene_split);
  j["patches"] = {{"labeled", m.labeled},
                  {"unlabeled", m.unlabeled},
                  {"val", m.val},
                  {"test", m.test}};
  std::ofstream f(dir + "/manifest.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest under " + dir);
  f << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("missing manifest.json under " + dir);
  nlohmann::json j;
  f >> j;
  DatasetManifest m;
  m.gen.seed = j.at("seed").get<std::uint64_t>();
  m.gen.scenes = j.at("scenes").get<int>();
  m.gen.height = j.at("height").get<int>();
  m.gen.width = j.at("width").get<int>();
  m.gen.nuclei_per_scene = j.at("nuclei_per_scene").get<int>();
  m.gen.noise = j.at("noise").get<float>();
  m.gen.contrast = j.at("contrast").get<float>();
  m.gen.patch = j.at("patch").get<int>();
  m.gen.overlap = j.at("overlap").get<int>();
  m.gen.ratio = parse_ratio(j.at("ratio").get<std::string>());
  m.scene_split = split_from_json(j.at("scene_split"));
  m.labeled = j.at("patches").at("labeled").get<std::vector<std::string>>();
  m.unlabeled = j.at("patches").at("unlabeled").get<std::vector<std::string>>();
  m.val = j.at("patches").at("val").get<std::vector<std::string>>();
  m.test = j.at("patches").at("test").get<std::vector<std::string>>();
  return m;
}

DatasetManifest generate_dataset(const GenConfig& cfg, const std::string& dir) {
  fs::create_directories(dir + "/scenes");
  fs::create_directories(dir + "/patches");

  DatasetManifest m;
  m.gen = cfg;
  std::vector<int> ids(cfg.scenes);
  for (int i = 0; i < cfg.scenes; ++i) ids[i] = i;
  m.scene_split = make_split(ids, cfg.ratio, cfg.seed);

  SceneOptions opt;
  opt.contrast_gap = cfg.contrast;

  std::vector<SyntheticScene> scenes(cfg.scenes);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < cfg.scenes; ++i) {
    try {
      scenes[i] = generate_scene(mix_seed(cfg.seed, 1000 + i), cfg.height, cfg.width,
                                 cfg.nuclei_per_scene, cfg.noise, opt);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  auto partition_of = [&](int id) -> std::vector<std::string>* {
    auto in = [&](const std::vector<int>& xs) {
      return std::find(xs.begin(), xs.end(), id) != xs.end();
    };
    if (in(m.scene_split.labeled)) return &m.labeled;
    if (in(m.scene_split.unlabeled)) return &m.unlabeled;
    if (in(m.scene_split.val)) return &m.val;
    return &m.test;
  };

  for (int i = 0; i < cfg.scenes; ++i) {
    const auto name = scene_name(i);
    save_image_png(dir + "/scenes/" + name + ".png", scenes[i].image);
    save_labels_png(dir + "/scenes/" + name + "_mask.png", scenes[i].labels);
    const auto patches = crop_patches(scenes[i], cfg.patch, cfg.overlap);
    auto* bucket = partition_of(i);
    for (size_t p = 0; p < patches.size(); ++p) {
      char pid[48];
      std::snprintf(pid, sizeof(pid), "%s_p%02d", name.c_str(), static_cast<int>(p));
      save_image_png(dir + "/patches/" + pid + ".png", patches[p].image);
      save_labels_png(dir + "/patches/" + pid + "_mask.png", patches[p].labels);
      bucket->push_back(pid);
    }
  }
  save_manifest(dir, m);
  return m;
}

std::vector<Sample> load_partition(const std::string& dir, const DatasetManifest& m,
                                   const std::string& partition) {
  const std::vector<std::string>* ids = nullptr;
  if (partition == "labeled") ids = &m.labeled;
  else if (partition == "unlabeled") ids = &m.unlabeled;
  else if (partition == "val") ids = &m.val;
  else if (partition == "test") ids = &m.test;
  else throw std::invalid_argument("unknown partition: " + partition);

  std::vector<Sample> out(ids->size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(ids->size()); ++i) {
    try {
      Sample s;
      s.id = (*ids)[i];
      s.image = load_image_png(dir + "/patches/" + s.id + ".png");
      s.labels = load_labels_png(dir + "/patches/" + s.id + "_mask.png");
      out[i] = std::move(s);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace nucseg
