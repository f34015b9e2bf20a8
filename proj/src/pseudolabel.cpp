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

#include "nucseg/pseudolabel.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "nucseg/geometry.hpp"
#include "nucseg/png_io.hpp"

namespace nucseg {

std::vector<RawInstance> infer_teacher(const Model<float>& teacher, const ImageRGB& image) {
  Tensor3<float> img(3, image.h, image.w);
  img.v.assign(image.v.begin(), image.v.end());
  BackboneCache<float> bb;
  const auto& feat = teacher.backbone_forward(img, bb);
  const auto dets = teacher.detect(feat, image.h, image.w);

  std::vector<RawInstance> out;
  out.reserve(dets.size());
  for (const auto& det : dets) {
    const double cells = det.box.width() / teacher.cfg.stride *
                         (det.box.height() / teacher.cfg.stride);
    if (cells < 1.0) continue;  // degenerate proposal
    const auto roi = teacher.roi_align(feat, det.box);
    MaskHeadCache<float> mh;
    const auto pred = teacher.mask_heads(roi, mh, /*want_nmh=*/true, /*want_lrd=*/false);
    RawInstance ri;
    ri.det = det;
    ri.prob28 = Tensor3<float>(1, pred.high_res.h, pred.high_res.w);
    for (size_t i = 0; i < pred.high_res.size(); ++i)
      ri.prob28.v[i] = 1.f / (1.f + std::exp(-pred.high_res.v[i]));
    out.push_back(std::move(ri));
  }
  return out;
}

PseudoLabel filter_pseudo(const std::vector<RawInstance>& raw, const std::string& image_id,
                          int img_h, int img_w, float t_box, float t_pix) {
  if (t_box < 0.f || t_box > 1.f || t_pix < 0.f || t_pix > 1.f)
    throw std::invalid_argument("filter_pseudo: thresholds must be in [0,1]");
  PseudoLabel out;
  out.image_id = image_id;
  out.img_h = img_h;
  out.img_w = img_w;
  out.t_box = t_box;
  out.t_pix = t_pix;
  for (const auto& ri : raw) {
    if (ri.det.score < t_box) continue;
    PseudoInstance pi;
    pi.det = ri.det;
    pi.mask28 = BinaryMask(ri.prob28.h, ri.prob28.w);
    bool any = false;
    for (size_t i = 0; i < ri.prob28.size(); ++i) {
      const bool fg = ri.prob28.v[i] >= t_pix;
      pi.mask28.v[i] = fg ? 1 : 0;
      any = any || fg;
    }
    if (!any) continue;  // empty mask after pixel thresholding
    pi.mask14 = downsample_majority(pi.mask28, 14, 14);
    out.instances.push_back(std::move(pi));
  }
  return out;
}

PseudoLabel filter_pseudo(const PseudoLabel& label, float t_box, float t_pix) {
  std::vector<RawInstance> raw;
  raw.reserve(label.instances.size());
  for (const auto& pi : label.instances) {
    RawInstance ri;
    ri.det = pi.det;
    ri.prob28 = Tensor3<float>(1, pi.mask28.h, pi.mask28.w);
    for (size_t i = 0; i < pi.mask28.v.size(); ++i)
      ri.prob28.v[i] = pi.mask28.v[i] ? 1.f : 0.f;
    raw.push_back(std::move(ri));
  }
  return filter_pseudo(raw, label.image_id, label.img_h, label.img_w, t_box, t_pix);
}

TrainRecord record_from_ground_truth(const Sample& sample) {
  TrainRecord rec;
  rec.id = sample.id;
  rec.image = sample.image;
  rec.provenance = MaskProvenance::human;
  const int k = sample.labels.max_id();
  for (int id = 1; id <= k; ++id) {
    Box box;
    if (!instance_box(sample.labels, static_cast<std::uint16_t>(id), &box)) continue;
    TrainInstance ti;
    ti.box = box;
    ti.mask = BinaryMask(sample.labels.h, sample.labels.w);
    for (size_t i = 0; i < sample.labels.v.size(); ++i)
      ti.mask.v[i] = sample.labels.v[i] == id ? 1 : 0;
    rec.instances.push_back(std::move(ti));
  }
  return rec;
}

TrainRecord record_from_pseudo(const ImageRGB& image, const PseudoLabel& label) {
  TrainRecord rec;
  rec.id = label.image_id;
  rec.image = image;
  rec.provenance = MaskProvenance::pseudo;
  for (const auto& pi : label.instances) {
    TrainInstance ti;
    ti.box = pi.det.box;
    ti.score = pi.det.score;
    InstanceLabelMap pasted(label.img_h, label.img_w);
    paste_instance(pasted, pi.mask28, pi.det.box, 1);
    ti.mask = pasted.foreground();
    if (ti.mask.count() == 0) continue;
    rec.instances.push_back(std::move(ti));
  }
  return rec;
}

std::vector<TrainRecord> assemble_student_set(
    const std::vector<Sample>& labeled,
    const std::vector<std::pair<ImageRGB, PseudoLabel>>& pseudo) {
  std::vector<TrainRecord> out;
  std::set<std::string> ids;
  for (const auto& s : labeled) {
    if (!ids.insert(s.id).second)
      throw std::invalid_argument("assemble_student_set: duplicate image id " + s.id);
    out.push_back(record_from_ground_truth(s));
  }
  for (const auto& [img, pl] : pseudo) {
    if (!ids.insert(pl.image_id).second)
      throw std::invalid_argument("assemble_student_set: duplicate image id " + pl.image_id);
    out.push_back(record_from_pseudo(img, pl));
  }
  return out;
}

InstanceLabelMap pseudo_to_labelmap(const PseudoLabel& label) {
  InstanceLabelMap map(label.img_h, label.img_w);
  std::vector<int> order(label.instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return label.instances[a].det.score < label.instances[b].det.score;
  });
  std::uint16_t next = 1;
  for (int i : order)
    paste_instance(map, label.instances[i].mask28, label.instances[i].det.box, next++);
  return map;
}

namespace {

void save_mask_strip(const std::string& path, const std::vector<const BinaryMask*>& masks,
                     int side) {
  // Vertical strip: K tiles of side×side, 0/255.
  const int k = std::max<int>(1, static_cast<int>(masks.size()));
  std::vector<std::uint8_t> buf(static_cast<size_t>(k) * side * side, 0);
  for (size_t m = 0; m < masks.size(); ++m)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        buf[(m * side + y) * side + x] = masks[m]->at(y, x) ? 255 : 0;
  write_png_gray8(path, side, k * side, buf.data());
}

std::vector<BinaryMask> load_mask_strip(const std::string& path, int side, int count) {
  const auto png = read_png(path);
  if (png.channels != 1 || png.bit_depth != 8 || png.w != side)
    throw std::runtime_error("bad mask strip: " + path);
  std::vector<BinaryMask> out;
  for (int m = 0; m < count; ++m) {
    BinaryMask mask(side, side);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) mask.set(y, x, png.at(m * side + y, x) >= 128);
    out.push_back(std::move(mask));
  }
  return out;
}

}  // namespace

void save_pseudo_label(const std::string& dir, const PseudoLabel& label) {
  nlohmann::json j;
  j["image_id"] = label.image_id;
  j["img_h"] = label.img_h;
  j["img_w"] = label.img_w;
  j["t_box"] = label.t_box;
  j["t_pix"] = label.t_pix;
  auto boxes = nlohmann::json::array();
  for (const auto& pi : label.instances)
    boxes.push_back({{"x1", pi.det.box.x1},
                     {"y1", pi.det.box.y1},
                     {"x2", pi.det.box.x2},
                     {"y2", pi.det.box.y2},
                     {"score", pi.det.score}});
  j["instances"] = boxes;
  std::ofstream f(dir + "/" + label.image_id + ".json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write pseudo label under " + dir);
  f << j.dump(2) << "\n";

  save_labels_png(dir + "/" + label.image_id + "_inst.png", pseudo_to_labelmap(label));
  std::vector<const BinaryMask*> m14, m28;
  for (const auto& pi : label.instances) {
    m14.push_back(&pi.mask14);
    m28.push_back(&pi.mask28);
  }
  save_mask_strip(dir + "/" + label.image_id + "_m14.png", m14, 14);
  save_mask_strip(dir + "/" + label.image_id + "_m28.png", m28, 28);
}

PseudoLabel load_pseudo_label(const std::string& dir, const std::string& image_id) {
  std::ifstream f(dir + "/" + image_id + ".json");
  if (!f) throw std::runtime_error("missing pseudo label: " + image_id);
  nlohmann::json j;
  f >> j;
  PseudoLabel label;
  label.image_id = j.at("image_id").get<std::string>();
  label.img_h = j.at("img_h").get<int>();
  label.img_w = j.at("img_w").get<int>();
  label.t_box = j.at("t_box").get<float>();
  label.t_pix = j.at("t_pix").get<float>();
  const auto& boxes = j.at("instances");
  const int count = static_cast<int>(boxes.size());
  auto m14 = count ? load_mask_strip(dir + "/" + image_id + "_m14.png", 14, count)
                   : std::vector<BinaryMask>{};
  auto m28 = count ? load_mask_strip(dir + "/" + image_id + "_m28.png", 28, count)
                   : std::vector<BinaryMask>{};
  for (int i = 0; i < count; ++i) {
    PseudoInstance pi;
    pi.det.box = Box{boxes[i].at("x1").get<float>(), boxes[i].at("y1").get<float>(),
                     boxes[i].at("x2").get<float>(), boxes[i].at("y2").get<float>()};
    pi.det.score = boxes[i].at("score").get<float>();
    pi.mask14 = std::move(m14[i]);
    pi.mask28 = std::move(m28[i]);
    label.instances.push_back(std::move(pi));
  }
  return label;
}

}  // namespace nucseg
