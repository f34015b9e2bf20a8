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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nucseg {

/// Axis-aligned box in pixel coordinates, half-open in spirit but stored as
/// continuous corners (x1,y1) top-left, (x2,y2) bottom-right.
struct Box {
  float x1 = 0.f, y1 = 0.f, x2 = 0.f, y2 = 0.f;

  float width() const { return x2 - x1; }
  float height() const { return y2 - y1; }
  float area() const { return width() * height(); }
  float cx() const { return 0.5f * (x1 + x2); }
  float cy() const { return 0.5f * (y1 + y2); }
};

float box_iou(const Box& a, const Box& b);

/// One detected instance: a box plus its confidence in [0,1].
struct Detection {
  Box box;
  float score = 0.f;
};

/// H×W boolean grid, true = foreground. Row-major, index y*w+x.
struct BinaryMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> v;

  BinaryMask() = default;
  BinaryMask(int h_, int w_, bool fill = false)
      : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill ? 1 : 0) {}

  bool at(int y, int x) const { return v[static_cast<size_t>(y) * w + x] != 0; }
  void set(int y, int x, bool b) { v[static_cast<size_t>(y) * w + x] = b ? 1 : 0; }
  size_t size() const { return v.size(); }
  int count() const {
    int n = 0;
    for (auto b : v) n += b ? 1 : 0;
    return n;
  }
  bool operator==(const BinaryMask&) const = default;
};

/// Per-pixel loss weights for the low-resolution head.
struct WeightMap {
  int h = 0, w = 0;
  std::vector<float> v;

  WeightMap() = default;
  WeightMap(int h_, int w_, float fill = 1.f)
      : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

  float at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  void set(int y, int x, float f) { v[static_cast<size_t>(y) * w + x] = f; }
};

/// Integer grid assigning each pixel a nucleus id, 0 = background.
/// Ground truth and predictions share this form.
struct InstanceLabelMap {
  int h = 0, w = 0;
  std::vector<std::uint16_t> v;

  InstanceLabelMap() = default;
  InstanceLabelMap(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}

  std::uint16_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  void set(int y, int x, std::uint16_t id) { v[static_cast<size_t>(y) * w + x] = id; }
  std::uint16_t max_id() const {
    std::uint16_t m = 0;
    for (auto id : v) m = id > m ? id : m;
    return m;
  }
  BinaryMask foreground() const {
    BinaryMask m(h, w);
    for (size_t i = 0; i < v.size(); ++i) m.v[i] = v[i] != 0 ? 1 : 0;
    return m;
  }
  bool operator==(const InstanceLabelMap&) const = default;
};

/// RGB image stored planar (3 × h × w), values in [0,1].
struct ImageRGB {
  int h = 0, w = 0;
  std::vector<float> v;

  ImageRGB() = default;
  ImageRGB(int h_, int w_, float fill = 0.f)
      : h(h_), w(w_), v(static_cast<size_t>(3) * h_ * w_, fill) {}

  float at(int c, int y, int x) const {
    return v[(static_cast<size_t>(c) * h + y) * w + x];
  }
  void set(int c, int y, int x, float f) {
    v[(static_cast<size_t>(c) * h + y) * w + x] = f;
  }
  bool operator==(const ImageRGB&) const = default;
};

}  // namespace nucseg
