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
#include <string>
#include <vector>

#include "nucseg/types.hpp"

namespace nucseg {

// Minimal PNG codec over zlib. Supports grayscale (8/16 bit) and RGB (8 bit),
// non-interlaced. Enough for the image and instance-mask formats this project
// reads and writes; 16-bit samples carry instance ids.

struct PngImage {
  int w = 0, h = 0;
  int channels = 0;   // 1 or 3
  int bit_depth = 0;  // 8 or 16
  std::vector<std::uint16_t> pix;  // row-major, channel-interleaved

  std::uint16_t at(int y, int x, int c = 0) const {
    return pix[(static_cast<size_t>(y) * w + x) * channels + c];
  }
};

PngImage read_png(const std::string& path);
void write_png_gray8(const std::string& path, int w, int h, const std::uint8_t* data);
void write_png_gray16(const std::string& path, int w, int h, const std::uint16_t* data);
void write_png_rgb8(const std::string& path, int w, int h, const std::uint8_t* data);

// Converters for the project's on-disk formats: 8-bit RGB images in [0,1],
// 16-bit single-channel instance masks (pixel value = instance id).
void save_image_png(const std::string& path, const ImageRGB& img);
ImageRGB load_image_png(const std::string& path);
void save_labels_png(const std::string& path, const InstanceLabelMap& labels);
InstanceLabelMap load_labels_png(const std::string& path);

}  // namespace nucseg
