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

#include "nucseg/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace nucseg {

namespace {

constexpr std::uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::uint8_t* data, std::uint32_t len) {
  put_u32(out, len);
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len) out.insert(out.end(), data, data + len);
  const auto crc =
      crc32(0L, out.data() + start, static_cast<uInt>(4 + len));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> zlib_compress(const std::vector<std::uint8_t>& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png: zlib compression failed");
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> zlib_decompress(const std::vector<std::uint8_t>& in, size_t expect) {
  std::vector<std::uint8_t> out(expect);
  uLongf outlen = static_cast<uLongf>(expect);
  const int rc = uncompress(out.data(), &outlen, in.data(), static_cast<uLong>(in.size()));
  if (rc != Z_OK || outlen != expect)
    throw std::runtime_error("png: zlib decompression failed");
  return out;
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

void write_png(const std::string& path, int w, int h, int channels, int bit_depth,
               const std::vector<std::uint8_t>& samples_be) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("png: empty image");
  const size_t row_bytes = static_cast<size_t>(w) * channels * (bit_depth / 8);
  std::vector<std::uint8_t> raw;
  raw.reserve((row_bytes + 1) * h);
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter type none
    raw.insert(raw.end(), samples_be.begin() + y * row_bytes,
               samples_be.begin() + (y + 1) * row_bytes);
  }
  const auto idat = zlib_compress(raw);

  std::vector<std::uint8_t> file;
  file.insert(file.end(), kSignature, kSignature + 8);
  std::uint8_t ihdr[13];
  ihdr[0] = static_cast<std::uint8_t>(w >> 24); ihdr[1] = static_cast<std::uint8_t>(w >> 16);
  ihdr[2] = static_cast<std::uint8_t>(w >> 8);  ihdr[3] = static_cast<std::uint8_t>(w);
  ihdr[4] = static_cast<std::uint8_t>(h >> 24); ihdr[5] = static_cast<std::uint8_t>(h >> 16);
  ihdr[6] = static_cast<std::uint8_t>(h >> 8);  ihdr[7] = static_cast<std::uint8_t>(h);
  ihdr[8] = static_cast<std::uint8_t>(bit_depth);
  ihdr[9] = channels == 3 ? 2 : 0;  // color type
  ihdr[10] = 0; ihdr[11] = 0; ihdr[12] = 0;
  append_chunk(file, "IHDR", ihdr, 13);
  append_chunk(file, "IDAT", idat.data(), static_cast<std::uint32_t>(idat.size()));
  append_chunk(file, "IEND", nullptr, 0);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("png: cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
  if (!f) throw std::runtime_error("png: write failed: " + path);
}

}  // namespace

PngImage read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("png: cannot open: " + path);
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (file.size() < 8 || std::memcmp(file.data(), kSignature, 8) != 0)
    throw std::runtime_error("png: bad signature: " + path);

  int w = 0, h = 0, bit_depth = 0, color_type = -1;
  std::vector<std::uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= file.size()) {
    const std::uint32_t len = get_u32(&file[pos]);
    if (pos + 12 + len > file.size()) throw std::runtime_error("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(&file[pos + 4]);
    const std::uint8_t* data = &file[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      w = static_cast<int>(get_u32(data));
      h = static_cast<int>(get_u32(data + 4));
      bit_depth = data[8];
      color_type = data[9];
      if (data[12] != 0) throw std::runtime_error("png: interlacing unsupported");
      if ((color_type != 0 && color_type != 2) || (bit_depth != 8 && bit_depth != 16))
        throw std::runtime_error("png: only gray/rgb 8/16-bit supported");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0 || color_type < 0) throw std::runtime_error("png: missing IHDR");

  const int channels = color_type == 2 ? 3 : 1;
  const int bpp = channels * bit_depth / 8;  // bytes per pixel
  const size_t row_bytes = static_cast<size_t>(w) * bpp;
  auto raw = zlib_decompress(idat, (row_bytes + 1) * h);

  // Undo per-row filters in place.
  std::vector<std::uint8_t> prev(row_bytes, 0);
  PngImage img;
  img.w = w; img.h = h; img.channels = channels; img.bit_depth = bit_depth;
  img.pix.resize(static_cast<size_t>(w) * h * channels);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[y * (row_bytes + 1)];
    std::uint8_t* row = &raw[y * (row_bytes + 1) + 1];
    for (size_t i = 0; i < row_bytes; ++i) {
      const int a = i >= static_cast<size_t>(bpp) ? row[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= static_cast<size_t>(bpp) ? prev[i - bpp] : 0;
      int x = row[i];
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: x += paeth(a, b, c); break;
        default: throw std::runtime_error("png: unknown filter type");
      }
      row[i] = static_cast<std::uint8_t>(x);
    }
    std::memcpy(prev.data(), row, row_bytes);
    for (int x = 0; x < w * channels; ++x) {
      img.pix[static_cast<size_t>(y) * w * channels + x] =
          bit_depth == 8 ? row[x]
                         : static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
    }
  }
  return img;
}

void write_png_gray8(const std::string& path, int w, int h, const std::uint8_t* data) {
  std::vector<std::uint8_t> be(data, data + static_cast<size_t>(w) * h);
  write_png(path, w, h, 1, 8, be);
}

void write_png_gray16(const std::string& path, int w, int h, const std::uint16_t* data) {
  std::vector<std::uint8_t> be(static_cast<size_t>(w) * h * 2);
  for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
    be[2 * i] = static_cast<std::uint8_t>(data[i] >> 8);
    be[2 * i + 1] = static_cast<std::uint8_t>(data[i] & 0xff);
  }
  write_png(path, w, h, 1, 16, be);
}

void write_png_rgb8(const std::string& path, int w, int h, const std::uint8_t* data) {
  std::vector<std::uint8_t> be(data, data + static_cast<size_t>(w) * h * 3);
  write_png(path, w, h, 3, 8, be);
}

void save_image_png(const std::string& path, const ImageRGB& img) {
  std::vector<std::uint8_t> rgb(static_cast<size_t>(img.w) * img.h * 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float f = std::clamp(img.at(c, y, x), 0.f, 1.f);
        rgb[(static_cast<size_t>(y) * img.w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(f * 255.f));
      }
  write_png_rgb8(path, img.w, img.h, rgb.data());
}

ImageRGB load_image_png(const std::string& path) {
  const auto png = read_png(path);
  if (png.channels != 3 || png.bit_depth != 8)
    throw std::runtime_error("png: expected 8-bit RGB image: " + path);
  ImageRGB img(png.h, png.w);
  for (int y = 0; y < png.h; ++y)
    for (int x = 0; x < png.w; ++x)
      for (int c = 0; c < 3; ++c)
        img.set(c, y, x, static_cast<float>(png.at(y, x, c)) / 255.f);
  return img;
}

void save_labels_png(const std::string& path, const InstanceLabelMap& labels) {
  write_png_gray16(path, labels.w, labels.h, labels.v.data());
}

InstanceLabelMap load_labels_png(const std::string& path) {
  const auto png = read_png(path);
  if (png.channels != 1 || png.bit_depth != 16)
    throw std::runtime_error("png: expected 16-bit grayscale mask: " + path);
  InstanceLabelMap labels(png.h, png.w);
  labels.v = png.pix;
  return labels;
}

}  // namespace nucseg
