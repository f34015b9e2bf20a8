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
#include <vector>

#include "nucseg/types.hpp"

namespace nucseg {

/// The four pixel sets around one instance contour at band half-width d:
/// inner band, outer band, and their complements within foreground/background.
/// Pixels are stored as sorted linear indices (y * w + x).
struct ContourBands {
  int h = 0, w = 0;
  float d = 0.f;
  std::vector<std::int32_t> contour;
  std::vector<std::int32_t> p_inn;       // foreground within distance d of the contour
  std::vector<std::int32_t> p_out;       // background within distance d of the contour
  std::vector<std::int32_t> p_fore_inn;  // foreground \ p_inn
  std::vector<std::int32_t> p_back_out;  // background \ p_out
};

/// Foreground pixels with at least one background 4-neighbor. Off-image
/// neighbors count as background, so foreground on the image border is
/// contour. Empty mask -> empty set. Sorted linear indices.
std::vector<std::int32_t> extract_contour(const BinaryMask& mask);

/// Exact squared Euclidean distance from every pixel to the nearest source
/// pixel (two-pass transform; sources given as linear indices). Pixels
/// unreachable (no sources) get INT64_MAX.
std::vector<std::int64_t> distance_sq_to(const BinaryMask& shape_ref,
                                         const std::vector<std::int32_t>& sources);

/// Band construction: for d > 0 a pixel joins the inner (outer) band when its
/// Euclidean distance to the contour is <= d; d = 0 yields empty bands and the
/// complements cover all of foreground/background.
ContourBands compute_bands(const BinaryMask& mask, float d);

/// Pixels within `band` of the contour (both sides, contour included) get
/// w_boundary, everything else w_interior. Requires 0 <= w_boundary <= w_interior.
WeightMap boundary_weight_map(const BinaryMask& mask, float band, float w_boundary,
                              float w_interior);

/// Area-box majority downsampling: output cell true iff the foreground area
/// fraction of its box exceeds 1/2 (exact ties resolve to background).
BinaryMask downsample_majority(const BinaryMask& mask, int out_h, int out_w);

/// Majority rasterization of an image-space mask into an out_h × out_w grid
/// covering `box` (float coordinates; pixel p spans [p, p+1)).
BinaryMask rasterize_box_majority(const BinaryMask& mask, const Box& box, int out_h,
                                  int out_w);

/// Paste a RoI-local binary mask into an instance map over `box` using nearest
/// lookup; true cells overwrite whatever id was there.
void paste_instance(InstanceLabelMap& dst, const BinaryMask& roi_mask, const Box& box,
                    std::uint16_t id);

/// Tight bounding box of one instance id (inclusive pixel extents widened to
/// box coordinates). Returns false when the id has no pixels.
bool instance_box(const InstanceLabelMap& labels, std::uint16_t id, Box* out);

}  // namespace nucseg
