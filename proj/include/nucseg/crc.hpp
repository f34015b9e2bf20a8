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
#include <utility>
#include <vector>

#include "nucseg/geometry.hpp"
#include "nucseg/losses.hpp"
#include "nucseg/tensor.hpp"
#include "nucseg/types.hpp"

// Cross-RoI contrastive learning: pixel embeddings are sampled from the four
// contour-band regions of two RoIs, averaged into background/foreground
// queries, and pulled together / pushed apart with the four-term InfoNCE
// combination. Bands are computed at the 14×14 RoI resolution from the
// supervision masks (ground truth on labeled data, filtered pseudo-labels on
// unlabeled data).

namespace nucseg {

enum class MaskProvenance { human, pseudo };

/// Sampled vectors of one region keyed by their 14×14 cell indices.
struct RegionSample {
  std::vector<std::int32_t> cells;  // linear indices into the 14×14 grid
  std::vector<Vec> vecs;
};

/// The eight sampled key lists of one RoI pair plus the averaged queries.
struct EmbeddingBatch {
  RegionSample back_i, out_i, fore_i, inn_i;
  RegionSample back_j, out_j, fore_j, inn_j;
  Vec q_b, q_f;
  double alpha = 0.7;
  std::uint64_t seed = 0;
};

/// Seeded uniform sampling without replacement of
/// max(1, floor(alpha * |region|)) cells; empty region -> empty sample.
RegionSample sample_region(const Tensor3<double>& embedding_grid,
                           const std::vector<std::int32_t>& region, double alpha,
                           std::uint64_t seed);

/// q_b = renormalized mean over the union of the background-side samples
/// (back + out of both RoIs), q_f analogous over the foreground side.
/// Throws when a side has no vectors (degenerate RoI; callers skip the pair).
std::pair<Vec, Vec> make_queries(const EmbeddingBatch& batch);

/// Seeded shuffle + consecutive pairing; an odd RoI is paired with itself.
std::vector<std::pair<int, int>> pair_rois(int n_rois, std::uint64_t seed);

struct CrcStepResult {
  double loss = 0.0;
  bool skipped = false;
  int active_terms = 0;
};

/// Full contrastive step for one RoI pair, on already-computed embedding
/// grids: bands at 14×14 scale, sampling, queries, and the four-term loss.
/// Terms whose positive or negative key set is empty are dropped (at d = 0 the
/// band sets are empty by construction and only the deep fore/back terms
/// remain); the pair is skipped when a whole side is empty or no term is
/// computable. Gradients accumulate into *demb_i / *demb_j when given.
CrcStepResult crc_step(const Tensor3<double>& emb_i, const Tensor3<double>& emb_j,
                       const BinaryMask& mask14_i, const BinaryMask& mask14_j, float d,
                       double alpha, double tau, std::uint64_t seed,
                       Tensor3<double>* demb_i = nullptr, Tensor3<double>* demb_j = nullptr,
                       EmbeddingBatch* batch_out = nullptr);

}  // namespace nucseg
