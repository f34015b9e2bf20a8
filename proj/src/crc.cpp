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

#include "nucseg/crc.hpp"

#include <cmath>
#include <stdexcept>

#include "nucseg/rng.hpp"

namespace nucseg {

RegionSample sample_region(const Tensor3<double>& embedding_grid,
                           const std::vector<std::int32_t>& region, double alpha,
                           std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("sample_region: alpha must be in (0,1]");
  RegionSample out;
  if (region.empty()) return out;
  const int keep = std::max(
      1, static_cast<int>(std::floor(alpha * static_cast<double>(region.size()))));

  std::vector<std::int32_t> cells = region;
  Rng rng(seed);
  rng.shuffle(cells);
  cells.resize(keep);

  const int d = embedding_grid.c, hw = embedding_grid.h * embedding_grid.w;
  out.cells = cells;
  out.vecs.reserve(cells.size());
  for (auto cell : cells) {
    if (cell < 0 || cell >= hw) throw std::invalid_argument("sample_region: cell out of grid");
    Vec v(d);
    for (int k = 0; k < d; ++k) v[k] = embedding_grid.v[static_cast<size_t>(k) * hw + cell];
    out.vecs.push_back(std::move(v));
  }
  return out;
}

namespace {

Vec mean_normalized(const std::vector<const RegionSample*>& parts, size_t dim,
                    double* norm_out) {
  Vec m(dim, 0.0);
  size_t n = 0;
  for (const auto* p : parts)
    for (const auto& v : p->vecs) {
      for (size_t k = 0; k < dim; ++k) m[k] += v[k];
      ++n;
    }
  if (n == 0) throw std::runtime_error("make_queries: a side has no sampled vectors");
  for (auto& x : m) x /= static_cast<double>(n);
  double norm = 0;
  for (double x : m) norm += x * x;
  norm = std::sqrt(std::max(norm, 1e-24));
  if (norm_out) *norm_out = norm;
  for (auto& x : m) x /= norm;
  return m;
}

size_t side_count(const std::vector<const RegionSample*>& parts) {
  size_t n = 0;
  for (const auto* p : parts) n += p->vecs.size();
  return n;
}

// d(normalize(mean))/d(each vector): project out the q component, scale by
// 1/(norm * n).
void query_backward(const Vec& q, double norm, size_t n, const Vec& dq,
                    const std::vector<const RegionSample*>& parts,
                    std::vector<std::vector<Vec>*> part_grads) {
  const size_t dim = q.size();
  double qd = 0;
  for (size_t k = 0; k < dim; ++k) qd += q[k] * dq[k];
  Vec dm(dim);
  for (size_t k = 0; k < dim; ++k) dm[k] = (dq[k] - q[k] * qd) / (norm * static_cast<double>(n));
  for (size_t p = 0; p < parts.size(); ++p)
    for (size_t i = 0; i < parts[p]->vecs.size(); ++i)
      for (size_t k = 0; k < dim; ++k) (*part_grads[p])[i][k] += dm[k];
}

}  // namespace

std::pair<Vec, Vec> make_queries(const EmbeddingBatch& batch) {
  const size_t dim = [&] {
    for (const auto* p : {&batch.back_i, &batch.out_i, &batch.back_j, &batch.out_j,
                          &batch.fore_i, &batch.inn_i, &batch.fore_j, &batch.inn_j})
      if (!p->vecs.empty()) return p->vecs.front().size();
    throw std::runtime_error("make_queries: a side has no sampled vectors");
  }();
  const auto q_b = mean_normalized({&batch.back_i, &batch.out_i, &batch.back_j, &batch.out_j},
                                   dim, nullptr);
  const auto q_f = mean_normalized({&batch.fore_i, &batch.inn_i, &batch.fore_j, &batch.inn_j},
                                   dim, nullptr);
  return {q_b, q_f};
}

std::vector<std::pair<int, int>> pair_rois(int n_rois, std::uint64_t seed) {
  if (n_rois < 1) throw std::invalid_argument("pair_rois: need at least one RoI");
  std::vector<int> idx(n_rois);
  for (int i = 0; i < n_rois; ++i) idx[i] = i;
  Rng rng(mix_seed(seed, seed_tag::crc));
  rng.shuffle(idx);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i + 1 < n_rois; i += 2) pairs.push_back({idx[i], idx[i + 1]});
  if (n_rois % 2) pairs.push_back({idx[n_rois - 1], idx[n_rois - 1]});
  return pairs;
}

CrcStepResult crc_step(const Tensor3<double>& emb_i, const Tensor3<double>& emb_j,
                       const BinaryMask& mask14_i, const BinaryMask& mask14_j, float d,
                       double alpha, double tau, std::uint64_t seed,
                       Tensor3<double>* demb_i, Tensor3<double>* demb_j,
                       EmbeddingBatch* batch_out) {
  CrcStepResult res;
  const auto bands_i = compute_bands(mask14_i, d);
  const auto bands_j = compute_bands(mask14_j, d);

  // Region seeds are shared by the two RoIs: swapping (i, j) then only
  // permutes the cross-RoI concatenations and the loss is unchanged.
  EmbeddingBatch b;
  b.alpha = alpha;
  b.seed = seed;
  b.back_i = sample_region(emb_i, bands_i.p_back_out, alpha, mix_seed(seed, 10));
  b.out_i = sample_region(emb_i, bands_i.p_out, alpha, mix_seed(seed, 11));
  b.fore_i = sample_region(emb_i, bands_i.p_fore_inn, alpha, mix_seed(seed, 12));
  b.inn_i = sample_region(emb_i, bands_i.p_inn, alpha, mix_seed(seed, 13));
  b.back_j = sample_region(emb_j, bands_j.p_back_out, alpha, mix_seed(seed, 10));
  b.out_j = sample_region(emb_j, bands_j.p_out, alpha, mix_seed(seed, 11));
  b.fore_j = sample_region(emb_j, bands_j.p_fore_inn, alpha, mix_seed(seed, 12));
  b.inn_j = sample_region(emb_j, bands_j.p_inn, alpha, mix_seed(seed, 13));

  const std::vector<const RegionSample*> bg_parts = {&b.back_i, &b.out_i, &b.back_j, &b.out_j};
  const std::vector<const RegionSample*> fg_parts = {&b.fore_i, &b.inn_i, &b.fore_j, &b.inn_j};
  if (side_count(bg_parts) == 0 || side_count(fg_parts) == 0) {
    res.skipped = true;
    if (batch_out) *batch_out = std::move(b);
    return res;
  }

  double norm_b = 0, norm_f = 0;
  const size_t dim = emb_i.c;
  b.q_b = mean_normalized(bg_parts, dim, &norm_b);
  b.q_f = mean_normalized(fg_parts, dim, &norm_f);

  // Cross-RoI concatenations.
  auto concat = [](const RegionSample& x, const RegionSample& y) {
    std::vector<Vec> out = x.vecs;
    out.insert(out.end(), y.vecs.begin(), y.vecs.end());
    return out;
  };
  const auto k_back = concat(b.back_i, b.back_j);
  const auto k_out = concat(b.out_i, b.out_j);
  const auto k_fore = concat(b.fore_i, b.fore_j);
  const auto k_inn = concat(b.inn_i, b.inn_j);

  const bool want_grads = demb_i || demb_j;
  Vec dq_b(dim, 0.0), dq_f(dim, 0.0);
  std::vector<Vec> g_back(k_back.size(), Vec(dim, 0.0));
  std::vector<Vec> g_out(k_out.size(), Vec(dim, 0.0));
  std::vector<Vec> g_fore(k_fore.size(), Vec(dim, 0.0));
  std::vector<Vec> g_inn(k_inn.size(), Vec(dim, 0.0));

  struct Term {
    const Vec* q;
    const std::vector<Vec>* pos;
    const std::vector<Vec>* neg;
    Vec* dq;
    std::vector<Vec>* dpos;
    std::vector<Vec>* dneg;
  };
  const Term terms[4] = {
      {&b.q_b, &k_back, &k_fore, &dq_b, &g_back, &g_fore},
      {&b.q_b, &k_out, &k_inn, &dq_b, &g_out, &g_inn},
      {&b.q_f, &k_fore, &k_back, &dq_f, &g_fore, &g_back},
      {&b.q_f, &k_inn, &k_out, &dq_f, &g_inn, &g_out},
  };
  for (const auto& t : terms) {
    if (t.pos->empty()) continue;  // nothing to pull; at d=0 the band terms vanish
    Vec dq;
    std::vector<Vec> dp, dn;
    res.loss += cl_term(*t.q, *t.pos, *t.neg, tau, want_grads ? &dq : nullptr,
                        want_grads ? &dp : nullptr, want_grads ? &dn : nullptr);
    if (!t.neg->empty()) ++res.active_terms;
    if (want_grads) {
      for (size_t k = 0; k < dim; ++k) (*t.dq)[k] += dq[k];
      for (size_t i = 0; i < dp.size(); ++i)
        for (size_t k = 0; k < dim; ++k) (*t.dpos)[i][k] += dp[i][k];
      for (size_t i = 0; i < dn.size(); ++i)
        for (size_t k = 0; k < dim; ++k) (*t.dneg)[i][k] += dn[i][k];
    }
  }
  if (res.active_terms == 0) {
    res.skipped = true;
    res.loss = 0.0;
    if (batch_out) *batch_out = std::move(b);
    return res;
  }

  if (want_grads) {
    // Key gradients also flow through the averaged queries.
    std::vector<Vec> qg_back_i(b.back_i.vecs.size(), Vec(dim, 0.0));
    std::vector<Vec> qg_out_i(b.out_i.vecs.size(), Vec(dim, 0.0));
    std::vector<Vec> qg_back_j(b.back_j.vecs.size(), Vec(dim, 0.0));
    std::vector<Vec> qg_out_j(b.out_j.vecs.size(), Vec(dim, 0.0));
    std::vector<Vec> qg_fore_i(b.fore_i.vecs.size(), Vec(dim, 0.0));
    std::vector<Vec> qg_inn_i(b.inn_i.vecs.size(), Vec(dim, 0.0));
    std::vector<Vec> qg_fore_j(b.fore_j.vecs.size(), Vec(dim, 0.0));
    std::vector<Vec> qg_inn_j(b.inn_j.vecs.size(), Vec(dim, 0.0));
    query_backward(b.q_b, norm_b, side_count(bg_parts), dq_b, bg_parts,
                   {&qg_back_i, &qg_out_i, &qg_back_j, &qg_out_j});
    query_backward(b.q_f, norm_f, side_count(fg_parts), dq_f, fg_parts,
                   {&qg_fore_i, &qg_inn_i, &qg_fore_j, &qg_inn_j});

    const int hw = emb_i.h * emb_i.w;
    auto scatter = [&](Tensor3<double>* demb, const RegionSample& s,
                       const std::vector<Vec>& key_grads, size_t key_offset,
                       const std::vector<Vec>& query_grads) {
      if (!demb) return;
      for (size_t i = 0; i < s.cells.size(); ++i)
        for (size_t k = 0; k < dim; ++k)
          demb->v[k * hw + s.cells[i]] +=
              key_grads[key_offset + i][k] + query_grads[i][k];
    };
    scatter(demb_i, b.back_i, g_back, 0, qg_back_i);
    scatter(demb_j, b.back_j, g_back, b.back_i.vecs.size(), qg_back_j);
    scatter(demb_i, b.out_i, g_out, 0, qg_out_i);
    scatter(demb_j, b.out_j, g_out, b.out_i.vecs.size(), qg_out_j);
    scatter(demb_i, b.fore_i, g_fore, 0, qg_fore_i);
    scatter(demb_j, b.fore_j, g_fore, b.fore_i.vecs.size(), qg_fore_j);
    scatter(demb_i, b.inn_i, g_inn, 0, qg_inn_i);
    scatter(demb_j, b.inn_j, g_inn, b.inn_i.vecs.size(), qg_inn_j);
  }
  if (batch_out) *batch_out = std::move(b);
  return res;
}

}  // namespace nucseg
