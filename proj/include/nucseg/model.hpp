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

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nucseg/kernels.hpp"
#include "nucseg/losses.hpp"
#include "nucseg/rng.hpp"
#include "nucseg/tensor.hpp"
#include "nucseg/types.hpp"

// Compact RoI-based instance segmentation network: a three-conv backbone at
// stride 4, a grid-anchored detection head, RoIAlign to 14×14, and three
// parallel RoI heads — the 28×28 mask head, the 14×14 low-resolution head, and
// the normalized pixel-embedding head. All forward passes are deterministic
// for a fixed parameter state; backward passes are hand-written and
// gather-style, so results do not depend on the OpenMP thread count.

namespace nucseg {

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> w, g, m;  // value, gradient, momentum

  size_t size() const { return w.size(); }
};

template <typename T>
class ParamStore {
 public:
  int add(const std::string& name, std::vector<int> shape) {
    Param<T> p;
    p.name = name;
    p.shape = std::move(shape);
    size_t n = 1;
    for (int d : p.shape) n *= static_cast<size_t>(d);
    p.w.assign(n, T(0));
    p.g.assign(n, T(0));
    p.m.assign(n, T(0));
    items_.push_back(std::move(p));
    return static_cast<int>(items_.size()) - 1;
  }
  Param<T>& at(int i) { return items_[i]; }
  const Param<T>& at(int i) const { return items_[i]; }
  std::vector<Param<T>>& items() { return items_; }
  const std::vector<Param<T>>& items() const { return items_; }

  size_t total_parameters() const {
    size_t n = 0;
    for (const auto& p : items_) n += p.size();
    return n;
  }
  void zero_grads() {
    for (auto& p : items_) std::fill(p.g.begin(), p.g.end(), T(0));
  }
  /// Scales all gradients down to the given global L2 norm when exceeded.
  void clip_grad_norm(T max_norm) {
    double sq = 0;
    for (const auto& p : items_)
      for (T g : p.g) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm <= static_cast<double>(max_norm) || norm == 0.0) return;
    const T scale = static_cast<T>(static_cast<double>(max_norm) / norm);
    for (auto& p : items_)
      for (T& g : p.g) g *= scale;
  }
  /// SGD with momentum and decoupled-from-nothing classic weight decay
  /// (decay added to the gradient, Caffe style).
  void sgd_step(T lr, T momentum, T weight_decay) {
    for (auto& p : items_)
      for (size_t i = 0; i < p.w.size(); ++i) {
        p.m[i] = momentum * p.m[i] + p.g[i] + weight_decay * p.w[i];
        p.w[i] -= lr * p.m[i];
      }
  }

 private:
  std::vector<Param<T>> items_;
};

struct ModelConfig {
  int channels = 64;                       // backbone output / RoI channels
  int embed_dim = 32;                      // embedding head dimensionality
  int stride = 4;                          // single feature level
  int roi_size = 14;
  std::vector<float> anchor_sizes = {13.f, 20.f};
  float nms_iou = 0.5f;
  int nms_topk = 100;
  int pre_nms = 2000;
};

template <typename T>
struct BackboneCache {
  Tensor3<T> x;          // input image
  Tensor3<T> a1, p1;     // conv1+relu, pool
  Tensor3<T> a2, p2;     // conv2+relu, pool
  Tensor3<T> feat;       // conv3+relu
  std::vector<std::uint8_t> am1, am2;
};

template <typename T>
struct DetCache {
  Tensor3<T> t;    // conv+relu
  Tensor3<T> raw;  // (A*5, hf, wf)
};

template <typename T>
struct MaskHeadCache {
  Tensor3<T> roi;     // input
  Tensor3<T> n1, n2;  // NMH trunk activations
  Tensor3<T> l1;      // LRD activation
};

template <typename T>
struct EmbedCache {
  Tensor3<T> roi;
  Tensor3<T> raw;        // pre-normalization projection
  Tensor3<T> emb;        // normalized output
  std::vector<T> norms;  // per pixel
};

/// Aligned per-RoI feature crop.
template <typename T>
struct RoIFeatureMap {
  Tensor3<T> values;  // (C, 14, 14)
  int roi_id = 0;
  Detection source_box;
};

template <typename T>
struct MaskPrediction {
  Tensor3<T> high_res;  // (1, 28, 28) logits
  Tensor3<T> low_res;   // (1, 14, 14) logits
};

template <typename T>
class Model {
 public:
  ModelConfig cfg;
  ParamStore<T> params;
  mutable long backbone_calls = 0;

  Model(const ModelConfig& config, std::uint64_t init_seed) : cfg(config) {
    const int C = cfg.channels, D = cfg.embed_dim;
    const int A = static_cast<int>(cfg.anchor_sizes.size());
    c1w_ = params.add("backbone.conv1.w", {16, 3, 3, 3});
    c1b_ = params.add("backbone.conv1.b", {16});
    c2w_ = params.add("backbone.conv2.w", {32, 16, 3, 3});
    c2b_ = params.add("backbone.conv2.b", {32});
    c3w_ = params.add("backbone.conv3.w", {C, 32, 3, 3});
    c3b_ = params.add("backbone.conv3.b", {C});
    dw1_ = params.add("det.conv.w", {C, C, 3, 3});
    db1_ = params.add("det.conv.b", {C});
    dw2_ = params.add("det.out.w", {A * 5, C, 1, 1});
    db2_ = params.add("det.out.b", {A * 5});
    nw1_ = params.add("nmh.conv1.w", {32, C, 3, 3});
    nb1_ = params.add("nmh.conv1.b", {32});
    nw2_ = params.add("nmh.conv2.w", {32, 32, 3, 3});
    nb2_ = params.add("nmh.conv2.b", {32});
    nwd_ = params.add("nmh.up.w", {32, 1, 2, 2});  // deconv (cin, cout, 2, 2)
    nbd_ = params.add("nmh.up.b", {1});
    lw1_ = params.add("lrd.conv1.w", {32, C, 3, 3});
    lb1_ = params.add("lrd.conv1.b", {32});
    lw2_ = params.add("lrd.conv2.w", {1, 32, 3, 3});
    lb2_ = params.add("lrd.conv2.b", {1});
    ew_ = params.add("embed.proj.w", {D, C, 1, 1});
    eb_ = params.add("embed.proj.b", {D});
    init_he(init_seed);
  }

  // ---- backbone ------------------------------------------------------------

  const Tensor3<T>& backbone_forward(const Tensor3<T>& image, BackboneCache<T>& c) const {
    if (image.c != 3 || image.h % 4 != 0 || image.w % 4 != 0)
      throw std::invalid_argument("backbone: input must be 3×H×W with H, W divisible by 4");
#pragma omp atomic update
    ++backbone_calls;
    c.x = image;
    conv(image, c1w_, c1b_, 3, 1, c.a1);
    kern::relu_forward(c.a1);
    kern::maxpool2_forward(c.a1, c.p1, c.am1);
    conv(c.p1, c2w_, c2b_, 3, 1, c.a2);
    kern::relu_forward(c.a2);
    kern::maxpool2_forward(c.a2, c.p2, c.am2);
    conv(c.p2, c3w_, c3b_, 3, 1, c.feat);
    kern::relu_forward(c.feat);
    return c.feat;
  }

  void backbone_backward(BackboneCache<T>& c, Tensor3<T>& dfeat) {
    kern::relu_backward(c.feat, dfeat);
    Tensor3<T> dp2, da2, dp1, da1;
    conv_bwd(c.p2, dfeat, c3w_, c3b_, 3, 1, &dp2);
    kern::maxpool2_backward(dp2, c.am2, da2);
    kern::relu_backward(c.a2, da2);
    conv_bwd(c.p1, da2, c2w_, c2b_, 3, 1, &dp1);
    kern::maxpool2_backward(dp1, c.am1, da1);
    kern::relu_backward(c.a1, da1);
    conv_bwd(c.x, da1, c1w_, c1b_, 3, 1, nullptr);  // no image gradient needed
  }

  // ---- detection head --------------------------------------------------------

  const Tensor3<T>& det_forward(const Tensor3<T>& feat, DetCache<T>& c) const {
    conv(feat, dw1_, db1_, 3, 1, c.t);
    kern::relu_forward(c.t);
    conv(c.t, dw2_, db2_, 1, 0, c.raw);
    return c.raw;
  }

  void det_backward(const Tensor3<T>& feat, DetCache<T>& c, Tensor3<T>& draw,
                    Tensor3<T>& dfeat_accum) {
    Tensor3<T> dt;
    conv_bwd(c.t, draw, dw2_, db2_, 1, 0, &dt);
    kern::relu_backward(c.t, dt);
    Tensor3<T> df;
    conv_bwd(feat, dt, dw1_, db1_, 3, 1, &df);
    for (size_t i = 0; i < df.size(); ++i) dfeat_accum.v[i] += df.v[i];
  }

  /// Anchor boxes for an hf×wf feature grid, indexed (a*hf + y)*wf + x.
  std::vector<Box> anchors_for(int hf, int wf) const {
    std::vector<Box> out;
    out.reserve(cfg.anchor_sizes.size() * hf * wf);
    for (float s : cfg.anchor_sizes)
      for (int y = 0; y < hf; ++y)
        for (int x = 0; x < wf; ++x) {
          const float cx = (x + 0.5f) * cfg.stride;
          const float cy = (y + 0.5f) * cfg.stride;
          out.push_back(Box{cx - s / 2, cy - s / 2, cx + s / 2, cy + s / 2});
        }
    return out;
  }

  /// Per-anchor objectness scores (pre-NMS view).
  std::vector<float> score_anchors(const Tensor3<T>& raw) const {
    const int per_cell = raw.h * raw.w;
    const int A = raw.c / 5;
    std::vector<float> s(static_cast<size_t>(A) * per_cell);
    for (int a = 0; a < A; ++a)
      for (int i = 0; i < per_cell; ++i)
        s[static_cast<size_t>(a) * per_cell + i] = static_cast<float>(
            1.0 / (1.0 + std::exp(-static_cast<double>(raw.v[(static_cast<size_t>(a) * 5) * per_cell + i]))));
    return s;
  }

  /// Full detection pass on a feature map: decode, clip, NMS, top-K.
  std::vector<Detection> detect(const Tensor3<T>& feat, int img_h, int img_w,
                                DetCache<T>* cache = nullptr) const {
    DetCache<T> local;
    DetCache<T>& c = cache ? *cache : local;
    const auto& raw = det_forward(feat, c);
    const auto anchors = anchors_for(raw.h, raw.w);
    const auto scores = score_anchors(raw);
    const int per_cell = raw.h * raw.w;

    std::vector<int> order(anchors.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    if (static_cast<int>(order.size()) > cfg.pre_nms) order.resize(cfg.pre_nms);

    std::vector<Detection> cand;
    cand.reserve(order.size());
    for (int i : order) {
      const int a = i / per_cell, cell = i % per_cell;
      double off[4];
      for (int k = 0; k < 4; ++k)
        off[k] = static_cast<double>(raw.v[(static_cast<size_t>(a) * 5 + 1 + k) * per_cell + cell]);
      const Box b = decode_box_offsets(anchors[i], off, img_h, img_w);
      if (b.width() < 1e-3f || b.height() < 1e-3f) continue;
      cand.push_back(Detection{b, scores[i]});
    }
    return nms(cand, cfg.nms_iou, cfg.nms_topk);
  }

  static std::vector<Detection> nms(const std::vector<Detection>& sorted_desc, float iou_thr,
                                    int topk) {
    std::vector<Detection> keep;
    for (const auto& d : sorted_desc) {
      bool ok = true;
      for (const auto& k : keep)
        if (box_iou(d.box, k.box) > iou_thr) {
          ok = false;
          break;
        }
      if (ok) {
        keep.push_back(d);
        if (static_cast<int>(keep.size()) >= topk) break;
      }
    }
    return keep;
  }

  // ---- RoIAlign --------------------------------------------------------------

  /// Bilinear crop of the feature level into C×14×14; one sample per bin at
  /// the bin center, feature values centered on their cells. Exact for boxes
  /// aligned to the feature grid. Throws for boxes smaller than one cell.
  Tensor3<T> roi_align(const Tensor3<T>& feat, const Box& box) const {
    check_box(box);
    const int S = cfg.roi_size;
    Tensor3<T> out(feat.c, S, S);
    const double bx = box.x1 / cfg.stride, by = box.y1 / cfg.stride;
    const double bw = box.width() / cfg.stride / S, bh = box.height() / cfg.stride / S;
    kern::parallel_for(feat.c, kern::default_exec(), [&](long ci) {
      for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) {
          const double gy = std::clamp(by + (i + 0.5) * bh - 0.5, 0.0,
                                       static_cast<double>(feat.h - 1));
          const double gx = std::clamp(bx + (j + 0.5) * bw - 0.5, 0.0,
                                       static_cast<double>(feat.w - 1));
          const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
          const int y1 = std::min(y0 + 1, feat.h - 1), x1 = std::min(x0 + 1, feat.w - 1);
          const double fy = gy - y0, fx = gx - x0;
          out.at(static_cast<int>(ci), i, j) = static_cast<T>(
              (1 - fy) * ((1 - fx) * feat.at(ci, y0, x0) + fx * feat.at(ci, y0, x1)) +
              fy * ((1 - fx) * feat.at(ci, y1, x0) + fx * feat.at(ci, y1, x1)));
        }
    });
    return out;
  }

  void roi_align_backward(const Tensor3<T>& droi, const Box& box, Tensor3<T>& dfeat) const {
    check_box(box);
    const int S = cfg.roi_size;
    const double bx = box.x1 / cfg.stride, by = box.y1 / cfg.stride;
    const double bw = box.width() / cfg.stride / S, bh = box.height() / cfg.stride / S;
    for (int ci = 0; ci < droi.c; ++ci)
      for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) {
          const double gy = std::clamp(by + (i + 0.5) * bh - 0.5, 0.0,
                                       static_cast<double>(dfeat.h - 1));
          const double gx = std::clamp(bx + (j + 0.5) * bw - 0.5, 0.0,
                                       static_cast<double>(dfeat.w - 1));
          const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
          const int y1 = std::min(y0 + 1, dfeat.h - 1), x1 = std::min(x0 + 1, dfeat.w - 1);
          const double fy = gy - y0, fx = gx - x0;
          const T g = droi.at(ci, i, j);
          dfeat.at(ci, y0, x0) += static_cast<T>((1 - fy) * (1 - fx)) * g;
          dfeat.at(ci, y0, x1) += static_cast<T>((1 - fy) * fx) * g;
          dfeat.at(ci, y1, x0) += static_cast<T>(fy * (1 - fx)) * g;
          dfeat.at(ci, y1, x1) += static_cast<T>(fy * fx) * g;
        }
  }

  // ---- mask heads -------------------------------------------------------------

  MaskPrediction<T> mask_heads(const Tensor3<T>& roi, MaskHeadCache<T>& c,
                               bool want_nmh = true, bool want_lrd = true) const {
    c.roi = roi;
    MaskPrediction<T> out;
    if (want_nmh) {
      conv(roi, nw1_, nb1_, 3, 1, c.n1);
      kern::relu_forward(c.n1);
      conv(c.n1, nw2_, nb2_, 3, 1, c.n2);
      kern::relu_forward(c.n2);
      kern::deconv2x_forward(c.n2, params.at(nwd_).w.data(), params.at(nbd_).w.data(), 1,
                             out.high_res);
    }
    if (want_lrd) {
      conv(roi, lw1_, lb1_, 3, 1, c.l1);
      kern::relu_forward(c.l1);
      conv(c.l1, lw2_, lb2_, 3, 1, out.low_res);
    }
    return out;
  }

  /// d28/d14 may be null when the corresponding branch was not run.
  void mask_heads_backward(MaskHeadCache<T>& c, const Tensor3<T>* d28, const Tensor3<T>* d14,
                           Tensor3<T>& droi_accum) {
    if (d28) {
      Tensor3<T> dn2;
      kern::deconv2x_backward_params(c.n2, *d28, params.at(nwd_).g.data(),
                                     params.at(nbd_).g.data());
      kern::deconv2x_backward_input(*d28, params.at(nwd_).w.data(), 32, dn2);
      kern::relu_backward(c.n2, dn2);
      Tensor3<T> dn1;
      conv_bwd(c.n1, dn2, nw2_, nb2_, 3, 1, &dn1);
      kern::relu_backward(c.n1, dn1);
      Tensor3<T> dr;
      conv_bwd(c.roi, dn1, nw1_, nb1_, 3, 1, &dr);
      for (size_t i = 0; i < dr.size(); ++i) droi_accum.v[i] += dr.v[i];
    }
    if (d14) {
      Tensor3<T> dl1;
      conv_bwd(c.l1, *d14, lw2_, lb2_, 3, 1, &dl1);
      kern::relu_backward(c.l1, dl1);
      Tensor3<T> dr;
      conv_bwd(c.roi, dl1, lw1_, lb1_, 3, 1, &dr);
      for (size_t i = 0; i < dr.size(); ++i) droi_accum.v[i] += dr.v[i];
    }
  }

  // ---- embedding head -----------------------------------------------------------

  const Tensor3<T>& embed_forward(const Tensor3<T>& roi, EmbedCache<T>& c) const {
    c.roi = roi;
    conv(roi, ew_, eb_, 1, 0, c.raw);
    const int D = c.raw.c, S = cfg.roi_size;
    c.emb = Tensor3<T>(D, S, S);
    c.norms.assign(static_cast<size_t>(S) * S, T(0));
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        double n2 = 0;
        for (int d = 0; d < D; ++d) n2 += static_cast<double>(c.raw.at(d, i, j)) * c.raw.at(d, i, j);
        const T n = static_cast<T>(std::sqrt(std::max(n2, 1e-24)));
        c.norms[static_cast<size_t>(i) * S + j] = n;
        for (int d = 0; d < D; ++d) c.emb.at(d, i, j) = c.raw.at(d, i, j) / n;
      }
    return c.emb;
  }

  void embed_backward(EmbedCache<T>& c, const Tensor3<T>& demb, Tensor3<T>& droi_accum) {
    const int D = c.raw.c, S = cfg.roi_size;
    Tensor3<T> draw(D, S, S);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        const T n = c.norms[static_cast<size_t>(i) * S + j];
        T dotv = T(0);
        for (int d = 0; d < D; ++d) dotv += c.emb.at(d, i, j) * demb.at(d, i, j);
        for (int d = 0; d < D; ++d)
          draw.at(d, i, j) = (demb.at(d, i, j) - c.emb.at(d, i, j) * dotv) / n;
      }
    Tensor3<T> dr;
    conv_bwd(c.roi, draw, ew_, eb_, 1, 0, &dr);
    for (size_t i = 0; i < dr.size(); ++i) droi_accum.v[i] += dr.v[i];
  }

  // ---- checkpoints ---------------------------------------------------------------

  void save_checkpoint(const std::string& path) const;
  static Model<T> load_checkpoint(const std::string& path);

  /// Zeroes one named parameter tensor (test hook for contract checks).
  void zero_param(const std::string& name) {
    for (auto& p : params.items())
      if (p.name == name) {
        std::fill(p.w.begin(), p.w.end(), T(0));
        return;
      }
    throw std::invalid_argument("unknown parameter: " + name);
  }

 private:
  int c1w_, c1b_, c2w_, c2b_, c3w_, c3b_;
  int dw1_, db1_, dw2_, db2_;
  int nw1_, nb1_, nw2_, nb2_, nwd_, nbd_;
  int lw1_, lb1_, lw2_, lb2_;
  int ew_, eb_;

  void check_box(const Box& box) const {
    const double cells = box.width() / cfg.stride * (box.height() / cfg.stride);
    if (!(cells >= 1.0))
      throw std::invalid_argument("roi_align: degenerate box (smaller than one feature cell)");
  }

  void conv(const Tensor3<T>& x, int wid, int bid, int k, int pad, Tensor3<T>& y) const {
    kern::conv2d_forward(x, params.at(wid).w.data(), params.at(bid).w.data(),
                         params.at(wid).shape[0], k, pad, y);
  }
  void conv_bwd(const Tensor3<T>& x, const Tensor3<T>& dy, int wid, int bid, int k, int pad,
                Tensor3<T>* dx) {
    kern::conv2d_backward_params(x, dy, k, pad, params.at(wid).g.data(),
                                 params.at(bid).g.data());
    if (dx) kern::conv2d_backward_input(dy, params.at(wid).w.data(), x.c, k, pad, *dx);
  }

  void init_he(std::uint64_t seed) {
    Rng rng(mix_seed(seed, seed_tag::init));
    for (auto& p : params.items()) {
      if (p.shape.size() == 1) continue;  // biases stay zero
      size_t fan_in = 1;
      for (size_t i = 1; i < p.shape.size(); ++i) fan_in *= static_cast<size_t>(p.shape[i]);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& w : p.w) w = static_cast<T>(rng.uniform(-bound, bound));
    }
  }
};

// ---- checkpoint archive -------------------------------------------------------
// Layout (little endian):
//   8 bytes  magic "NSEGCKP1"
//   u32      config json length, followed by the json bytes
//   u32      tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u32 dims[rank],
//               float32 payload (row-major)

namespace detail {

inline void put_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
inline std::uint32_t get_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

inline nlohmann::json model_config_json(const ModelConfig& c) {
  nlohmann::json j;
  j["channels"] = c.channels;
  j["embed_dim"] = c.embed_dim;
  j["stride"] = c.stride;
  j["roi_size"] = c.roi_size;
  j["anchor_sizes"] = c.anchor_sizes;
  j["nms_iou"] = c.nms_iou;
  j["nms_topk"] = c.nms_topk;
  j["pre_nms"] = c.pre_nms;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.channels = j.at("channels").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.stride = j.at("stride").get<int>();
  c.roi_size = j.at("roi_size").get<int>();
  c.anchor_sizes = j.at("anchor_sizes").get<std::vector<float>>();
  c.nms_iou = j.at("nms_iou").get<float>();
  c.nms_topk = j.at("nms_topk").get<int>();
  c.pre_nms = j.at("pre_nms").get<int>();
  return c;
}

}  // namespace detail

template <typename T>
void Model<T>::save_checkpoint(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write("NSEGCKP1", 8);
  const std::string cfg_json = detail::model_config_json(cfg).dump();
  detail::put_u32(f, static_cast<std::uint32_t>(cfg_json.size()));
  f.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
  detail::put_u32(f, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& p : params.items()) {
    detail::put_u32(f, static_cast<std::uint32_t>(p.name.size()));
    f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put_u32(f, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) detail::put_u32(f, static_cast<std::uint32_t>(d));
    std::vector<float> payload(p.w.begin(), p.w.end());
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

template <typename T>
Model<T> Model<T>::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "NSEGCKP1", 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const auto cfg_len = detail::get_u32(f);
  std::string cfg_json(cfg_len, '\0');
  f.read(cfg_json.data(), cfg_len);
  Model<T> model(detail::model_config_from_json(nlohmann::json::parse(cfg_json)), 0);

  const auto n = detail::get_u32(f);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = detail::get_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const auto rank = detail::get_u32(f);
    std::vector<int> shape(rank);
    size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<int>(detail::get_u32(f));
      count *= static_cast<size_t>(d);
    }
    std::vector<float> payload(count);
    f.read(reinterpret_cast<char*>(payload.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
    bool found = false;
    for (auto& p : model.params.items())
      if (p.name == name) {
        if (p.shape != shape) throw std::runtime_error("checkpoint shape mismatch: " + name);
        for (size_t k = 0; k < count; ++k) p.w[k] = static_cast<T>(payload[k]);
        found = true;
        break;
      }
    if (!found) throw std::runtime_error("checkpoint has unknown tensor: " + name);
  }
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return model;
}

}  // namespace nucseg
