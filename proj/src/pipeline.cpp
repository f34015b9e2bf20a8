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

#include "nucseg/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "nucseg/crc.hpp"
#include "nucseg/geometry.hpp"
#include "nucseg/rng.hpp"

namespace nucseg {

namespace {

nlohmann::json config_json(const TrainConfig& c) {
  nlohmann::json j;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["epochs_teacher"] = c.epochs_teacher;
  j["epochs_student"] = c.epochs_student;
  j["batch_size"] = c.batch_size;
  j["w1"] = c.loss_weights.w1;
  j["w2"] = c.loss_weights.w2;
  j["w3"] = c.loss_weights.w3;
  j["tau"] = c.loss_weights.tau;
  j["alpha"] = c.alpha;
  j["d"] = c.d;
  j["t_box"] = c.t_box;
  j["t_pix"] = c.t_pix;
  j["heads"] = {{"nmh", c.heads.nmh}, {"lrd", c.heads.lrd}, {"crc", c.heads.crc}};
  j["max_rois_per_image"] = c.max_rois_per_image;
  j["roi_jitter"] = c.roi_jitter;
  j["student_from_teacher"] = c.student_from_teacher;
  j["seed"] = c.seed;
  j["model"] = detail::model_config_json(c.model);
  j["lrd_band"] = c.lrd_band;
  j["lrd_w_boundary"] = c.lrd_w_boundary;
  j["lrd_w_interior"] = c.lrd_w_interior;
  j["grad_clip"] = c.grad_clip;
  j["avg_tail_epochs"] = c.avg_tail_epochs;
  return j;
}

TrainConfig config_from(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.epochs_teacher = j.at("epochs_teacher").get<int>();
  c.epochs_student = j.at("epochs_student").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.loss_weights.w1 = j.at("w1").get<double>();
  c.loss_weights.w2 = j.at("w2").get<double>();
  c.loss_weights.w3 = j.at("w3").get<double>();
  c.loss_weights.tau = j.at("tau").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.d = j.at("d").get<float>();
  c.t_box = j.at("t_box").get<float>();
  c.t_pix = j.at("t_pix").get<float>();
  c.heads.nmh = j.at("heads").at("nmh").get<bool>();
  c.heads.lrd = j.at("heads").at("lrd").get<bool>();
  c.heads.crc = j.at("heads").at("crc").get<bool>();
  c.max_rois_per_image = j.at("max_rois_per_image").get<int>();
  c.roi_jitter = j.at("roi_jitter").get<float>();
  c.student_from_teacher = j.at("student_from_teacher").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.model = detail::model_config_from_json(j.at("model"));
  c.lrd_band = j.at("lrd_band").get<float>();
  c.lrd_w_boundary = j.at("lrd_w_boundary").get<float>();
  c.lrd_w_interior = j.at("lrd_w_interior").get<float>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.avg_tail_epochs = j.at("avg_tail_epochs").get<int>();
  return c;
}

Tensor3<float> image_tensor(const ImageRGB& img) {
  Tensor3<float> t(3, img.h, img.w);
  t.v.assign(img.v.begin(), img.v.end());
  return t;
}

Box jitter_box(const Box& b, float amount, int img_h, int img_w, Rng& rng) {
  const float w = b.width(), h = b.height();
  const auto u = [&] { return static_cast<float>(rng.uniform(-amount, amount)); };
  Box out;
  out.x1 = b.x1 + u() * w;
  out.x2 = b.x2 + u() * w;
  out.y1 = b.y1 + u() * h;
  out.y2 = b.y2 + u() * h;
  out.x1 = std::clamp(out.x1, 0.f, static_cast<float>(img_w) - 1.f);
  out.y1 = std::clamp(out.y1, 0.f, static_cast<float>(img_h) - 1.f);
  out.x2 = std::clamp(out.x2, out.x1 + 5.f, static_cast<float>(img_w));
  out.y2 = std::clamp(out.y2, out.y1 + 5.f, static_cast<float>(img_h));
  return out;
}

// Per-RoI state of one training step.
struct RoiWork {
  int image_index = 0;
  Box box;
  BinaryMask sup28, sup14;
  MaskHeadCache<float> heads;
  MaskPrediction<float> pred;
  EmbedCache<float> embed;
  Tensor3<double> d28, d14;    // loss gradients (double)
  Tensor3<double> demb;        // contrastive gradient on the embedding grid
  bool has_demb = false;
  MaskProvenance provenance = MaskProvenance::human;
};

struct StepStats {
  double det = 0, nmh = 0, lrd = 0, cl = 0, total = 0;
  bool bookkeeping_ok = true;
  long crc_rois_human = 0, crc_rois_pseudo = 0;
};

// One SGD step over a batch of records. Teacher mode trains det + NMH only.
StepStats run_step(Model<float>& model, const std::vector<const TrainRecord*>& batch,
                   const TrainConfig& cfg, bool student_mode, Rng& jitter_rng,
                   std::uint64_t crc_seed) {
  const bool use_nmh = student_mode ? cfg.heads.nmh : true;
  const bool use_lrd = student_mode && cfg.heads.lrd;
  const bool use_crc = student_mode && cfg.heads.crc;
  const auto& w = cfg.loss_weights;

  model.params.zero_grads();
  const int n_img = static_cast<int>(batch.size());
  std::vector<BackboneCache<float>> bb(n_img);
  std::vector<DetCache<float>> det_caches(n_img);
  std::vector<Tensor3<float>> dfeat(n_img);
  std::vector<Tensor3<double>> draws(n_img);
  std::vector<RoiWork> rois;

  StepStats stats;

  // Forward + per-image losses.
  for (int bi = 0; bi < n_img; ++bi) {
    const TrainRecord& rec = *batch[bi];
    const auto img = image_tensor(rec.image);
    const auto& feat = model.backbone_forward(img, bb[bi]);
    dfeat[bi] = Tensor3<float>(feat.c, feat.h, feat.w);

    const auto& raw = model.det_forward(feat, det_caches[bi]);
    const auto anchors = model.anchors_for(raw.h, raw.w);
    std::vector<Box> targets;
    for (const auto& inst : rec.instances) targets.push_back(inst.box);
    const auto raw_d = raw.template cast<double>();
    Tensor3<double> draw;
    stats.det += det_loss(raw_d, anchors, targets, &draw);
    draws[bi] = std::move(draw);

    // Training RoIs come from the supervision boxes, jittered.
    std::vector<int> order(rec.instances.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    if (static_cast<int>(order.size()) > cfg.max_rois_per_image) {
      jitter_rng.shuffle(order);
      order.resize(cfg.max_rois_per_image);
    }
    for (int ii : order) {
      const auto& inst = rec.instances[ii];
      RoiWork rw;
      rw.image_index = bi;
      rw.box = jitter_box(inst.box, cfg.roi_jitter, rec.image.h, rec.image.w, jitter_rng);
      if (rw.box.width() / cfg.model.stride * (rw.box.height() / cfg.model.stride) < 1.0)
        continue;
      rw.provenance = rec.provenance;
      rw.sup28 = rasterize_box_majority(inst.mask, rw.box, 28, 28);
      rw.sup14 = downsample_majority(rw.sup28, 14, 14);
      const auto roi = model.roi_align(feat, rw.box);
      rw.pred = model.mask_heads(roi, rw.heads, use_nmh, use_lrd);
      if (use_crc) model.embed_forward(roi, rw.embed);
      rois.push_back(std::move(rw));
    }
  }

  const int n_rois = static_cast<int>(rois.size());
  for (auto& rw : rois) {
    if (use_nmh) {
      const auto logits = rw.pred.high_res.template cast<double>();
      stats.nmh += seg_loss(logits, rw.sup28, nullptr, &rw.d28);
    }
    if (use_lrd) {
      const auto logits = rw.pred.low_res.template cast<double>();
      const auto wm = boundary_weight_map(rw.sup14, cfg.lrd_band, cfg.lrd_w_boundary,
                                          cfg.lrd_w_interior);
      stats.lrd += seg_loss(logits, rw.sup14, &wm, &rw.d14);
    }
  }

  int n_pairs = 0;
  if (use_crc && n_rois > 0) {
    for (const auto& rw : rois)
      (rw.provenance == MaskProvenance::human ? stats.crc_rois_human
                                              : stats.crc_rois_pseudo)++;
    const auto pairs = pair_rois(n_rois, crc_seed);
    n_pairs = static_cast<int>(pairs.size());
    std::vector<Tensor3<double>> emb_d(n_rois);
    for (int i = 0; i < n_rois; ++i) emb_d[i] = rois[i].embed.emb.template cast<double>();
    const bool want_grads = w.w3 != 0.0;
    for (size_t pi = 0; pi < pairs.size(); ++pi) {
      auto [i, j] = pairs[pi];
      if (want_grads) {
        if (!rois[i].has_demb) {
          rois[i].demb = Tensor3<double>(emb_d[i].c, emb_d[i].h, emb_d[i].w);
          rois[i].has_demb = true;
        }
        if (!rois[j].has_demb) {
          rois[j].demb = Tensor3<double>(emb_d[j].c, emb_d[j].h, emb_d[j].w);
          rois[j].has_demb = true;
        }
      }
      const auto res = crc_step(emb_d[i], emb_d[j], rois[i].sup14, rois[j].sup14, cfg.d,
                                cfg.alpha, w.tau, mix_seed(crc_seed, 100 + pi),
                                want_grads ? &rois[i].demb : nullptr,
                                want_grads ? &rois[j].demb : nullptr);
      stats.cl += res.loss;
    }
  }

  // Means and the composite total.
  stats.det /= std::max(1, n_img);
  stats.nmh /= std::max(1, n_rois);
  stats.lrd /= std::max(1, n_rois);
  stats.cl /= std::max(1, n_pairs);
  stats.total = student_mode
                    ? student_loss(stats.det, stats.nmh, stats.lrd, stats.cl, w)
                    : teacher_loss(stats.nmh, stats.det);
  stats.bookkeeping_ok =
      stats.total ==
      (student_mode ? student_loss(stats.det, stats.nmh, stats.lrd, stats.cl, w)
                    : teacher_loss(stats.nmh, stats.det));
  if (!std::isfinite(stats.total)) return stats;  // caller triggers the guard

  // Backward. Scales: det mean over images; head losses mean over RoIs
  // (weighted by the omegas); contrastive mean over pairs.
  const double s_nmh = (student_mode ? w.w1 : 1.0) / std::max(1, n_rois);
  const double s_lrd = w.w2 / std::max(1, n_rois);
  const double s_cl = w.w3 / std::max(1, n_pairs);

  for (auto& rw : rois) {
    Tensor3<float> droi(cfg.model.channels, cfg.model.roi_size, cfg.model.roi_size);
    Tensor3<float> d28f, d14f;
    if (use_nmh && rw.d28.size()) {
      d28f = Tensor3<float>(1, rw.d28.h, rw.d28.w);
      for (size_t i = 0; i < rw.d28.size(); ++i)
        d28f.v[i] = static_cast<float>(rw.d28.v[i] * s_nmh);
    }
    if (use_lrd && rw.d14.size()) {
      d14f = Tensor3<float>(1, rw.d14.h, rw.d14.w);
      for (size_t i = 0; i < rw.d14.size(); ++i)
        d14f.v[i] = static_cast<float>(rw.d14.v[i] * s_lrd);
    }
    model.mask_heads_backward(rw.heads, d28f.size() ? &d28f : nullptr,
                              d14f.size() ? &d14f : nullptr, droi);
    if (rw.has_demb) {
      Tensor3<float> dembf(rw.demb.c, rw.demb.h, rw.demb.w);
      for (size_t i = 0; i < rw.demb.size(); ++i)
        dembf.v[i] = static_cast<float>(rw.demb.v[i] * s_cl);
      model.embed_backward(rw.embed, dembf, droi);
    }
    model.roi_align_backward(droi, rw.box, dfeat[rw.image_index]);
  }

  for (int bi = 0; bi < n_img; ++bi) {
    Tensor3<float> draw(draws[bi].c, draws[bi].h, draws[bi].w);
    for (size_t i = 0; i < draws[bi].size(); ++i)
      draw.v[i] = static_cast<float>(draws[bi].v[i] / n_img);
    model.det_backward(bb[bi].feat, det_caches[bi], draw, dfeat[bi]);
    model.backbone_backward(bb[bi], dfeat[bi]);
  }
  return stats;
}

struct LoopResult {
  std::vector<EpochLosses> epochs;
  std::vector<std::string> events;
  bool bookkeeping_ok = true;
  long crc_rois_human = 0, crc_rois_pseudo = 0;
};

// Epoch loop with the divergence guard: one 0.1× learning-rate rescale from a
// fresh parameter state, then hard failure.
LoopResult train_loop(Model<float>& model, const std::vector<TrainRecord>& records,
                      const TrainConfig& cfg, bool student_mode, int epochs,
                      std::uint64_t stream_base) {
  LoopResult out;
  const auto initial = model.params;  // snapshot for the guard
  double lr = cfg.lr;

  for (int attempt = 0; attempt < 2; ++attempt) {
    out.epochs.clear();
    out.bookkeeping_ok = true;
    out.crc_rois_human = 0;
    out.crc_rois_pseudo = 0;
    Rng data_rng(mix_seed(stream_base, seed_tag::data_order));
    Rng jitter_rng(mix_seed(stream_base, seed_tag::jitter));
    const std::uint64_t crc_base = mix_seed(stream_base, seed_tag::crc);
    bool diverged = false;
    long step = 0;
    const int tail_start =
        cfg.avg_tail_epochs > 0 ? std::max(0, epochs - cfg.avg_tail_epochs) : epochs;
    std::vector<std::vector<double>> tail_sum;
    long tail_steps = 0;

    for (int epoch = 0; epoch < epochs && !diverged; ++epoch) {
      std::vector<int> order(records.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      data_rng.shuffle(order);
      EpochLosses ep;
      int n_steps = 0;
      for (size_t off = 0; off < order.size(); off += cfg.batch_size) {
        std::vector<const TrainRecord*> batch;
        for (size_t k = off; k < std::min(order.size(), off + cfg.batch_size); ++k)
          batch.push_back(&records[order[k]]);
        const auto stats =
            run_step(model, batch, cfg, student_mode, jitter_rng, mix_seed(crc_base, step));
        ++step;
        if (!std::isfinite(stats.total)) {
          diverged = true;
          break;
        }
        out.bookkeeping_ok = out.bookkeeping_ok && stats.bookkeeping_ok;
        out.crc_rois_human += stats.crc_rois_human;
        out.crc_rois_pseudo += stats.crc_rois_pseudo;
        if (cfg.grad_clip > 0)
          model.params.clip_grad_norm(static_cast<float>(cfg.grad_clip));
        model.params.sgd_step(static_cast<float>(lr), static_cast<float>(cfg.momentum),
                              static_cast<float>(cfg.weight_decay));
        ep.det += stats.det;
        ep.nmh += stats.nmh;
        ep.lrd += stats.lrd;
        ep.cl += stats.cl;
        ep.total += stats.total;
        ++n_steps;
        if (epoch >= tail_start) {
          const auto& items = model.params.items();
          if (tail_sum.empty()) {
            tail_sum.resize(items.size());
            for (size_t pi = 0; pi < items.size(); ++pi)
              tail_sum[pi].assign(items[pi].w.size(), 0.0);
          }
          for (size_t pi = 0; pi < items.size(); ++pi)
            for (size_t k = 0; k < items[pi].w.size(); ++k)
              tail_sum[pi][k] += static_cast<double>(items[pi].w[k]);
          ++tail_steps;
        }
      }
      if (n_steps) {
        ep.det /= n_steps;
        ep.nmh /= n_steps;
        ep.lrd /= n_steps;
        ep.cl /= n_steps;
        ep.total /= n_steps;
        out.epochs.push_back(ep);
      }
    }
    if (!diverged) {
      if (tail_steps > 0) {
        auto& items = model.params.items();
        for (size_t pi = 0; pi < items.size(); ++pi)
          for (size_t k = 0; k < items[pi].w.size(); ++k)
            items[pi].w[k] =
                static_cast<float>(tail_sum[pi][k] / static_cast<double>(tail_steps));
      }
      return out;
    }
    if (attempt == 1) break;
    // Guard: restore untouched weights, damp the learning rate, log, retry.
    model.params = initial;
    lr *= 0.1;
    out.events.push_back("divergence guard: non-finite loss, learning rate rescaled to " +
                         std::to_string(lr));
  }
  throw std::runtime_error("training diverged (non-finite loss) even after lr rescale");
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
  return config_from(nlohmann::json::parse(text));
}

std::string train_config_hash(const TrainConfig& cfg) {
  const std::string s = config_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainConfig benchmark_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs_teacher = 30;
  cfg.epochs_student = 16;
  cfg.batch_size = 4;
  return cfg;
}

TeacherResult train_teacher(const TrainConfig& cfg, const std::vector<TrainRecord>& labeled) {
  if (labeled.empty()) throw std::invalid_argument("train_teacher: empty labeled set");
  if (!cfg.heads.any()) throw std::invalid_argument("at least one head must be enabled");
  Model<float> model(cfg.model, mix_seed(cfg.seed, 50));
  auto loop = train_loop(model, labeled, cfg, /*student_mode=*/false, cfg.epochs_teacher,
                         mix_seed(cfg.seed, 60));
  return TeacherResult{std::move(model), std::move(loop.epochs), std::move(loop.events)};
}

std::vector<PseudoLabel> generate_pseudo_labels(const Model<float>& teacher,
                                                const std::vector<Sample>& unlabeled,
                                                const TrainConfig& cfg) {
  std::vector<PseudoLabel> out(unlabeled.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(unlabeled.size()); ++i) {
    try {
      const auto raw = infer_teacher(teacher, unlabeled[i].image);
      out[i] = filter_pseudo(raw, unlabeled[i].id, unlabeled[i].image.h,
                             unlabeled[i].image.w, cfg.t_box, cfg.t_pix);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

StudentResult train_student(const TrainConfig& cfg, const std::vector<TrainRecord>& records,
                            const Model<float>* teacher_init) {
  if (records.empty()) throw std::invalid_argument("train_student: empty training set");
  if (!cfg.heads.any()) throw std::invalid_argument("at least one head must be enabled");

  const auto t0 = std::chrono::steady_clock::now();
  Model<float> model(cfg.model, mix_seed(cfg.seed, 51));
  if (cfg.student_from_teacher) {
    if (!teacher_init) throw std::invalid_argument("student_from_teacher needs a teacher");
    model.params = teacher_init->params;
  }
  auto loop = train_loop(model, records, cfg, /*student_mode=*/true, cfg.epochs_student,
                         mix_seed(cfg.seed, 61));

  StudentResult res{std::move(model), RunRecord{}};
  res.record.config = cfg;
  res.record.student_epochs = std::move(loop.epochs);
  res.record.events = std::move(loop.events);
  res.record.bookkeeping_ok = loop.bookkeeping_ok;
  res.record.crc_rois_human = loop.crc_rois_human;
  res.record.crc_rois_pseudo = loop.crc_rois_pseudo;
  res.record.seed = cfg.seed;
  res.record.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

InstanceLabelMap predict_labelmap(const Model<float>& model, const ImageRGB& image,
                                  const TrainConfig& cfg) {
  const auto img = image_tensor(image);
  BackboneCache<float> bb;
  const auto& feat = model.backbone_forward(img, bb);
  const auto dets = model.detect(feat, image.h, image.w);

  struct Pred {
    Detection det;
    BinaryMask mask28;
  };
  std::vector<Pred> preds;
  for (const auto& det : dets) {
    if (det.score < cfg.t_box) continue;
    const double cells =
        det.box.width() / cfg.model.stride * (det.box.height() / cfg.model.stride);
    if (cells < 1.0) continue;
    const auto roi = model.roi_align(feat, det.box);
    MaskHeadCache<float> mh;
    const auto pred = model.mask_heads(roi, mh, cfg.heads.nmh, cfg.heads.lrd);

    // The parallel heads both segment: their probabilities are averaged
    // (the low-resolution grid upsampled 2× bilinear); a single enabled head
    // supplies the mask alone.
    Tensor3<float> prob(1, 28, 28);
    for (int y = 0; y < 28; ++y)
      for (int x = 0; x < 28; ++x) {
        float p = 0.f;
        int n = 0;
        if (cfg.heads.nmh) {
          p += 1.f / (1.f + std::exp(-pred.high_res.at(0, y, x)));
          ++n;
        }
        if (cfg.heads.lrd) {
          // Bilinear sample of the 14×14 probability grid at this cell center.
          const float gy = std::clamp((y + 0.5f) * 0.5f - 0.5f, 0.f, 13.f);
          const float gx = std::clamp((x + 0.5f) * 0.5f - 0.5f, 0.f, 13.f);
          const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
          const int y1 = std::min(y0 + 1, 13), x1 = std::min(x0 + 1, 13);
          const float fy = gy - y0, fx = gx - x0;
          auto sig = [&](int yy, int xx) {
            return 1.f / (1.f + std::exp(-pred.low_res.at(0, yy, xx)));
          };
          p += (1 - fy) * ((1 - fx) * sig(y0, x0) + fx * sig(y0, x1)) +
               fy * ((1 - fx) * sig(y1, x0) + fx * sig(y1, x1));
          ++n;
        }
        prob.at(0, y, x) = n ? p / n : 0.f;
      }
    Pred pr;
    pr.det = det;
    pr.mask28 = BinaryMask(28, 28);
    bool any = false;
    for (size_t i = 0; i < prob.size(); ++i) {
      pr.mask28.v[i] = prob.v[i] >= cfg.t_pix ? 1 : 0;
      any = any || pr.mask28.v[i];
    }
    if (any) preds.push_back(std::move(pr));
  }

  std::stable_sort(preds.begin(), preds.end(),
                   [](const Pred& a, const Pred& b) { return a.det.score < b.det.score; });
  InstanceLabelMap out(image.h, image.w);
  std::uint16_t id = 1;
  for (const auto& p : preds) paste_instance(out, p.mask28, p.det.box, id++);
  return out;
}

MetricsReport evaluate(const Model<float>& model, const std::vector<Sample>& eval_set,
                       const TrainConfig& cfg, std::vector<MetricsReport>* per_image) {
  std::vector<MetricsReport> reports(eval_set.size());
  std::vector<PqResult> pq_pool(eval_set.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(eval_set.size()); ++i) {
    try {
      const auto pred = predict_labelmap(model, eval_set[i].image, cfg);
      reports[i] = compute_metrics(pred, eval_set[i].labels);
      pq_pool[i] = PqResult{reports[i].pq, reports[i].sq, reports[i].rq,
                            reports[i].tp,  reports[i].fp, reports[i].fn};
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  if (per_image) *per_image = reports;
  return aggregate_metrics(reports, pq_pool);
}

void dump_roi_features(const Model<float>& model, const ImageRGB& image,
                       const TrainConfig& cfg, const std::string& path) {
  const auto img = image_tensor(image);
  BackboneCache<float> bb;
  const auto& feat = model.backbone_forward(img, bb);
  const auto dets = model.detect(feat, image.h, image.w);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write feature dump: " + path);
  f.write("NSEGTNS1", 8);
  std::vector<std::pair<std::string, Tensor3<float>>> tensors;
  int idx = 0;
  for (const auto& det : dets) {
    if (det.score < cfg.t_box) continue;
    const double cells =
        det.box.width() / cfg.model.stride * (det.box.height() / cfg.model.stride);
    if (cells < 1.0) continue;
    const auto roi = model.roi_align(feat, det.box);
    EmbedCache<float> ec;
    model.embed_forward(roi, ec);
    tensors.push_back({"roi" + std::to_string(idx++) + ".embedding", ec.emb});
  }
  detail::put_u32(f, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(f, 3);
    detail::put_u32(f, static_cast<std::uint32_t>(t.c));
    detail::put_u32(f, static_cast<std::uint32_t>(t.h));
    detail::put_u32(f, static_cast<std::uint32_t>(t.w));
    f.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(float)));
  }
}

namespace {

nlohmann::json epochs_json(const std::vector<EpochLosses>& eps) {
  auto arr = nlohmann::json::array();
  for (const auto& e : eps)
    arr.push_back({{"det", e.det}, {"nmh", e.nmh}, {"lrd", e.lrd}, {"cl", e.cl},
                   {"total", e.total}});
  return arr;
}

std::vector<EpochLosses> epochs_from(const nlohmann::json& arr) {
  std::vector<EpochLosses> out;
  for (const auto& e : arr) {
    EpochLosses ep;
    ep.det = e.at("det").get<double>();
    ep.nmh = e.at("nmh").get<double>();
    ep.lrd = e.at("lrd").get<double>();
    ep.cl = e.at("cl").get<double>();
    ep.total = e.at("total").get<double>();
    out.push_back(ep);
  }
  return out;
}

}  // namespace

void save_run_record(const std::string& path, const RunRecord& rec) {
  nlohmann::json j;
  j["config"] = config_json(rec.config);
  j["teacher_epochs"] = epochs_json(rec.teacher_epochs);
  j["student_epochs"] = epochs_json(rec.student_epochs);
  j["val"] = nlohmann::json::parse(metrics_to_json(rec.val));
  j["test"] = nlohmann::json::parse(metrics_to_json(rec.test));
  j["wall_clock_sec"] = rec.wall_clock_sec;
  j["seed"] = rec.seed;
  j["bookkeeping_ok"] = rec.bookkeeping_ok;
  j["crc_rois_human"] = rec.crc_rois_human;
  j["crc_rois_pseudo"] = rec.crc_rois_pseudo;
  j["events"] = rec.events;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write run record: " + path);
  f << j.dump(2) << "\n";
}

RunRecord load_run_record(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing run record: " + path);
  nlohmann::json j;
  f >> j;
  RunRecord rec;
  rec.config = config_from(j.at("config"));
  rec.teacher_epochs = epochs_from(j.at("teacher_epochs"));
  rec.student_epochs = epochs_from(j.at("student_epochs"));
  rec.val = metrics_from_json(j.at("val").dump());
  rec.test = metrics_from_json(j.at("test").dump());
  rec.wall_clock_sec = j.at("wall_clock_sec").get<double>();
  rec.seed = j.at("seed").get<std::uint64_t>();
  rec.bookkeeping_ok = j.at("bookkeeping_ok").get<bool>();
  rec.crc_rois_human = j.at("crc_rois_human").get<long>();
  rec.crc_rois_pseudo = j.at("crc_rois_pseudo").get<long>();
  rec.events = j.at("events").get<std::vector<std::string>>();
  return rec;
}

}  // namespace nucseg
