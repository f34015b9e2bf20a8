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

// Command-line entry points: dataset synthesis, the three training stages,
// evaluation, and the three ablation grids with table/plot emission.
//
// Exit codes: 0 success, 2 usage error, 3 missing upstream artifact,
// 4 would overwrite without --force, 1 any other failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "nucseg/datagen.hpp"
#include "nucseg/metrics.hpp"
#include "nucseg/pipeline.hpp"
#include "nucseg/plot.hpp"

namespace fs = std::filesystem;
using namespace nucseg;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitWouldOverwrite = 4;

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct WouldOverwrite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

HeadFlags parse_heads(const std::string& csv) {
  HeadFlags h{false, false, false};
  std::string tok;
  std::stringstream ss(csv);
  while (std::getline(ss, tok, ',')) {
    if (tok == "nmh") h.nmh = true;
    else if (tok == "lrd") h.lrd = true;
    else if (tok == "crc") h.crc = true;
    else if (!tok.empty()) throw CLI::ValidationError("--heads", "unknown head: " + tok);
  }
  if (!h.any()) throw CLI::ValidationError("--heads", "at least one head required");
  return h;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::string tok;
  std::stringstream ss(csv);
  while (std::getline(ss, tok, ',')) if (!tok.empty()) out.push_back(std::stoull(tok));
  if (out.empty()) throw CLI::ValidationError("--seeds", "need at least one seed");
  return out;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// ---- shared train plumbing --------------------------------------------------

struct TrainPaths {
  std::string run_dir, teacher_ckpt, student_ckpt, pseudo_dir, record_path;
};

TrainPaths run_paths(const std::string& out_root, const TrainConfig& cfg) {
  TrainPaths p;
  p.run_dir = out_root + "/" + train_config_hash(cfg);
  p.teacher_ckpt = p.run_dir + "/teacher.ckpt";
  p.student_ckpt = p.run_dir + "/student.ckpt";
  p.pseudo_dir = p.run_dir + "/pseudo";
  p.record_path = p.run_dir + "/run_record.json";
  return p;
}

std::vector<TrainRecord> labeled_records(const std::string& data_dir,
                                         const DatasetManifest& m) {
  std::vector<TrainRecord> out;
  for (const auto& s : load_partition(data_dir, m, "labeled"))
    out.push_back(record_from_ground_truth(s));
  return out;
}

void stage_teacher(const TrainConfig& cfg, const std::string& data_dir,
                   const DatasetManifest& m, const TrainPaths& p,
                   std::vector<EpochLosses>* teacher_epochs,
                   std::vector<std::string>* events) {
  auto records = labeled_records(data_dir, m);
  std::cout << "[teacher] training on " << records.size() << " labeled patches\n";
  auto res = train_teacher(cfg, records);
  res.model.save_checkpoint(p.teacher_ckpt);
  if (teacher_epochs) *teacher_epochs = res.epochs;
  if (events) events->insert(events->end(), res.events.begin(), res.events.end());
  std::cout << "[teacher] checkpoint: " << p.teacher_ckpt << "\n";
}

void stage_pseudo(const TrainConfig& cfg, const std::string& data_dir,
                  const DatasetManifest& m, const TrainPaths& p) {
  if (!fs::exists(p.teacher_ckpt))
    throw MissingArtifact("missing teacher checkpoint (run --stage teacher first): " +
                          p.teacher_ckpt);
  const auto teacher = Model<float>::load_checkpoint(p.teacher_ckpt);
  const auto unlabeled = load_partition(data_dir, m, "unlabeled");
  const auto labels = generate_pseudo_labels(teacher, unlabeled, cfg);
  fs::create_directories(p.pseudo_dir);
  nlohmann::json index = nlohmann::json::array();
  size_t kept = 0;
  for (const auto& pl : labels) {
    save_pseudo_label(p.pseudo_dir, pl);
    index.push_back(pl.image_id);
    kept += pl.instances.size();
  }
  std::ofstream f(p.pseudo_dir + "/index.json", std::ios::trunc);
  f << index.dump(2) << "\n";
  std::cout << "[pseudo] " << labels.size() << " images, " << kept
            << " instances kept at t_box=" << cfg.t_box << " t_pix=" << cfg.t_pix << "\n";
}

RunRecord stage_student(const TrainConfig& cfg, const std::string& data_dir,
                        const DatasetManifest& m, const TrainPaths& p,
                        const std::vector<EpochLosses>& teacher_epochs) {
  if (!fs::exists(p.teacher_ckpt))
    throw MissingArtifact("missing teacher checkpoint: " + p.teacher_ckpt);
  if (!fs::exists(p.pseudo_dir + "/index.json"))
    throw MissingArtifact("missing pseudo-label store (run --stage pseudo first): " +
                          p.pseudo_dir);
  const auto teacher = Model<float>::load_checkpoint(p.teacher_ckpt);

  const auto labeled = load_partition(data_dir, m, "labeled");
  const auto unlabeled = load_partition(data_dir, m, "unlabeled");
  std::ifstream idxf(p.pseudo_dir + "/index.json");
  nlohmann::json index;
  idxf >> index;
  std::vector<std::pair<ImageRGB, PseudoLabel>> pseudo;
  for (const auto& id : index) {
    const auto pl = load_pseudo_label(p.pseudo_dir, id.get<std::string>());
    const auto it = std::find_if(unlabeled.begin(), unlabeled.end(),
                                 [&](const Sample& s) { return s.id == pl.image_id; });
    if (it == unlabeled.end())
      throw MissingArtifact("pseudo label for unknown image: " + pl.image_id);
    pseudo.push_back({it->image, pl});
  }
  auto records = assemble_student_set(labeled, pseudo);
  std::cout << "[student] training on " << records.size() << " records ("
            << labeled.size() << " human, " << pseudo.size() << " pseudo)\n";
  auto res = train_student(cfg, records, &teacher);
  res.model.save_checkpoint(p.student_ckpt);
  res.record.teacher_epochs = teacher_epochs;

  res.record.val = evaluate(res.model, load_partition(data_dir, m, "val"), cfg);
  res.record.test = evaluate(res.model, load_partition(data_dir, m, "test"), cfg);
  save_run_record(p.record_path, res.record);
  std::cout << "[student] checkpoint: " << p.student_ckpt << "\n";
  std::cout << format_metrics_table({{"val", res.record.val}, {"test", res.record.test}});
  return res.record;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised nuclei instance segmentation pipeline"};
  app.require_subcommand(1);

  // ---- gen-data -------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "synthesize a dataset with exact masks");
  GenConfig gcfg;
  std::string gen_out = "data";
  std::string gen_ratio = "1/4";
  bool gen_force = false;
  bool gen_bench = false;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", gcfg.seed, "generation seed");
  gen->add_option("--scenes", gcfg.scenes, "number of scenes");
  gen->add_option("--height", gcfg.height, "scene height");
  gen->add_option("--width", gcfg.width, "scene width");
  gen->add_option("--nuclei", gcfg.nuclei_per_scene, "nuclei per scene");
  gen->add_option("--noise", gcfg.noise, "texture noise std-dev");
  gen->add_option("--contrast", gcfg.contrast, "foreground/background contrast gap");
  gen->add_option("--patch", gcfg.patch, "patch size");
  gen->add_option("--overlap", gcfg.overlap, "patch overlap");
  gen->add_option("--ratio", gen_ratio, "labeled ratio: 1/8, 1/4 or 1/2");
  gen->add_flag("--preset-bench", gen_bench, "use the standard benchmark configuration");
  gen->add_flag("--force", gen_force, "overwrite an existing dataset");

  // ---- train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "run the teacher/pseudo/student stages");
  std::string train_data = "data", train_out = "runs", train_stage = "all";
  std::string train_config_path, train_heads;
  TrainConfig tcfg;
  std::optional<double> opt_alpha, opt_tau, opt_w1, opt_w2, opt_w3;
  std::optional<float> opt_d, opt_tbox, opt_tpix;
  std::optional<int> opt_et, opt_es, opt_bs;
  std::optional<std::uint64_t> opt_seed;
  train->add_option("--data", train_data, "dataset directory");
  train->add_option("--out", train_out, "run output root (run dir named by config hash)");
  train->add_option("--stage", train_stage, "all|teacher|pseudo|student")
      ->check(CLI::IsMember({"all", "teacher", "pseudo", "student"}));
  train->add_option("--config", train_config_path, "config JSON file");
  train->add_option("--heads", train_heads, "comma list of nmh,lrd,crc");
  train->add_option("--seed", opt_seed, "training seed");
  train->add_option("--alpha", opt_alpha, "contrastive sampling ratio");
  train->add_option("--d", opt_d, "band half-width (14x14 cells)");
  train->add_option("--tau", opt_tau, "contrastive temperature");
  train->add_option("--t-box", opt_tbox, "box score threshold");
  train->add_option("--t-pix", opt_tpix, "pixel probability threshold");
  train->add_option("--w1", opt_w1, "NMH loss weight");
  train->add_option("--w2", opt_w2, "LRD loss weight");
  train->add_option("--w3", opt_w3, "contrastive loss weight");
  train->add_option("--epochs-teacher", opt_et, "teacher epochs");
  train->add_option("--epochs-student", opt_es, "student epochs");
  train->add_option("--batch", opt_bs, "batch size");

  // ---- eval ------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_data = "data", eval_split = "test", eval_out;
  std::string eval_config_path, eval_dump;
  ev->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  ev->add_option("--data", eval_data, "dataset directory");
  ev->add_option("--split", eval_split, "labeled|unlabeled|val|test")
      ->check(CLI::IsMember({"labeled", "unlabeled", "val", "test"}));
  ev->add_option("--out", eval_out, "metrics JSON output path");
  ev->add_option("--config", eval_config_path, "config JSON (default: next to checkpoint)");
  ev->add_option("--dump-features", eval_dump,
                 "directory for per-RoI embedding grid dumps");

  // ---- ablate ------------------------------------------------------------------
  auto* ab = app.add_subcommand("ablate", "run an ablation grid and emit table + plots");
  std::string ab_data = "data", ab_out = "ablation", ab_axis = "heads", ab_seeds = "0,1,2";
  std::string ab_config_path;
  ab->add_option("--data", ab_data, "dataset directory");
  ab->add_option("--out", ab_out, "output directory");
  ab->add_option("--axis", ab_axis, "heads|alpha|distance")
      ->check(CLI::IsMember({"heads", "alpha", "distance"}));
  ab->add_option("--seeds", ab_seeds, "comma-separated seeds");
  ab->add_option("--config", ab_config_path, "base config JSON file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (gen_bench) {
        const auto seed = gcfg.seed;
        gcfg = benchmark_dataset_config(seed);
      } else {
        gcfg.ratio = parse_ratio(gen_ratio);
      }
      if (fs::exists(gen_out + "/manifest.json") && !gen_force)
        throw WouldOverwrite("dataset exists at " + gen_out + " (use --force to overwrite)");
      const auto m = generate_dataset(gcfg, gen_out);
      std::cout << "wrote " << m.labeled.size() << " labeled / " << m.unlabeled.size()
                << " unlabeled / " << m.val.size() << " val / " << m.test.size()
                << " test patches under " << gen_out << "\n";
      return 0;
    }

    if (train->parsed()) {
      if (!train_config_path.empty()) {
        std::ifstream f(train_config_path);
        if (!f) throw MissingArtifact("missing config file: " + train_config_path);
        std::stringstream ss;
        ss << f.rdbuf();
        tcfg = train_config_from_json(ss.str());
      }
      if (!train_heads.empty()) tcfg.heads = parse_heads(train_heads);
      if (opt_seed) tcfg.seed = *opt_seed;
      if (opt_alpha) tcfg.alpha = *opt_alpha;
      if (opt_d) tcfg.d = *opt_d;
      if (opt_tau) tcfg.loss_weights.tau = *opt_tau;
      if (opt_tbox) tcfg.t_box = *opt_tbox;
      if (opt_tpix) tcfg.t_pix = *opt_tpix;
      if (opt_w1) tcfg.loss_weights.w1 = *opt_w1;
      if (opt_w2) tcfg.loss_weights.w2 = *opt_w2;
      if (opt_w3) tcfg.loss_weights.w3 = *opt_w3;
      if (opt_et) tcfg.epochs_teacher = *opt_et;
      if (opt_es) tcfg.epochs_student = *opt_es;
      if (opt_bs) tcfg.batch_size = *opt_bs;

      const auto m = load_manifest(train_data);
      const auto paths = run_paths(train_out, tcfg);
      fs::create_directories(paths.run_dir);
      {
        std::ofstream f(paths.run_dir + "/config.json", std::ios::trunc);
        f << train_config_to_json(tcfg) << "\n";
      }
      std::cout << "run directory: " << paths.run_dir << "\n";

      std::vector<EpochLosses> teacher_epochs;
      std::vector<std::string> events;
      if (train_stage == "all" || train_stage == "teacher")
        stage_teacher(tcfg, train_data, m, paths, &teacher_epochs, &events);
      if (train_stage == "all" || train_stage == "pseudo")
        stage_pseudo(tcfg, train_data, m, paths);
      if (train_stage == "all" || train_stage == "student")
        stage_student(tcfg, train_data, m, paths, teacher_epochs);
      return 0;
    }

    if (ev->parsed()) {
      if (!fs::exists(eval_ckpt)) throw MissingArtifact("missing checkpoint: " + eval_ckpt);
      TrainConfig cfg;
      std::string cfg_path = eval_config_path;
      if (cfg_path.empty()) {
        const auto beside = fs::path(eval_ckpt).parent_path() / "config.json";
        if (fs::exists(beside)) cfg_path = beside.string();
      }
      if (!cfg_path.empty()) {
        std::ifstream f(cfg_path);
        std::stringstream ss;
        ss << f.rdbuf();
        cfg = train_config_from_json(ss.str());
      }
      const auto model = Model<float>::load_checkpoint(eval_ckpt);
      const auto m = load_manifest(eval_data);
      const auto samples = load_partition(eval_data, m, eval_split);
      if (samples.empty()) throw MissingArtifact("empty split: " + eval_split);
      const auto report = evaluate(model, samples, cfg);
      std::cout << format_metrics_table({{eval_split, report}});
      if (!eval_out.empty()) {
        std::ofstream f(eval_out, std::ios::trunc);
        f << metrics_to_json(report) << "\n";
      }
      if (!eval_dump.empty()) {
        fs::create_directories(eval_dump);
        for (const auto& s : samples)
          dump_roi_features(model, s.image, cfg, eval_dump + "/" + s.id + "_features.bin");
        std::cout << "feature dumps under " << eval_dump << "\n";
      }
      return 0;
    }

    if (ab->parsed()) {
      TrainConfig base = benchmark_train_config(0);
      if (!ab_config_path.empty()) {
        std::ifstream f(ab_config_path);
        if (!f) throw MissingArtifact("missing config file: " + ab_config_path);
        std::stringstream ss;
        ss << f.rdbuf();
        base = train_config_from_json(ss.str());
      }
      const auto seeds = parse_seeds(ab_seeds);
      const auto m = load_manifest(ab_data);
      fs::create_directories(ab_out);

      struct Cell {
        std::string label;
        TrainConfig cfg;
      };
      std::vector<Cell> cells;
      if (ab_axis == "heads") {
        const std::vector<std::pair<std::string, HeadFlags>> grid = {
            {"NMH", {true, false, false}},
            {"LRD", {false, true, false}},
            {"NMH+LRD", {true, true, false}},
            {"NMH+LRD+CRC", {true, true, true}}};
        for (const auto& [label, heads] : grid) {
          Cell c{label, base};
          c.cfg.heads = heads;
          cells.push_back(c);
        }
      } else if (ab_axis == "alpha") {
        for (double a : {0.1, 0.3, 0.5, 0.7}) {
          Cell c{"alpha=" + std::to_string(a).substr(0, 3), base};
          c.cfg.alpha = a;
          cells.push_back(c);
        }
      } else {
        for (float dd : {0.f, 2.f, 4.f, 6.f}) {
          Cell c{"d=" + std::to_string(static_cast<int>(dd)), base};
          c.cfg.d = dd;
          cells.push_back(c);
        }
      }

      const auto labeled = load_partition(ab_data, m, "labeled");
      const auto unlabeled = load_partition(ab_data, m, "unlabeled");
      const auto test_set = load_partition(ab_data, m, "test");

      nlohmann::json results;
      results["axis"] = ab_axis;
      results["cells"] = nlohmann::json::array();
      std::vector<std::pair<std::string, MetricsReport>> table_rows;
      std::vector<ChartSeries> dice_series{{"DICE", {}}, {"AJI", {}}, {"PQ", {}}};
      std::vector<std::string> labels;

      // Teacher and pseudo-labels depend only on the seed; share them per seed.
      std::vector<std::pair<Model<float>, std::vector<TrainRecord>>> per_seed;
      for (auto seed : seeds) {
        TrainConfig tc = base;
        tc.seed = seed;
        auto labeled_recs = std::vector<TrainRecord>{};
        for (const auto& s : labeled) labeled_recs.push_back(record_from_ground_truth(s));
        auto tres = train_teacher(tc, labeled_recs);
        const auto pls = generate_pseudo_labels(tres.model, unlabeled, tc);
        std::vector<std::pair<ImageRGB, PseudoLabel>> pseudo;
        for (size_t i = 0; i < pls.size(); ++i)
          pseudo.push_back({unlabeled[i].image, pls[i]});
        per_seed.push_back({std::move(tres.model), assemble_student_set(labeled, pseudo)});
        std::cout << "[ablate] teacher+pseudo ready for seed " << seed << "\n";
      }

      for (const auto& cell : cells) {
        nlohmann::json jc;
        jc["label"] = cell.label;
        jc["runs"] = nlohmann::json::array();
        std::vector<double> dices, ajis, pqs;
        for (size_t si = 0; si < seeds.size(); ++si) {
          TrainConfig tc = cell.cfg;
          tc.seed = seeds[si];
          try {
            auto res = train_student(tc, per_seed[si].second, &per_seed[si].first);
            const auto rep = evaluate(res.model, test_set, tc);
            dices.push_back(rep.dice);
            ajis.push_back(rep.aji);
            pqs.push_back(rep.pq);
            jc["runs"].push_back({{"seed", seeds[si]},
                                  {"dice", rep.dice},
                                  {"aji", rep.aji},
                                  {"pq", rep.pq}});
            std::cout << "[ablate] " << cell.label << " seed " << seeds[si]
                      << " dice=" << rep.dice << "\n";
          } catch (const std::exception& e) {
            jc["runs"].push_back({{"seed", seeds[si]}, {"error", e.what()}});
            std::cout << "[ablate] " << cell.label << " seed " << seeds[si]
                      << " FAILED: " << e.what() << "\n";
          }
        }
        MetricsReport med;
        if (!dices.empty()) {
          med.dice = median(dices);
          med.aji = median(ajis);
          med.pq = median(pqs);
        }
        jc["median"] = {{"dice", med.dice}, {"aji", med.aji}, {"pq", med.pq}};
        jc["failed"] = dices.empty();
        results["cells"].push_back(jc);
        table_rows.push_back({cell.label, med});
        labels.push_back(cell.label);
        dice_series[0].values.push_back(med.dice);
        dice_series[1].values.push_back(med.aji);
        dice_series[2].values.push_back(med.pq);
      }

      {
        std::ofstream f(ab_out + "/results.json", std::ios::trunc);
        f << results.dump(2) << "\n";
      }
      const auto table = format_metrics_table(table_rows);
      {
        std::ofstream f(ab_out + "/results.txt", std::ios::trunc);
        f << table;
      }
      std::cout << table;
      const std::string plot_path = ab_out + "/" + ab_axis + ".png";
      if (ab_axis == "heads")
        render_bar_chart(plot_path, "segmentation head ablation", labels, dice_series);
      else
        render_line_chart(plot_path, ab_axis + " ablation", labels, dice_series);
      std::cout << "results under " << ab_out << "\n";
      return 0;
    }
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const WouldOverwrite& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitWouldOverwrite;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
