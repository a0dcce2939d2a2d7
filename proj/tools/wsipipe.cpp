// wsipipe: command-line surface for the slide pipeline. Subcommands cover
// synthetic cohort generation through reporting; every artifact directory
// carries a meta.json stamping the config hash and seed that produced it.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "wsipipe/aggregate.hpp"
#include "wsipipe/cohort.hpp"
#include "wsipipe/csv.hpp"
#include "wsipipe/interpret.hpp"
#include "wsipipe/metrics.hpp"
#include "wsipipe/pipeline.hpp"
#include "wsipipe/png_io.hpp"
#include "wsipipe/tiler.hpp"
#include "wsipipe/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace wsipipe;

namespace {

void log_line(const std::string& msg) { std::cerr << "[wsipipe] " << msg << "\n"; }

struct SlideInfo {
  std::string patient_id;
  std::string slide_id;
  fs::path path;
  int diagnosis = 0;
  int isup = 0;
  double age = 0.0;
  double psa = 0.0;
};

std::vector<SlideInfo> load_slide_infos(const fs::path& cohort_csv) {
  const CsvTable t = read_csv(cohort_csv);
  std::vector<SlideInfo> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    SlideInfo s;
    s.patient_id = t.cell(r, "patient_id");
    s.slide_id = t.cell(r, "slide_id");
    s.path = cohort_csv.parent_path() / t.cell(r, "path");
    s.diagnosis = std::stoi(t.cell(r, "diagnosis"));
    s.isup = std::stoi(t.cell(r, "isup"));
    s.age = std::stod(t.cell(r, "age_years"));
    s.psa = std::stod(t.cell(r, "psa_ng_ml"));
    out.push_back(std::move(s));
  }
  return out;
}

TileDataset build_dataset(const std::vector<SlideInfo>& slides,
                          const fs::path& tiles_dir,
                          const std::set<std::string>& patient_ids) {
  std::map<std::string, const SlideInfo*> by_slide;
  for (const SlideInfo& s : slides) by_slide[s.slide_id] = &s;
  TileDataset data;
  for (const TileRecord& r : read_tile_index(tiles_dir / "tiles.csv")) {
    if (!r.qc_pass) continue;
    auto it = by_slide.find(r.slide_id);
    if (it == by_slide.end())
      throw InvalidInput("tiles.csv references unknown slide " + r.slide_id);
    const SlideInfo& s = *it->second;
    if (!patient_ids.empty() && !patient_ids.contains(s.patient_id)) continue;
    TileEntry e;
    e.patient_id = s.patient_id;
    e.slide_id = r.slide_id;
    e.png_path = tiles_dir / tile_png_name(r);
    e.x = r.x;
    e.y = r.y;
    e.label = s.diagnosis;
    e.isup = s.isup;
    e.covariates = encode_covariates(s.age, s.psa).v;
    data.entries.push_back(std::move(e));
  }
  return data;
}

std::set<std::string> patients_in_split(const SplitAssignment& a, Split which) {
  std::set<std::string> out;
  for (const auto& [pid, s] : a.split)
    if (s == which) out.insert(pid);
  return out;
}

std::vector<fs::path> list_checkpoints(const fs::path& models_dir) {
  std::vector<fs::path> out;
  for (int m = 0;; ++m) {
    char name[32];
    std::snprintf(name, sizeof(name), "member_%02d.bin", m);
    const fs::path p = models_dir / name;
    if (!fs::exists(p)) break;
    out.push_back(p);
  }
  if (out.empty())
    throw InvalidInput("no checkpoints (member_00.bin ...) in " +
                       models_dir.string());
  return out;
}

std::vector<double> score_tiles(const Network& net, const NetState& state,
                                const TileDataset& data) {
  std::vector<double> scores;
  scores.reserve(data.entries.size());
  const std::size_t chunk = 32;
  for (std::size_t begin = 0; begin < data.entries.size(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, data.entries.size());
    std::vector<Sample> batch;
    for (std::size_t i = begin; i < end; ++i)
      batch.push_back(load_sample(data.entries[i]));
    for (double p : net.forward(state, batch, RunMode::kInfer))
      scores.push_back(p);
  }
  return scores;
}

struct LevelPredictions {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<int> isup;
};

LevelPredictions read_predictions(const fs::path& csv) {
  if (!fs::exists(csv))
    throw InvalidInput("missing predictions file " + csv.string());
  const CsvTable t = read_csv(csv);
  LevelPredictions p;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    p.scores.push_back(std::stod(t.cell(r, "score")));
    p.labels.push_back(std::stoi(t.cell(r, "label")));
    p.isup.push_back(std::stoi(t.cell(r, "isup")));
  }
  return p;
}

nlohmann::json ci_to_json(const CiEstimate& ci) {
  return {{"point", ci.point}, {"lower", ci.lower},   {"upper", ci.upper},
          {"n_boot", ci.n_boot}, {"seed", ci.seed}};
}

int run_synth(const PipelineConfig& cfg, const fs::path& out) {
  SyntheticCohortSpec spec = cfg.synth;
  spec.seed = cfg.seed;
  const SyntheticCohort cohort = generate_synthetic_cohort(spec, out);
  write_run_meta(out, cfg, "synth");
  log_line("synth: " + std::to_string(cohort.patients.size()) + " patients, " +
           std::to_string(cohort.slide_ids.size()) + " slides -> " +
           out.string());
  return 0;
}

int run_mask(const PipelineConfig& cfg, const fs::path& cohort_dir,
             const fs::path& out) {
  const auto slides = load_slide_infos(cohort_dir / "cohort.csv");
  fs::create_directories(out);
  std::vector<std::vector<std::string>> rows;
  for (const SlideInfo& s : slides) {
    const SlidePyramid p = load_pyramid(s.path);
    const TissueMask m = compute_tissue_mask(p, cfg.segmentation);
    write_png(out / (s.slide_id + ".png"), m.grid);
    rows.push_back({s.slide_id, fmt_double(m.scale),
                    std::to_string(m.grid.width),
                    std::to_string(m.grid.height)});
  }
  write_csv(out / "masks.csv", {"slide_id", "scale", "width", "height"}, rows);
  write_run_meta(out, cfg, "mask");
  log_line("mask: " + std::to_string(slides.size()) + " masks -> " +
           out.string());
  return 0;
}

int run_tile(const PipelineConfig& cfg, const fs::path& cohort_dir,
             const fs::path& masks_dir, const fs::path& out,
             bool keep_failed_qc) {
  const auto slides = load_slide_infos(cohort_dir / "cohort.csv");
  const CsvTable masks = read_csv(masks_dir / "masks.csv");
  std::map<std::string, double> mask_scale;
  for (std::size_t r = 0; r < masks.rows.size(); ++r)
    mask_scale[masks.cell(r, "slide_id")] = std::stod(masks.cell(r, "scale"));
  fs::create_directories(out);
  std::size_t planned = 0, passed = 0;
  for (const SlideInfo& s : slides) {
    const SlidePyramid p = load_pyramid(s.path);
    auto it = mask_scale.find(s.slide_id);
    if (it == mask_scale.end())
      throw InvalidInput("masks.csv has no entry for slide " + s.slide_id);
    TissueMask m;
    m.grid = read_png_mask(masks_dir / (s.slide_id + ".png"));
    m.scale = it->second;
    m.slide_id = s.slide_id;
    const std::vector<TileRecord> records = plan_tiles(p, m, cfg.tiling);
    write_tile_store(p, records, out, keep_failed_qc);
    planned += records.size();
    for (const TileRecord& r : records) passed += r.qc_pass ? 1 : 0;
  }
  write_run_meta(out, cfg, "tile");
  log_line("tile: " + std::to_string(passed) + "/" + std::to_string(planned) +
           " tiles passed QC -> " + out.string());
  return 0;
}

int run_split(const PipelineConfig& cfg, const fs::path& cohort_dir,
              const fs::path& out) {
  const auto patients = load_patients(cohort_dir / "cohort.csv");
  SplitFractions fractions;
  fractions.train = cfg.split.train;
  fractions.validation = cfg.split.validation;
  fractions.test = cfg.split.test;
  const SplitAssignment a = stratified_split(patients, fractions, cfg.seed);
  fs::create_directories(out);
  write_splits_csv(out / "splits.csv", a);
  const BalanceReport report = balance_report(a, patients);
  std::ofstream md(out / "balance.md");
  md << balance_report_markdown(report);
  write_run_meta(out, cfg, "split");
  log_line("split: " + std::to_string(patients.size()) + " patients -> " +
           out.string());
  return 0;
}

int run_train(const PipelineConfig& cfg, const fs::path& cohort_dir,
              const fs::path& tiles_dir, const fs::path& splits_dir,
              const fs::path& out) {
  const auto slides = load_slide_infos(cohort_dir / "cohort.csv");
  const SplitAssignment a = read_splits_csv(splits_dir / "splits.csv");
  const TileDataset train_ds =
      build_dataset(slides, tiles_dir, patients_in_split(a, Split::kTrain));
  const TileDataset tune_ds = build_dataset(
      slides, tiles_dir, patients_in_split(a, Split::kValidation));
  log_line("train: " + std::to_string(train_ds.entries.size()) +
           " training tiles, " + std::to_string(tune_ds.entries.size()) +
           " tuning tiles, ensemble of " +
           std::to_string(cfg.train.ensemble_size));
  fs::create_directories(out);
  const std::vector<TrainResult> members =
      train_ensemble(train_ds, tune_ds, cfg.train, cfg.net, cfg.seed);
  for (std::size_t m = 0; m < members.size(); ++m) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "member_%02d", static_cast<int>(m));
    save_checkpoint(members[m].best_state, out / (std::string(stem) + ".bin"));
    write_train_log_csv(out / (std::string(stem) + "_log.csv"), members[m].log);
    log_line("train: member " + std::to_string(m) + " stopped (" +
             members[m].log.stop_reason + ") best tune loss " +
             fmt_double(members[m].log.best_tune_loss));
  }
  write_run_meta(out, cfg, "train");
  return 0;
}

int run_predict(const PipelineConfig& cfg, const fs::path& cohort_dir,
                const fs::path& tiles_dir, const fs::path& models_dir,
                const fs::path& splits_dir, const std::string& which,
                const fs::path& out, bool strict) {
  const auto slides = load_slide_infos(cohort_dir / "cohort.csv");
  std::set<std::string> selected;
  if (which != "all") {
    const SplitAssignment a = read_splits_csv(splits_dir / "splits.csv");
    selected = patients_in_split(a, split_from_name(which));
  }
  const TileDataset data = build_dataset(slides, tiles_dir, selected);

  const Network net(cfg.net);
  std::vector<std::vector<double>> per_model;
  for (const fs::path& ckpt : list_checkpoints(models_dir)) {
    const NetState state = load_checkpoint(ckpt);
    per_model.push_back(score_tiles(net, state, data));
  }
  const std::vector<double> tile_scores = ensemble_mean(per_model);

  fs::create_directories(out);
  std::vector<TileScoreRow> tile_rows;
  std::vector<std::vector<std::string>> tile_csv;
  for (std::size_t i = 0; i < data.entries.size(); ++i) {
    const TileEntry& e = data.entries[i];
    tile_rows.push_back({e.patient_id, e.slide_id, e.x, e.y, tile_scores[i],
                         e.label, e.isup});
    tile_csv.push_back({e.patient_id, e.slide_id, std::to_string(e.x),
                        std::to_string(e.y), fmt_double(tile_scores[i], 12),
                        std::to_string(e.label), std::to_string(e.isup)});
  }
  write_csv(out / "predictions_tile.csv",
            {"patient_id", "slide_id", "x", "y", "score", "label", "isup"},
            tile_csv);

  // Every slide of every selected patient gets a score; slides with no
  // QC-passing tiles fall back to the neutral 0.5 unless --strict.
  std::map<std::string, std::vector<double>> by_slide;
  for (const TileScoreRow& t : tile_rows) by_slide[t.slide_id].push_back(t.score);
  std::vector<SlideScoreRow> slide_rows;
  for (const SlideInfo& s : slides) {
    if (!selected.empty() && !selected.contains(s.patient_id)) continue;
    if (which != "all" && selected.empty()) continue;
    SlideScoreRow row{s.patient_id, s.slide_id, 0.0, s.diagnosis, s.isup};
    auto it = by_slide.find(s.slide_id);
    if (it == by_slide.end()) {
      if (strict)
        throw EmptySlide("slide " + s.slide_id + " has no QC-passing tiles");
      log_line("warning: slide " + s.slide_id +
               " has no QC-passing tiles; assigning neutral score 0.5");
      row.score = 0.5;
    } else {
      row.score = slide_score(it->second, cfg.aggregation.slide_percentile);
    }
    slide_rows.push_back(row);
  }
  std::vector<std::vector<std::string>> slide_csv;
  for (const SlideScoreRow& s : slide_rows)
    slide_csv.push_back({s.patient_id, s.slide_id, fmt_double(s.score, 12),
                         std::to_string(s.label), std::to_string(s.isup)});
  write_csv(out / "predictions_slide.csv",
            {"patient_id", "slide_id", "score", "label", "isup"}, slide_csv);

  const std::vector<PatientScoreRow> patient_rows =
      aggregate_patients(slide_rows);
  std::vector<std::vector<std::string>> patient_csv;
  for (const PatientScoreRow& p : patient_rows)
    patient_csv.push_back({p.patient_id, fmt_double(p.score, 12),
                           std::to_string(p.label), std::to_string(p.isup)});
  write_csv(out / "predictions_patient.csv",
            {"patient_id", "score", "label", "isup"}, patient_csv);

  write_run_meta(out, cfg, "predict");
  log_line("predict: " + std::to_string(tile_rows.size()) + " tiles, " +
           std::to_string(slide_rows.size()) + " slides, " +
           std::to_string(patient_rows.size()) + " patients -> " +
           out.string());
  return 0;
}

int run_evaluate(const PipelineConfig& cfg, const fs::path& predictions_dir,
                 const fs::path& cohort_dir, const fs::path& out) {
  nlohmann::json report;
  report["config_hash"] = pipeline_config_hash(cfg);
  report["seed"] = cfg.seed;

  const char* levels[3] = {"tile", "slide", "patient"};
  LevelPredictions patient_preds;
  for (int li = 0; li < 3; ++li) {
    const LevelPredictions p = read_predictions(
        predictions_dir / ("predictions_" + std::string(levels[li]) + ".csv"));
    const CiEstimate ci =
        bootstrap_auc_ci(p.scores, p.labels, cfg.metrics.n_boot,
                         derive_seed(cfg.seed, "bootstrap", li));
    report["auc"][levels[li]] = ci_to_json(ci);
    if (li == 2) patient_preds = p;
  }

  for (double target : cfg.metrics.specificity_targets) {
    const OperatingPoint op = sensitivity_at_specificity(
        patient_preds.scores, patient_preds.labels, target);
    report["sensitivity_at_specificity"].push_back(
        {{"target", target},
         {"sensitivity", op.sensitivity},
         {"threshold", op.threshold},
         {"specificity", op.specificity}});
  }

  const StratumTable table = sensitivity_by_stratum(
      patient_preds.scores, patient_preds.labels, patient_preds.isup,
      cfg.metrics.specificity_targets);
  nlohmann::json jt;
  jt["targets"] = table.targets;
  jt["strata"] = table.strata;
  jt["thresholds"] = table.thresholds;
  for (const auto& row : table.cells) {
    nlohmann::json jrow = nlohmann::json::array();
    for (const auto& cell : row)
      jrow.push_back(cell ? nlohmann::json(*cell) : nlohmann::json(nullptr));
    jt["cells"].push_back(jrow);
  }
  report["sensitivity_by_isup"] = jt;

  // Age+PSA logistic baseline on the same patients.
  {
    const auto slides = load_slide_infos(cohort_dir / "cohort.csv");
    std::map<std::string, const SlideInfo*> by_patient;
    for (const SlideInfo& s : slides) by_patient[s.patient_id] = &s;
    const CsvTable t = read_csv(predictions_dir / "predictions_patient.csv");
    std::vector<std::vector<double>> covs;
    std::vector<int> labels;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      auto it = by_patient.find(t.cell(r, "patient_id"));
      if (it == by_patient.end())
        throw InvalidInput("predictions reference unknown patient " +
                           t.cell(r, "patient_id"));
      const auto cv = encode_covariates(it->second->age, it->second->psa);
      covs.emplace_back(cv.v.begin(), cv.v.end());
      labels.push_back(std::stoi(t.cell(r, "label")));
    }
    const LogisticModel model = fit_logistic_baseline(covs, labels);
    std::vector<double> probs;
    for (const auto& c : covs) probs.push_back(model.predict(c));
    const CiEstimate ci =
        bootstrap_auc_ci(probs, labels, cfg.metrics.n_boot,
                         derive_seed(cfg.seed, "bootstrap", 3));
    report["baseline"] = {{"auc", ci_to_json(ci)},
                          {"converged", model.converged},
                          {"iterations", model.iterations}};
    if (!model.converged)
      log_line("warning: logistic baseline hit the iteration cap "
               "(possible perfect separation); predictions remain valid");
  }

  fs::create_directories(out);
  std::ofstream os(out / "metrics_report.json");
  os << report.dump(2) << "\n";
  write_run_meta(out, cfg, "evaluate");
  log_line("evaluate: patient AUC " +
           fmt_double(report["auc"]["patient"]["point"].get<double>()) +
           " -> " + out.string());
  return 0;
}

int run_report(const PipelineConfig& cfg, const fs::path& metrics_dir,
               const fs::path& out, bool force) {
  const RunMeta meta = read_run_meta(metrics_dir);
  if (meta.config_hash != pipeline_config_hash(cfg) && !force)
    throw InvalidInput(
        "report: metrics were produced under config hash " + meta.config_hash +
        " but the current config hashes to " + pipeline_config_hash(cfg) +
        " (pass --force to mix)");
  std::ifstream in(metrics_dir / "metrics_report.json");
  if (!in)
    throw InvalidInput("missing " +
                       (metrics_dir / "metrics_report.json").string());
  nlohmann::json report;
  in >> report;

  fs::create_directories(out);
  std::ofstream md(out / "report.md");
  md << "# Evaluation report\n\n";
  md << "Config hash `" << report["config_hash"].get<std::string>()
     << "`, seed " << report["seed"].get<std::uint64_t>() << ".\n\n";
  md << "## ROC summary\n\n";
  md << "| Level | AUC | 95% CI |\n|---|---|---|\n";
  for (const char* level : {"tile", "slide", "patient"}) {
    const auto& ci = report["auc"][level];
    md << "| " << level << " | " << fmt_double(ci["point"].get<double>(), 3)
       << " | " << fmt_double(ci["lower"].get<double>(), 3) << "-"
       << fmt_double(ci["upper"].get<double>(), 3) << " |\n";
  }
  const auto& baseline = report["baseline"]["auc"];
  md << "| age+PSA baseline | "
     << fmt_double(baseline["point"].get<double>(), 3) << " | "
     << fmt_double(baseline["lower"].get<double>(), 3) << "-"
     << fmt_double(baseline["upper"].get<double>(), 3) << " |\n";

  md << "\n## Sensitivity by ISUP according to different specificity "
        "levels\n\n";
  md << "| Specificity | ISUP 1 | ISUP 2 | ISUP 3 | ISUP 4 | ISUP 5 |\n";
  md << "|---|---|---|---|---|---|\n";
  const auto& jt = report["sensitivity_by_isup"];
  for (std::size_t r = 0; r < jt["targets"].size(); ++r) {
    md << "| " << fmt_double(jt["targets"][r].get<double>(), 2) << " |";
    for (std::size_t c = 0; c < jt["strata"].size(); ++c) {
      const auto& cell = jt["cells"][r][c];
      if (cell.is_null())
        md << " N/A |";
      else
        md << " " << fmt_double(cell.get<double>(), 3) << " |";
    }
    md << "\n";
  }
  md.close();
  write_run_meta(out, cfg, "report");
  log_line("report -> " + (out / "report.md").string());
  return 0;
}

int run_explain(const PipelineConfig& cfg, const fs::path& cohort_dir,
                const fs::path& tiles_dir, const fs::path& models_dir,
                const fs::path& out, int limit) {
  const auto slides = load_slide_infos(cohort_dir / "cohort.csv");
  const TileDataset data = build_dataset(slides, tiles_dir, {});
  const Network net(cfg.net);
  const NetState state = load_checkpoint(list_checkpoints(models_dir)[0]);
  fs::create_directories(out);
  int done = 0;
  for (const TileEntry& e : data.entries) {
    if (limit > 0 && done >= limit) break;
    const ImageRGB tile = read_png_rgb(e.png_path);
    const CamHeatmap cam =
        grad_cam(net, state, sample_from_tile(tile, e.covariates));
    const std::string stem =
        e.slide_id + "_" + std::to_string(e.x) + "_" + std::to_string(e.y);
    write_png(out / (stem + "_cam.png"), heatmap_image(cam));
    write_png(out / (stem + "_overlay.png"), heatmap_overlay(tile, cam));
    ++done;
  }
  write_run_meta(out, cfg, "explain");
  log_line("explain: " + std::to_string(done) + " heatmaps -> " + out.string());
  return 0;
}

int run_export_features(const PipelineConfig& cfg, const fs::path& cohort_dir,
                        const fs::path& tiles_dir, const fs::path& models_dir,
                        const fs::path& out) {
  const auto slides = load_slide_infos(cohort_dir / "cohort.csv");
  const TileDataset data = build_dataset(slides, tiles_dir, {});
  const Network net(cfg.net);
  const NetState state = load_checkpoint(list_checkpoints(models_dir)[0]);
  const int feat = cfg.net.feature_dim();
  std::vector<std::string> header = {"slide_id", "x", "y"};
  for (int f = 0; f < feat; ++f) header.push_back("f" + std::to_string(f));
  std::vector<std::vector<std::string>> rows;
  const std::size_t chunk = 32;
  for (std::size_t begin = 0; begin < data.entries.size(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, data.entries.size());
    std::vector<Sample> batch;
    for (std::size_t i = begin; i < end; ++i)
      batch.push_back(load_sample(data.entries[i]));
    const auto features = export_features(net, state, batch);
    for (std::size_t i = begin; i < end; ++i) {
      const TileEntry& e = data.entries[i];
      std::vector<std::string> row = {e.slide_id, std::to_string(e.x),
                                      std::to_string(e.y)};
      for (double v : features[i - begin]) row.push_back(fmt_double(v, 12));
      rows.push_back(std::move(row));
    }
  }
  fs::create_directories(out);
  write_csv(out / "features.csv", header, rows);
  write_run_meta(out, cfg, "export-features");
  log_line("export-features: " + std::to_string(rows.size()) + " rows -> " +
           out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whole-slide biopsy classification pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", split_name_arg = "test";
  std::string cohort_dir, masks_dir, tiles_dir, splits_dir, models_dir;
  std::string predictions_dir, metrics_dir;
  std::uint64_t seed = 0;
  bool seed_set = false, strict = false, force = false, keep_failed_qc = false;
  int threads = -1, limit = 0;
  int patients_override = 0, cores_override = 0, ensemble_override = 0;
  double signal_override = -1.0, percentile_override = -1.0, lr_override = -1.0;
  int batch_override = 0, iters_override = 0, max_epochs_override = 0;
  int n_boot_override = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Global seed (overrides config)")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  add_common(synth);
  synth->add_option("--patients", patients_override, "Number of patients");
  synth->add_option("--cores", cores_override, "Biopsy cores per patient");
  synth->add_option("--signal", signal_override, "Class signal strength");

  CLI::App* mask = app.add_subcommand("mask", "Compute tissue masks");
  add_common(mask);
  mask->add_option("--cohort", cohort_dir, "Cohort directory")->required();

  CLI::App* tile = app.add_subcommand("tile", "Extract QC-passing tiles");
  add_common(tile);
  tile->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  tile->add_option("--masks", masks_dir, "Mask directory")->required();
  tile->add_flag("--keep-failed-qc", keep_failed_qc,
                 "Also write failed-QC tile rasters");

  CLI::App* split = app.add_subcommand("split", "Stratified patient split");
  add_common(split);
  split->add_option("--cohort", cohort_dir, "Cohort directory")->required();

  CLI::App* train = app.add_subcommand("train", "Train the ensemble");
  add_common(train);
  train->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  train->add_option("--tiles", tiles_dir, "Tile store directory")->required();
  train->add_option("--splits", splits_dir, "Split directory")->required();
  train->add_option("--ensemble", ensemble_override, "Ensemble size");
  train->add_option("--batch-size", batch_override, "Mini-batch size");
  train->add_option("--iters", iters_override, "Iterations per partial epoch");
  train->add_option("--max-epochs", max_epochs_override, "Max partial epochs");
  train->add_option("--lr", lr_override, "Initial learning rate");

  CLI::App* predict = app.add_subcommand("predict", "Score tiles and aggregate");
  add_common(predict);
  predict->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  predict->add_option("--tiles", tiles_dir, "Tile store directory")->required();
  predict->add_option("--models", models_dir, "Checkpoint directory")->required();
  predict->add_option("--splits", splits_dir, "Split directory");
  predict->add_option("--split-name", split_name_arg,
                      "Which split to score: train/validation/test/all");
  predict->add_option("--percentile", percentile_override,
                      "Tile-to-slide aggregation percentile");
  predict->add_flag("--strict", strict, "Fail on slides without tiles");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Compute metrics");
  add_common(evaluate);
  evaluate->add_option("--predictions", predictions_dir,
                       "Prediction directory")->required();
  evaluate->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  evaluate->add_option("--n-boot", n_boot_override, "Bootstrap resamples");

  CLI::App* report = app.add_subcommand("report", "Render report.md");
  add_common(report);
  report->add_option("--metrics", metrics_dir, "Metrics directory")->required();
  report->add_flag("--force", force, "Ignore config hash mismatches");

  CLI::App* explain = app.add_subcommand("explain", "Grad-CAM heatmaps");
  add_common(explain);
  explain->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  explain->add_option("--tiles", tiles_dir, "Tile store directory")->required();
  explain->add_option("--models", models_dir, "Checkpoint directory")->required();
  explain->add_option("--limit", limit, "Maximum number of tiles (0 = all)");

  CLI::App* exportf =
      app.add_subcommand("export-features", "Per-tile feature vectors");
  add_common(exportf);
  exportf->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  exportf->add_option("--tiles", tiles_dir, "Tile store directory")->required();
  exportf->add_option("--models", models_dir, "Checkpoint directory")->required();

  std::string subcommand = "?";
  try {
    app.parse(argc, argv);
    subcommand = app.get_subcommands()[0]->get_name();

    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_pipeline_config(config_path);
    if (seed_set) {
      cfg.seed = seed;
      cfg.synth.seed = seed;
    }
    if (threads >= 0) cfg.threads = threads;
    if (patients_override > 0) cfg.synth.n_patients = patients_override;
    if (cores_override > 0) cfg.synth.cores_per_patient = cores_override;
    if (signal_override >= 0.0) cfg.synth.signal_strength = signal_override;
    if (ensemble_override > 0) cfg.train.ensemble_size = ensemble_override;
    if (batch_override > 0) cfg.train.batch_size = batch_override;
    if (iters_override > 0) cfg.train.partial_epoch_iters = iters_override;
    if (max_epochs_override > 0)
      cfg.train.max_partial_epochs = max_epochs_override;
    if (lr_override > 0.0) cfg.train.initial_lr = lr_override;
    if (percentile_override >= 0.0)
      cfg.aggregation.slide_percentile = percentile_override;
    if (n_boot_override > 0) cfg.metrics.n_boot = n_boot_override;
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif

    int code = 1;
    if (*synth) code = run_synth(cfg, out_dir);
    if (*mask) code = run_mask(cfg, cohort_dir, out_dir);
    if (*tile) code = run_tile(cfg, cohort_dir, masks_dir, out_dir,
                               keep_failed_qc);
    if (*split) code = run_split(cfg, cohort_dir, out_dir);
    if (*train) code = run_train(cfg, cohort_dir, tiles_dir, splits_dir,
                                 out_dir);
    if (*predict)
      code = run_predict(cfg, cohort_dir, tiles_dir, models_dir, splits_dir,
                         split_name_arg, out_dir, strict);
    if (*evaluate) code = run_evaluate(cfg, predictions_dir, cohort_dir,
                                       out_dir);
    if (*report) code = run_report(cfg, metrics_dir, out_dir, force);
    if (*explain)
      code = run_explain(cfg, cohort_dir, tiles_dir, models_dir, out_dir,
                         limit);
    if (*exportf)
      code = run_export_features(cfg, cohort_dir, tiles_dir, models_dir,
                                 out_dir);
    std::cerr << "result status=ok command=" << subcommand << " exit=" << code
              << "\n";
    return code;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    std::cerr << "result status=" << (code == 0 ? "ok" : "usage_error")
              << " command=" << subcommand << " exit=" << (code == 0 ? 0 : 1)
              << "\n";
    return code == 0 ? 0 : 1;
  } catch (const NumericalError& e) {
    log_line(std::string("numerical error: ") + e.what());
    std::cerr << "result status=numeric_error command=" << subcommand
              << " exit=3\n";
    return 3;
  } catch (const std::exception& e) {
    log_line(std::string("error: ") + e.what());
    std::cerr << "result status=data_error command=" << subcommand
              << " exit=2\n";
    return 2;
  }
}
