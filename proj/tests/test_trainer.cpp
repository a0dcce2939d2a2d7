#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "wsipipe/png_io.hpp"
#include "wsipipe/trainer.hpp"

using namespace wsipipe;
namespace fs = std::filesystem;

namespace {

// Stub whose tuning loss never changes: the schedule must halve once at
// patience and stop after a second full plateau.
struct FrozenBackend : TrainBackend {
  std::vector<double> lrs;
  double train_steps(int, double lr) override {
    lrs.push_back(lr);
    return 1.0;
  }
  double tuning_loss() override { return 1.0; }
  void snapshot_best() override {}
};

// Stub that improves on every evaluation.
struct ImprovingBackend : TrainBackend {
  double loss = 1.0;
  int snapshots = 0;
  double train_steps(int, double) override {
    loss -= 0.01;
    return loss;
  }
  double tuning_loss() override { return loss; }
  void snapshot_best() override { ++snapshots; }
};

TileDataset make_dataset(const fs::path& dir, int n_pos, int n_neg, int side) {
  fs::create_directories(dir);
  TileDataset data;
  Rng rng(31);
  for (int i = 0; i < n_pos + n_neg; ++i) {
    ImageRGB img(side, side);
    for (auto& b : img.data) b = static_cast<std::uint8_t>(rng.below(256));
    TileEntry e;
    e.patient_id = "P" + std::to_string(i / 2);
    e.slide_id = e.patient_id + "_S0";
    e.png_path = dir / ("t" + std::to_string(i) + ".png");
    e.x = i;
    e.label = i < n_pos ? 1 : 0;
    e.covariates[i % 9] = 1.0;
    write_png(e.png_path, img);
    data.entries.push_back(e);
  }
  return data;
}

}  // namespace

TEST_CASE("schedule: frozen loss halves at 35 and stops at exactly 70") {
  FrozenBackend backend;
  const TrainConfig cfg;  // defaults: patience 35, max 400
  const TrainLog log = run_schedule(backend, cfg);
  REQUIRE(!log.rows.empty());
  // The baseline tuning loss is evaluated before training but not logged as
  // a row; it shows up as best_partial_epoch 0.
  CHECK(log.rows.front().partial_epoch == 1);
  CHECK(log.rows.back().partial_epoch == 70);
  CHECK(log.rows.back().event == "early_stop");
  CHECK(log.stop_reason == "early_stop");
  CHECK(log.best_partial_epoch == 0);
  // Exactly one reduction, at partial epoch 35.
  int reductions = 0;
  for (const auto& row : log.rows)
    if (row.event == "reduce_lr") {
      ++reductions;
      CHECK(row.partial_epoch == 35);
    }
  CHECK(reductions == 1);
  // Learning rate halves once: 35 epochs at lr0, then 35 at lr0/2.
  REQUIRE(backend.lrs.size() == 70);
  CHECK(backend.lrs[0] == cfg.initial_lr);
  CHECK(backend.lrs[34] == cfg.initial_lr);
  CHECK(backend.lrs[35] == cfg.initial_lr * cfg.lr_factor);
  CHECK(backend.lrs[69] == cfg.initial_lr * cfg.lr_factor);
}

TEST_CASE("schedule: steady improvement runs to the hard cap") {
  ImprovingBackend backend;
  TrainConfig cfg;
  cfg.max_partial_epochs = 12;
  const TrainLog log = run_schedule(backend, cfg);
  CHECK(log.stop_reason == "max_epochs");
  CHECK(log.rows.back().partial_epoch == 12);
  CHECK(log.rows.back().event == "max_epochs");
  CHECK(log.best_partial_epoch == 12);
  CHECK(backend.snapshots >= 12);
  for (const auto& row : log.rows) CHECK(row.improved);
}

TEST_CASE("schedule never exceeds the hard cap under a frozen loss") {
  FrozenBackend backend;
  TrainConfig cfg;
  cfg.patience = 500;  // never triggers within the cap
  cfg.max_partial_epochs = 40;
  const TrainLog log = run_schedule(backend, cfg);
  CHECK(log.rows.back().partial_epoch == 40);
  CHECK(log.stop_reason == "max_epochs");
}

TEST_CASE("train log csv has one row per evaluation") {
  FrozenBackend backend;
  TrainConfig cfg;
  cfg.patience = 2;
  const TrainLog log = run_schedule(backend, cfg);
  const fs::path path = fs::temp_directory_path() / "wsipipe_test_log.csv";
  write_train_log_csv(path, log);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == static_cast<int>(log.rows.size()) + 1);  // header
  fs::remove(path);
}

TEST_CASE("balanced batches are half-and-half with replacement") {
  const fs::path dir = fs::temp_directory_path() / "wsipipe_test_tiles_bal";
  const TileDataset data = make_dataset(dir, 3, 5, 8);
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const auto idx = sample_balanced_batch(data, 10, rng);
    REQUIRE(idx.size() == 10);
    int pos = 0;
    for (std::size_t i : idx) pos += data.entries[i].label;
    CHECK(pos == 5);
  }
  CHECK_THROWS_AS(sample_balanced_batch(data, 7, rng), InvalidInput);
  TileDataset one_class;
  one_class.entries.push_back(data.entries.back());
  CHECK_THROWS_AS(sample_balanced_batch(one_class, 2, rng), InvalidInput);
  fs::remove_all(dir);
}

TEST_CASE("augmentation stays inside the dihedral orbit") {
  ImageRGB img(6, 6);
  Rng fill(13);
  for (auto& b : img.data) b = static_cast<std::uint8_t>(fill.below(256));
  std::set<std::vector<std::uint8_t>> orbit;
  for (int k = 0; k < 8; ++k) orbit.insert(dihedral(img, k).data);
  Rng rng(14);
  std::set<std::vector<std::uint8_t>> seen;
  for (int i = 0; i < 200; ++i) {
    const ImageRGB aug = augment(img, rng);
    CHECK(orbit.count(aug.data) == 1);
    seen.insert(aug.data);
  }
  CHECK(seen.size() == 8);  // all eight appear under uniform sampling
}

TEST_CASE("train_model learns nothing without tuning tiles") {
  const fs::path dir = fs::temp_directory_path() / "wsipipe_test_tiles_tm";
  const TileDataset train = make_dataset(dir, 2, 2, 8);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.partial_epoch_iters = 1;
  cfg.max_partial_epochs = 1;
  CHECK_THROWS_AS(train_model(train, TileDataset{}, cfg, NetConfig::tiny(), 1),
                  InvalidInput);
  fs::remove_all(dir);
}

TEST_CASE("train_model and ensembles run end to end on the tiny net") {
  const fs::path dir = fs::temp_directory_path() / "wsipipe_test_tiles_e2e";
  const TileDataset train = make_dataset(dir / "train", 4, 4, 8);
  const TileDataset tune = make_dataset(dir / "tune", 2, 2, 8);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.partial_epoch_iters = 2;
  cfg.max_partial_epochs = 3;
  cfg.initial_lr = 1e-3;
  const auto results = train_ensemble(train, tune, cfg, NetConfig::tiny(), 5);
  CHECK(results.empty() == false);
  REQUIRE(results.size() == static_cast<std::size_t>(cfg.ensemble_size));
  // Members are reproducible functions of their seed.
  const TrainResult again = train_model(train, tune, cfg, NetConfig::tiny(), 5);
  CHECK(again.best_state.params[0].data == results[0].best_state.params[0].data);
  CHECK(again.log.rows.size() == results[0].log.rows.size());
  for (const auto& r : results)
    CHECK(r.log.rows.size() == static_cast<std::size_t>(cfg.max_partial_epochs));
  fs::remove_all(dir);
}

TEST_CASE("cross-validation short-circuits a single-point grid") {
  TrainConfig cfg;
  cfg.lr_grid = {1e-5};
  cfg.percentile_grid = {75.0};
  const CvSelection sel =
      cross_validate({}, TileDataset{}, 5, cfg, NetConfig::tiny(), 1);
  CHECK(sel.lr == 1e-5);
  CHECK(sel.percentile == 75.0);
}
