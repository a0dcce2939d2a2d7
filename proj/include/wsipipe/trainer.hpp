#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsipipe/cohort.hpp"
#include "wsipipe/nnet.hpp"
#include "wsipipe/rng.hpp"

namespace wsipipe {

struct TrainConfig {
  int batch_size = 170;           // even: exact 50/50 class balance
  int partial_epoch_iters = 300;  // optimizer steps per partial epoch
  int max_partial_epochs = 400;
  int patience = 35;
  double min_delta = 1e-4;
  double initial_lr = 1e-5;
  double lr_factor = 0.5;
  int ensemble_size = 10;
  std::vector<double> lr_grid = {1e-5, 1e-6, 1e-7};
  std::vector<double> percentile_grid = {50, 60, 70, 75, 80, 90};
};

struct TrainLogRow {
  int partial_epoch = 0;
  double train_loss = 0.0;
  double tune_loss = 0.0;
  double lr = 0.0;
  bool improved = false;
  std::string event;  // "", "reduce_lr", "early_stop", "max_epochs"
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::string stop_reason;  // "early_stop" or "max_epochs"
  int best_partial_epoch = 0;  // 0 = initial parameters
  double best_tune_loss = 0.0;
  double wall_seconds = 0.0;
};

void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log);

// The schedule talks to the model through this interface so its semantics
// can be tested against stubs without touching a real network.
class TrainBackend {
 public:
  virtual ~TrainBackend() = default;
  // Runs `iters` optimizer steps at the given rate; returns the mean
  // training loss over those steps.
  virtual double train_steps(int iters, double lr) = 0;
  // Loss on the tuning set under the current parameters.
  virtual double tuning_loss() = 0;
  // Marks the current parameters as the best checkpoint so far.
  virtual void snapshot_best() = 0;
};

// Partial-epoch loop: the tuning loss is evaluated once before training (the
// baseline) and after every partial epoch. An improvement beats the best
// loss by more than min_delta. `patience` consecutive non-improvements halve
// the learning rate and reset the counter; a second full plateau with no
// intervening improvement stops training. Hard stop at max_partial_epochs.
TrainLog run_schedule(TrainBackend& backend, const TrainConfig& cfg);

// One training example: an on-disk tile with its patient-level label.
struct TileEntry {
  std::string patient_id;
  std::string slide_id;
  std::filesystem::path png_path;
  int x = 0;
  int y = 0;
  int label = 0;  // patient diagnosis
  int isup = 0;
  std::array<double, 9> covariates{};
};

struct TileDataset {
  std::vector<TileEntry> entries;
};

Sample load_sample(const TileEntry& entry);

// Indices of a class-balanced batch: batch_size/2 per class, uniform with
// replacement within class.
std::vector<std::size_t> sample_balanced_batch(const TileDataset& data,
                                               int batch_size, Rng& rng);

// One of the eight dihedral transforms, uniformly sampled.
ImageRGB augment(const ImageRGB& tile, Rng& rng);

struct TrainResult {
  NetState best_state;
  TrainLog log;
};

// Trains one model on the training tiles, selecting the checkpoint with the
// best tuning loss. All stochasticity (init, sampling, augmentation,
// dropout) flows from named sub-streams of `seed`.
TrainResult train_model(const TileDataset& train, const TileDataset& tune,
                        const TrainConfig& cfg, const NetConfig& net_cfg,
                        std::uint64_t seed);

// Ensemble members differ only by seed (base_seed + member index).
std::vector<TrainResult> train_ensemble(const TileDataset& train,
                                        const TileDataset& tune,
                                        const TrainConfig& cfg,
                                        const NetConfig& net_cfg,
                                        std::uint64_t base_seed);

struct CvSelection {
  double lr = 0.0;
  double percentile = 0.0;
  // mean_auc[lr index][percentile index], slide-level, averaged over folds
  std::vector<std::vector<double>> mean_auc;
};

// Five-fold style hyperparameter search over learning rate and aggregation
// percentile: each fold trains once per lr and scores the held fold's slides
// at every percentile. Ties break toward larger lr, then smaller percentile.
CvSelection cross_validate(const std::vector<PatientRecord>& patients,
                           const TileDataset& tiles, int k,
                           const TrainConfig& cfg, const NetConfig& net_cfg,
                           std::uint64_t seed);

}  // namespace wsipipe
