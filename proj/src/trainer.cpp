#include "wsipipe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>

#include "wsipipe/aggregate.hpp"
#include "wsipipe/csv.hpp"
#include "wsipipe/metrics.hpp"
#include "wsipipe/png_io.hpp"

namespace wsipipe {

void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(log.rows.size());
  for (const TrainLogRow& r : log.rows)
    rows.push_back({std::to_string(r.partial_epoch), fmt_double(r.train_loss),
                    fmt_double(r.tune_loss), fmt_double(r.lr, 12),
                    r.improved ? "1" : "0", r.event});
  write_csv(path, {"partial_epoch", "train_loss", "tune_loss", "lr",
                   "improved", "event"},
            rows);
}

TrainLog run_schedule(TrainBackend& backend, const TrainConfig& cfg) {
  if (cfg.partial_epoch_iters < 1 || cfg.max_partial_epochs < 1 ||
      cfg.patience < 1)
    throw InvalidInput("TrainConfig: counts must be positive");
  const auto start = std::chrono::steady_clock::now();

  TrainLog log;
  double best = backend.tuning_loss();  // baseline before any training
  backend.snapshot_best();
  log.best_partial_epoch = 0;
  log.best_tune_loss = best;

  double lr = cfg.initial_lr;
  int no_improve = 0;
  int plateaus_since_improve = 0;
  for (int epoch = 1; epoch <= cfg.max_partial_epochs; ++epoch) {
    TrainLogRow row;
    row.partial_epoch = epoch;
    row.lr = lr;
    row.train_loss = backend.train_steps(cfg.partial_epoch_iters, lr);
    row.tune_loss = backend.tuning_loss();
    if (row.tune_loss < best - cfg.min_delta) {
      best = row.tune_loss;
      row.improved = true;
      no_improve = 0;
      plateaus_since_improve = 0;
      log.best_partial_epoch = epoch;
      log.best_tune_loss = best;
      backend.snapshot_best();
    } else if (++no_improve == cfg.patience) {
      if (++plateaus_since_improve >= 2) {
        row.event = "early_stop";
        log.rows.push_back(row);
        log.stop_reason = "early_stop";
        log.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start)
                .count();
        return log;
      }
      lr *= cfg.lr_factor;
      row.event = "reduce_lr";
      no_improve = 0;
    }
    log.rows.push_back(row);
  }
  log.rows.back().event = "max_epochs";
  log.stop_reason = "max_epochs";
  log.wall_seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  return log;
}

Sample load_sample(const TileEntry& entry) {
  return sample_from_tile(read_png_rgb(entry.png_path), entry.covariates);
}

std::vector<std::size_t> sample_balanced_batch(const TileDataset& data,
                                               int batch_size, Rng& rng) {
  if (batch_size < 2 || batch_size % 2 != 0)
    throw InvalidInput("sample_balanced_batch: batch_size must be even");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < data.entries.size(); ++i)
    (data.entries[i].label ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw InvalidInput("sample_balanced_batch: a class has no tiles");
  std::vector<std::size_t> batch;
  batch.reserve(batch_size);
  for (int i = 0; i < batch_size / 2; ++i)
    batch.push_back(pos[rng.below(pos.size())]);
  for (int i = 0; i < batch_size / 2; ++i)
    batch.push_back(neg[rng.below(neg.size())]);
  return batch;
}

ImageRGB augment(const ImageRGB& tile, Rng& rng) {
  if (tile.width != tile.height)
    throw InvalidInput("augment: tile must be square");
  return dihedral(tile, static_cast<int>(rng.below(8)));
}

namespace {

// Real-network backend behind the schedule interface.
class NetworkBackend : public TrainBackend {
 public:
  NetworkBackend(const TileDataset& train, const TileDataset& tune,
                 const TrainConfig& cfg, const NetConfig& net_cfg,
                 std::uint64_t seed)
      : train_(train),
        tune_(tune),
        cfg_(cfg),
        net_(net_cfg),
        seed_(seed),
        sampler_(derive_seed(seed, "sampler")),
        augmenter_(derive_seed(seed, "augment")) {
    state_ = net_.init_state(derive_seed(seed, "init"));
    best_ = state_;
  }

  double train_steps(int iters, double lr) override {
    double loss_sum = 0.0;
    for (int it = 0; it < iters; ++it) {
      const std::vector<std::size_t> idx =
          sample_balanced_batch(train_, cfg_.batch_size, sampler_);
      // Draw all augmentation choices before the (possibly parallel)
      // forward so the stream order is fixed.
      std::vector<int> transforms(idx.size());
      for (int& t : transforms) t = static_cast<int>(augmenter_.below(8));

      std::vector<Sample> batch(idx.size());
      std::vector<double> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const TileEntry& entry = train_.entries[idx[i]];
        batch[i] = sample_from_tile(
            dihedral(read_png_rgb(entry.png_path), transforms[i]),
            entry.covariates);
        labels[i] = entry.label;
      }

      ForwardTrace trace;
      const std::vector<double> probs =
          net_.forward(state_, batch, RunMode::kTrain,
                       derive_seed(seed_, "dropout", step_), &trace);
      loss_sum += bce_loss(probs, labels);
      const GradSet grads = net_.backward(state_, trace, labels);
      net_.adam_step(state_, grads, lr);
      ++step_;
    }
    return loss_sum / iters;
  }

  double tuning_loss() override {
    double loss_sum = 0.0;
    const std::size_t chunk = 32;
    for (std::size_t begin = 0; begin < tune_.entries.size(); begin += chunk) {
      const std::size_t end = std::min(begin + chunk, tune_.entries.size());
      std::vector<Sample> batch;
      std::vector<double> labels;
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(load_sample(tune_.entries[i]));
        labels.push_back(tune_.entries[i].label);
      }
      const std::vector<double> probs =
          net_.forward(state_, batch, RunMode::kInfer);
      loss_sum += bce_loss(probs, labels) * static_cast<double>(batch.size());
    }
    return loss_sum / static_cast<double>(tune_.entries.size());
  }

  void snapshot_best() override { best_ = state_; }

  NetState take_best() { return std::move(best_); }

 private:
  const TileDataset& train_;
  const TileDataset& tune_;
  TrainConfig cfg_;
  Network net_;
  std::uint64_t seed_;
  Rng sampler_;
  Rng augmenter_;
  NetState state_;
  NetState best_;
  std::uint64_t step_ = 0;
};

}  // namespace

TrainResult train_model(const TileDataset& train, const TileDataset& tune,
                        const TrainConfig& cfg, const NetConfig& net_cfg,
                        std::uint64_t seed) {
  if (tune.entries.empty()) throw InvalidInput("train_model: empty tuning set");
  NetworkBackend backend(train, tune, cfg, net_cfg, seed);
  TrainLog log = run_schedule(backend, cfg);
  return {backend.take_best(), std::move(log)};
}

std::vector<TrainResult> train_ensemble(const TileDataset& train,
                                        const TileDataset& tune,
                                        const TrainConfig& cfg,
                                        const NetConfig& net_cfg,
                                        std::uint64_t base_seed) {
  if (cfg.ensemble_size < 1)
    throw InvalidInput("train_ensemble: ensemble_size must be positive");
  std::vector<TrainResult> members;
  members.reserve(cfg.ensemble_size);
  for (int m = 0; m < cfg.ensemble_size; ++m)
    members.push_back(train_model(train, tune, cfg, net_cfg,
                                  base_seed + static_cast<std::uint64_t>(m)));
  return members;
}

namespace {

TileDataset subset_by_patients(const TileDataset& tiles,
                               const std::set<std::string>& patient_ids) {
  TileDataset out;
  for (const TileEntry& e : tiles.entries)
    if (patient_ids.contains(e.patient_id)) out.entries.push_back(e);
  return out;
}

}  // namespace

CvSelection cross_validate(const std::vector<PatientRecord>& patients,
                           const TileDataset& tiles, int k,
                           const TrainConfig& cfg, const NetConfig& net_cfg,
                           std::uint64_t seed) {
  if (cfg.lr_grid.empty() || cfg.percentile_grid.empty())
    throw InvalidInput("cross_validate: empty hyperparameter grid");
  CvSelection sel;
  sel.mean_auc.assign(cfg.lr_grid.size(),
                      std::vector<double>(cfg.percentile_grid.size(), 0.0));
  if (cfg.lr_grid.size() == 1 && cfg.percentile_grid.size() == 1) {
    sel.lr = cfg.lr_grid[0];
    sel.percentile = cfg.percentile_grid[0];
    return sel;
  }

  const std::vector<SplitAssignment> folds =
      kfold(patients, k, derive_seed(seed, "kfold"));
  std::map<std::string, const PatientRecord*> by_id;
  for (const PatientRecord& p : patients) by_id[p.patient_id] = &p;

  for (int f = 0; f < k; ++f) {
    const SplitAssignment rs =
        round_split(patients, folds[f], f, derive_seed(seed, "round", f));
    std::set<std::string> train_ids, tune_ids, held_ids;
    for (const auto& [pid, fold] : folds[f].fold)
      if (fold == f) held_ids.insert(pid);
    for (const auto& [pid, split] : rs.split) {
      if (split == Split::kTrain) train_ids.insert(pid);
      if (split == Split::kValidation) tune_ids.insert(pid);
    }
    const TileDataset train_ds = subset_by_patients(tiles, train_ids);
    const TileDataset tune_ds = subset_by_patients(tiles, tune_ids);
    const TileDataset held_ds = subset_by_patients(tiles, held_ids);

    for (std::size_t li = 0; li < cfg.lr_grid.size(); ++li) {
      try {
        TrainConfig fold_cfg = cfg;
        fold_cfg.initial_lr = cfg.lr_grid[li];
        const TrainResult r = train_model(
            train_ds, tune_ds, fold_cfg, net_cfg,
            derive_seed(seed, "cv", f * cfg.lr_grid.size() + li));
        Network net(net_cfg);

        // Tile scores for the held fold.
        std::vector<TileScoreRow> tile_rows;
        const std::size_t chunk = 32;
        for (std::size_t begin = 0; begin < held_ds.entries.size();
             begin += chunk) {
          const std::size_t end =
              std::min(begin + chunk, held_ds.entries.size());
          std::vector<Sample> batch;
          for (std::size_t i = begin; i < end; ++i)
            batch.push_back(load_sample(held_ds.entries[i]));
          const std::vector<double> probs =
              net.forward(r.best_state, batch, RunMode::kInfer);
          for (std::size_t i = begin; i < end; ++i) {
            const TileEntry& e = held_ds.entries[i];
            tile_rows.push_back({e.patient_id, e.slide_id, e.x, e.y,
                                 probs[i - begin], e.label, e.isup});
          }
        }
        std::vector<SlideScoreRow> expected;
        std::set<std::string> seen;
        for (const TileEntry& e : held_ds.entries)
          if (seen.insert(e.slide_id).second)
            expected.push_back({e.patient_id, e.slide_id, 0.0, e.label, e.isup});

        for (std::size_t pi = 0; pi < cfg.percentile_grid.size(); ++pi) {
          const std::vector<SlideScoreRow> slides =
              aggregate_slides(tile_rows, expected, cfg.percentile_grid[pi]);
          std::vector<double> scores;
          std::vector<int> labels;
          for (const SlideScoreRow& s : slides) {
            scores.push_back(s.score);
            labels.push_back(s.label);
          }
          sel.mean_auc[li][pi] += auc(scores, labels) / k;
        }
      } catch (const std::runtime_error& e) {
        throw InvalidInput("cross_validate: fold " + std::to_string(f) +
                           ", lr " + fmt_double(cfg.lr_grid[li], 12) + ": " +
                           e.what());
      }
    }
  }

  double best = -1.0;
  for (std::size_t li = 0; li < cfg.lr_grid.size(); ++li)
    for (std::size_t pi = 0; pi < cfg.percentile_grid.size(); ++pi) {
      const double a = sel.mean_auc[li][pi];
      const bool better =
          a > best ||
          (a == best && (cfg.lr_grid[li] > sel.lr ||
                         (cfg.lr_grid[li] == sel.lr &&
                          cfg.percentile_grid[pi] < sel.percentile)));
      if (better) {
        best = a;
        sel.lr = cfg.lr_grid[li];
        sel.percentile = cfg.percentile_grid[pi];
      }
    }
  return sel;
}

}  // namespace wsipipe
