#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsipipe/nnet.hpp"
#include "wsipipe/slide_store.hpp"
#include "wsipipe/tiler.hpp"
#include "wsipipe/tissue_seg.hpp"
#include "wsipipe/trainer.hpp"

namespace wsipipe {

// One configuration object covering every stage; omitted fields keep the
// defaults declared by each module's config struct.
struct PipelineConfig {
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = all hardware threads
  SyntheticCohortSpec synth;
  SegmentationConfig segmentation;
  TilingConfig tiling;
  NetConfig net;
  TrainConfig train;
  struct Aggregation {
    double slide_percentile = 75.0;
    std::string patient_rule = "median";
  } aggregation;
  struct Metrics {
    std::vector<double> specificity_targets = {0.99, 0.98, 0.95, 0.90};
    int n_boot = 2000;
  } metrics;
  struct SplitConfig {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
  } split;
};

// Canonical JSON echo of every field; the config hash is FNV-1a over this
// string, so any change to any setting changes every downstream artifact's
// provenance stamp.
std::string pipeline_config_json(const PipelineConfig& cfg);
std::string pipeline_config_hash(const PipelineConfig& cfg);

// Parses a JSON config file; unknown keys are rejected, missing keys keep
// their defaults.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_json(const std::string& text);

// Provenance stamp written next to every subcommand's artifacts and checked
// by `report` (mismatched hashes are refused unless forced).
void write_run_meta(const std::filesystem::path& dir, const PipelineConfig& cfg,
                    const std::string& subcommand);
struct RunMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string subcommand;
};
RunMeta read_run_meta(const std::filesystem::path& dir);

}  // namespace wsipipe
