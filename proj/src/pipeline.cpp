#include "wsipipe/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace wsipipe {

namespace {

using nlohmann::json;

json net_to_json_obj(const NetConfig& c) {
  json stages = json::array();
  for (const auto& st : c.stages)
    stages.push_back(
        {{"width", st.width}, {"blocks", st.blocks}, {"stride", st.stride}});
  return {{"input_size", c.input_size},   {"in_channels", c.in_channels},
          {"stem_width", c.stem_width},   {"stem_stride", c.stem_stride},
          {"stages", stages},             {"covariate_dim", c.covariate_dim},
          {"hidden", c.hidden},           {"dropout_rate", c.dropout_rate},
          {"maxnorm_c", c.maxnorm_c}};
}

json config_to_json_obj(const PipelineConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["synth"] = {{"n_patients", cfg.synth.n_patients},
                {"cores_per_patient", cfg.synth.cores_per_patient},
                {"class_balance", cfg.synth.class_balance},
                {"signal_strength", cfg.synth.signal_strength},
                {"pen_mark_prob", cfg.synth.pen_mark_prob},
                {"blur_region_prob", cfg.synth.blur_region_prob},
                {"mpp", cfg.synth.mpp},
                {"slide_width", cfg.synth.slide_width},
                {"slide_height", cfg.synth.slide_height}};
  j["segmentation"] = {
      {"mask_downsample", cfg.segmentation.mask_downsample},
      {"hue_threshold", cfg.segmentation.hue_threshold},
      {"pen_abs_laplacian_threshold",
       cfg.segmentation.pen_abs_laplacian_threshold},
      {"disk_radius", cfg.segmentation.disk_radius}};
  j["tiling"] = {{"window", cfg.tiling.window},
                 {"stride", cfg.tiling.stride},
                 {"out_size", cfg.tiling.out_size},
                 {"min_tissue_fraction", cfg.tiling.min_tissue_fraction},
                 {"min_laplacian_variance", cfg.tiling.min_laplacian_variance}};
  j["net"] = net_to_json_obj(cfg.net);
  j["train"] = {{"batch_size", cfg.train.batch_size},
                {"partial_epoch_iters", cfg.train.partial_epoch_iters},
                {"max_partial_epochs", cfg.train.max_partial_epochs},
                {"patience", cfg.train.patience},
                {"min_delta", cfg.train.min_delta},
                {"initial_lr", cfg.train.initial_lr},
                {"lr_factor", cfg.train.lr_factor},
                {"ensemble_size", cfg.train.ensemble_size},
                {"lr_grid", cfg.train.lr_grid},
                {"percentile_grid", cfg.train.percentile_grid}};
  j["aggregation"] = {{"slide_percentile", cfg.aggregation.slide_percentile},
                      {"patient_rule", cfg.aggregation.patient_rule}};
  j["metrics"] = {{"specificity_targets", cfg.metrics.specificity_targets},
                  {"n_boot", cfg.metrics.n_boot}};
  j["split"] = {{"train", cfg.split.train},
                {"validation", cfg.split.validation},
                {"test", cfg.split.test}};
  return j;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& section) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (key == k) ok = true;
    if (!ok)
      throw InvalidInput("config: unknown key \"" + key + "\" in " + section);
  }
}

template <typename T>
void maybe(const json& obj, const char* key, T& field) {
  if (obj.contains(key)) field = obj.at(key).get<T>();
}

}  // namespace

std::string pipeline_config_json(const PipelineConfig& cfg) {
  return config_to_json_obj(cfg).dump(2);
}

std::string pipeline_config_hash(const PipelineConfig& cfg) {
  const std::string text = pipeline_config_json(cfg);
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  PipelineConfig cfg;
  check_keys(j,
             {"seed", "threads", "synth", "segmentation", "tiling", "net",
              "train", "aggregation", "metrics", "split"},
             "top level");
  maybe(j, "seed", cfg.seed);
  maybe(j, "threads", cfg.threads);
  if (j.contains("synth")) {
    const json& s = j["synth"];
    check_keys(s,
               {"n_patients", "cores_per_patient", "class_balance",
                "signal_strength", "pen_mark_prob", "blur_region_prob", "mpp",
                "slide_width", "slide_height"},
               "synth");
    maybe(s, "n_patients", cfg.synth.n_patients);
    maybe(s, "cores_per_patient", cfg.synth.cores_per_patient);
    maybe(s, "class_balance", cfg.synth.class_balance);
    maybe(s, "signal_strength", cfg.synth.signal_strength);
    maybe(s, "pen_mark_prob", cfg.synth.pen_mark_prob);
    maybe(s, "blur_region_prob", cfg.synth.blur_region_prob);
    maybe(s, "mpp", cfg.synth.mpp);
    maybe(s, "slide_width", cfg.synth.slide_width);
    maybe(s, "slide_height", cfg.synth.slide_height);
  }
  if (j.contains("segmentation")) {
    const json& s = j["segmentation"];
    check_keys(s,
               {"mask_downsample", "hue_threshold",
                "pen_abs_laplacian_threshold", "disk_radius"},
               "segmentation");
    maybe(s, "mask_downsample", cfg.segmentation.mask_downsample);
    maybe(s, "hue_threshold", cfg.segmentation.hue_threshold);
    maybe(s, "pen_abs_laplacian_threshold",
          cfg.segmentation.pen_abs_laplacian_threshold);
    maybe(s, "disk_radius", cfg.segmentation.disk_radius);
  }
  if (j.contains("tiling")) {
    const json& s = j["tiling"];
    check_keys(s,
               {"window", "stride", "out_size", "min_tissue_fraction",
                "min_laplacian_variance"},
               "tiling");
    maybe(s, "window", cfg.tiling.window);
    maybe(s, "stride", cfg.tiling.stride);
    maybe(s, "out_size", cfg.tiling.out_size);
    maybe(s, "min_tissue_fraction", cfg.tiling.min_tissue_fraction);
    maybe(s, "min_laplacian_variance", cfg.tiling.min_laplacian_variance);
  }
  if (j.contains("net")) {
    const json& s = j["net"];
    check_keys(s,
               {"input_size", "in_channels", "stem_width", "stem_stride",
                "stages", "covariate_dim", "hidden", "dropout_rate",
                "maxnorm_c"},
               "net");
    maybe(s, "input_size", cfg.net.input_size);
    maybe(s, "in_channels", cfg.net.in_channels);
    maybe(s, "stem_width", cfg.net.stem_width);
    maybe(s, "stem_stride", cfg.net.stem_stride);
    if (s.contains("stages")) {
      cfg.net.stages.clear();
      for (const json& st : s["stages"]) {
        check_keys(st, {"width", "blocks", "stride"}, "net.stages");
        NetConfig::Stage stage;
        maybe(st, "width", stage.width);
        maybe(st, "blocks", stage.blocks);
        maybe(st, "stride", stage.stride);
        cfg.net.stages.push_back(stage);
      }
    }
    maybe(s, "covariate_dim", cfg.net.covariate_dim);
    maybe(s, "hidden", cfg.net.hidden);
    maybe(s, "dropout_rate", cfg.net.dropout_rate);
    maybe(s, "maxnorm_c", cfg.net.maxnorm_c);
  }
  if (j.contains("train")) {
    const json& s = j["train"];
    check_keys(s,
               {"batch_size", "partial_epoch_iters", "max_partial_epochs",
                "patience", "min_delta", "initial_lr", "lr_factor",
                "ensemble_size", "lr_grid", "percentile_grid"},
               "train");
    maybe(s, "batch_size", cfg.train.batch_size);
    maybe(s, "partial_epoch_iters", cfg.train.partial_epoch_iters);
    maybe(s, "max_partial_epochs", cfg.train.max_partial_epochs);
    maybe(s, "patience", cfg.train.patience);
    maybe(s, "min_delta", cfg.train.min_delta);
    maybe(s, "initial_lr", cfg.train.initial_lr);
    maybe(s, "lr_factor", cfg.train.lr_factor);
    maybe(s, "ensemble_size", cfg.train.ensemble_size);
    maybe(s, "lr_grid", cfg.train.lr_grid);
    maybe(s, "percentile_grid", cfg.train.percentile_grid);
  }
  if (j.contains("aggregation")) {
    const json& s = j["aggregation"];
    check_keys(s, {"slide_percentile", "patient_rule"}, "aggregation");
    maybe(s, "slide_percentile", cfg.aggregation.slide_percentile);
    maybe(s, "patient_rule", cfg.aggregation.patient_rule);
  }
  if (j.contains("metrics")) {
    const json& s = j["metrics"];
    check_keys(s, {"specificity_targets", "n_boot"}, "metrics");
    maybe(s, "specificity_targets", cfg.metrics.specificity_targets);
    maybe(s, "n_boot", cfg.metrics.n_boot);
  }
  if (j.contains("split")) {
    const json& s = j["split"];
    check_keys(s, {"train", "validation", "test"}, "split");
    maybe(s, "train", cfg.split.train);
    maybe(s, "validation", cfg.split.validation);
    maybe(s, "test", cfg.split.test);
  }
  cfg.synth.seed = cfg.seed;
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    return pipeline_config_from_json(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("config: " + path.string() + ": " + e.what());
  }
}

void write_run_meta(const std::filesystem::path& dir, const PipelineConfig& cfg,
                    const std::string& subcommand) {
  std::filesystem::create_directories(dir);
  json j = {{"config_hash", pipeline_config_hash(cfg)},
            {"seed", cfg.seed},
            {"subcommand", subcommand}};
  std::ofstream out(dir / "meta.json");
  out << j.dump(2) << "\n";
}

RunMeta read_run_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in)
    throw InvalidInput("meta: missing " + (dir / "meta.json").string());
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("meta: " + (dir / "meta.json").string() + ": " +
                       e.what());
  }
  RunMeta m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.subcommand = j.at("subcommand").get<std::string>();
  return m;
}

}  // namespace wsipipe
