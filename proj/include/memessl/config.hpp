#pragma once

// JSON configuration for the pipeline. Every block is optional; missing keys
// keep their defaults and unknown keys are rejected.
//
//   {"seed": 0,
//    "synth":    {SynthSpec fields},
//    "features": {"image_height", "image_width", "grid_rows", "grid_cols", "dim"},
//    "pseudo":   {"tau_pos", "tau_neg"},
//    "augment":  {"cutout_frac", "cutout_fill"},
//    "model_1":  {"fusion": {FusionConfig fields}, "train": {TrainConfig fields}},
//    "model_2":  {...}}
//
// model_* blocks overlay the model of the same name; new names add a model.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "memessl/features.hpp"
#include "memessl/model.hpp"
#include "memessl/pseudo.hpp"
#include "memessl/ssl_engine.hpp"
#include "memessl/synth.hpp"
#include "memessl/trainer.hpp"

namespace memessl {

struct PipelineConfig {
  std::uint64_t seed = 0;
  SynthSpec synth;
  FeatureConfig features;
  Thresholds thresholds;
  double cutout_frac = 0.25;
  float cutout_fill = 0.0f;
  // Keyed model_1, model_2, ... in the file; defaults to the two columns of
  // the best-hyperparameter table.
  std::vector<ModelSpec> models = default_models();

  static std::vector<ModelSpec> default_models();
};

nlohmann::ordered_json to_json(const FusionConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);
nlohmann::ordered_json to_json(const SynthSpec& s);
nlohmann::ordered_json to_json(const FeatureConfig& c);
nlohmann::ordered_json to_json(const Thresholds& t);
nlohmann::ordered_json to_json(const PipelineConfig& c);

// Each overlays the keys present in j onto out. Throws Error on unknown keys
// or wrongly typed values.
void from_json(const nlohmann::json& j, FusionConfig& out);
void from_json(const nlohmann::json& j, TrainConfig& out);
void from_json(const nlohmann::json& j, SynthSpec& out);
void from_json(const nlohmann::json& j, FeatureConfig& out);
void from_json(const nlohmann::json& j, Thresholds& out);
void from_json(const nlohmann::json& j, PipelineConfig& out);

PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(std::string_view text);

// ExperimentConfig for the models and settings of a pipeline config.
ExperimentConfig experiment_config(const PipelineConfig& pc);

}  // namespace memessl
