#pragma once

// Pseudo-label-then-retrain experiment over four training-metadata stages:
//   S0_baseline  hm_train
//   S1_manual    hm_train + dev_remainder + manual
//   S2_pseudo    S1 + confidence-selected pool records (cutout-augmented)
//   S3_filtered  S1 + the human-accepted subset of those candidates
// Each stage trains every model config and is evaluated on the validation
// and test splits.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "memessl/corpus.hpp"
#include "memessl/features.hpp"
#include "memessl/image.hpp"
#include "memessl/metrics.hpp"
#include "memessl/model.hpp"
#include "memessl/pseudo.hpp"
#include "memessl/review.hpp"
#include "memessl/trainer.hpp"

namespace memessl {

struct SynthCorpus;

enum class Stage { S0_baseline, S1_manual, S2_pseudo, S3_filtered };
inline constexpr std::size_t kNumStages = 4;

std::string_view to_string(Stage s);
// Accepts the full name or the short form "S0".."S3".
Stage parse_stage(std::string_view s);
// Comma-separated list, returned in stage order without duplicates.
std::vector<Stage> parse_stages(std::string_view csv);

// Throws Error on unlabeled inputs, pseudo/filtered records without
// source=pseudo, a missing pseudo/filtered set for S2/S3, or id collisions.
RecordSet build_stage_metadata(Stage stage, const RecordSet& hm_train, const RecordSet& dev_remainder,
                               const RecordSet& manual, const RecordSet* pseudo_set = nullptr,
                               const RecordSet* filtered_set = nullptr);

struct ModelSpec {
  std::string name;
  FusionConfig fusion;
  TrainConfig train;
};

// Decides one candidate; nullopt leaves it pending.
using Reviewer = std::function<std::optional<Verdict>(const PseudoCandidate&)>;

struct ExperimentInputs {
  RecordSet hm_train, dev_remainder, manual, pool;
  RecordSet val, test;
  ImageStore images;
  // Human-filtered set for S3. When absent, reviewer is run over the label-1
  // candidates of each model's pseudo-label pass.
  std::optional<RecordSet> filtered;
  Reviewer reviewer;
};

// Inputs from a synthetic corpus; the reviewer accepts label-1 candidates
// whose ground-truth label is 1 and rejects the rest.
ExperimentInputs inputs_from_synth(const SynthCorpus& corpus);

// Inputs from a corpus directory as written by write_corpus (train, dev,
// test, dev_remainder, manual, pool .jsonl plus images). filtered.jsonl is
// used for S3 when present.
ExperimentInputs load_inputs(const std::filesystem::path& dir);

struct ExperimentConfig {
  std::vector<ModelSpec> models;
  std::vector<Stage> stages{Stage::S0_baseline, Stage::S1_manual, Stage::S2_pseudo, Stage::S3_filtered};
  FeatureConfig features;
  Thresholds thresholds;
  double cutout_frac = 0.25;
  float cutout_fill = 0.0f;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output_dir;
  bool quiet = true;
};

struct StageRow {
  Stage stage = Stage::S0_baseline;
  std::string model;
  CountLedger ledger;
  EvalResult val, test;
  TrainReport curve;
};

struct PseudoSummary {
  std::string model;
  std::size_t pool_total = 0;
  std::size_t pool_text_kept = 0;
  std::size_t pool_featured = 0;
  std::size_t candidates = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t reviewed = 0;
  std::size_t accepted = 0;
  std::vector<PseudoCandidate> selected;
};

struct StageReport {
  std::vector<StageRow> rows;  // stage-major, then model order
  std::vector<PseudoSummary> pseudo;
  std::vector<Skipped> skipped;  // records dropped at feature extraction

  const StageRow* find(Stage stage, const std::string& model) const;
  // Columns: stage,model,n_train,<per-source counts>,val_acc,val_auroc,test_acc,test_auroc
  std::string to_csv() const;
  // Aligned table: Dataset, Model, Val Acc, Val AUROC, Test Acc, Test AUROC
  // (percentages, two decimals).
  std::string to_table() const;
  // report.csv, report.txt, curves/<stage>_<model>.csv,
  // candidates_<model>.jsonl under dir.
  void write(const std::filesystem::path& dir) const;
};

// Throws Error on invalid configs, S2/S3 requested without S1, or overlap
// between a training stage and the evaluation splits.
StageReport run_experiment(const ExperimentInputs& inputs, const ExperimentConfig& cfg);

}  // namespace memessl
