#pragma once

// Adam with warmup schedules, the minibatch training loop and loss curves.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memessl/model.hpp"

namespace memessl {

enum class Schedule { warmup_linear, warmup_cosine };
std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view s);

struct TrainConfig {
  int total_steps = 3000;  // optimizer updates
  Schedule schedule = Schedule::warmup_linear;
  int warmup_steps = 2000;
  int batch_size = 32;
  double base_lr = 5e-5;           // head learning rate
  double backbone_lr_ratio = 0.3;  // backbone lr = ratio * base_lr
  double dropout_rate = 0.10;
  std::uint64_t seed = 0;
  int eval_every = 100;

  // Throws Error on invalid values; returns non-fatal warnings (warmup longer
  // than half the run).
  std::vector<std::string> validate() const;
};

// Piecewise multiplier: t/w during warmup, then (T-t)/(T-w) for
// warmup_linear or 0.5*(1+cos(pi*(t-w)/(T-w))) for warmup_cosine.
// Throws Error unless 0 <= w < T and 0 <= t <= T.
double lr_multiplier(Schedule schedule, int t, int w, int total);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  FusionParams m, v;
  std::int64_t step = 0;

  static AdamState zeros_like(const FusionParams& p);
};

// One bias-corrected Adam update. Throws Error naming the tensor on a
// non-finite gradient, leaving params and state untouched.
void adam_step(FusionParams& params, const FusionParams& grads, AdamState& state, double lr);
void adam_step(FusionParams& params, const FusionParams& grads, AdamState& state, double lr_head, double lr_backbone);

struct EvalPoint {
  int step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double val_auroc = 0.0;  // NaN when the validation set is single-class or empty
};

struct TrainReport {
  std::vector<EvalPoint> points;
  std::string checkpoint_path;
  std::vector<std::string> warnings;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  TrainReport report;
  FusionParams params;
  FusionConfig config;  // with the run's dropout rate applied
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<FusionParams> initial_params;
  bool quiet = true;
};

// Loss/accuracy/AUROC of a labeled set in eval mode.
struct SetEval {
  double loss = 0.0;
  double acc = 0.0;
  double auroc = 0.0;
};
SetEval evaluate_set(const RecordSet& set, const FeatureStore& features, const Vocabulary& vocab,
                     const FusionParams& params, const FusionConfig& cfg);

// Throws Error on an empty training set, a batch larger than the training
// set (when steps are requested), or unlabeled/unfeatured records.
TrainResult train(const RecordSet& train_set, const RecordSet& val_set, const FeatureStore& features,
                  const Vocabulary& vocab, const FusionConfig& model_cfg, const TrainConfig& train_cfg,
                  const TrainOptions& opts = {});

}  // namespace memessl
