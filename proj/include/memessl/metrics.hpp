#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace memessl {

struct EvalResult {
  double accuracy = 0.0;
  double auroc = 0.0;
  std::size_t n = 0;
  double threshold = 0.5;
};

// Fraction of records with (score >= threshold) == label. Throws Error on
// length mismatch or empty input.
double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

// Area under the ROC curve as the Mann-Whitney statistic with half credit
// for ties, computed from mid-ranks in O(n log n). Throws Error unless both
// classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

EvalResult evaluate(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

// Prediction CSV: header "id,proba,label", label may be empty.
struct Prediction {
  std::int64_t id = 0;
  double proba = 0.0;
  std::optional<int> label;
};

std::vector<Prediction> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path);
// Throws Error when any prediction lacks a label.
EvalResult evaluate(const std::vector<Prediction>& preds, double threshold = 0.5);

}  // namespace memessl
