#pragma once

// Two-tail confidence filtering of pool predictions into pseudo-label
// candidates, and the candidate JSONL format:
//   {"id","img","text","confidence","assigned_label","stage"}

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "memessl/corpus.hpp"

namespace memessl {

struct Thresholds {
  double tau_pos = 0.995;  // p >= tau_pos -> label 1
  double tau_neg = 0.005;  // p <= tau_neg -> label 0

  // Throws Error unless 0 <= tau_neg < tau_pos <= 1.
  void validate() const;
};

struct PseudoCandidate {
  std::int64_t id = 0;
  std::string text;
  std::string img;
  double confidence = 0.0;  // model probability of label 1
  int assigned_label = 0;
  std::string stage = "S2_pseudo";

  bool operator==(const PseudoCandidate&) const = default;
};

// Inclusive thresholds; records strictly between the tails are dropped.
// Output is sorted by id. When pool is given, text and img are copied from
// it (a missing id throws Error). Throws Error on invalid thresholds,
// probabilities outside [0,1] or duplicate ids.
std::vector<PseudoCandidate> filter_pseudo(const std::vector<std::pair<std::int64_t, double>>& pool_probas,
                                           const Thresholds& th = {}, const RecordSet* pool = nullptr,
                                           const std::string& stage = "S2_pseudo");

// Labeled records with source=pseudo and the model confidence attached.
RecordSet candidates_to_records(const std::vector<PseudoCandidate>& candidates, std::string name = "pseudo");

std::string candidate_to_json(const PseudoCandidate& c);
PseudoCandidate candidate_from_json(std::string_view line);
void write_candidates(const std::vector<PseudoCandidate>& candidates, const std::filesystem::path& path);
std::vector<PseudoCandidate> read_candidates(const std::filesystem::path& path);

}  // namespace memessl
