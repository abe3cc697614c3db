#pragma once

// Human triage of pseudo-label candidates.
//
// A session holds the candidate list and an append-only JSONL decision log
// (one ReviewDecision per line). The latest decision per candidate wins;
// replaying the log from scratch reproduces the session state. Writes are
// serialized and acknowledged only after the line is fsync'ed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "memessl/pseudo.hpp"

namespace memessl {

enum class Verdict { accepted, rejected };
enum class ReviewStatus { pending, accepted, rejected };

std::string_view to_string(Verdict v);
std::string_view to_string(ReviewStatus s);
std::optional<Verdict> parse_verdict(std::string_view s);
std::optional<ReviewStatus> parse_status(std::string_view s);

struct ReviewDecision {
  std::int64_t id = 0;
  Verdict verdict = Verdict::accepted;
  std::string reviewer;
  std::optional<std::string> note;
  std::int64_t timestamp = 0;  // seconds since epoch

  bool same_payload(const ReviewDecision& o) const {
    return id == o.id && verdict == o.verdict && reviewer == o.reviewer && note == o.note;
  }
};

std::string decision_to_json(const ReviewDecision& d);
ReviewDecision decision_from_json(std::string_view line);

struct CandidateFilter {
  std::optional<ReviewStatus> status;  // nullopt = any
  std::optional<int> assigned_label;   // nullopt = any
};

struct CandidateEntry {
  PseudoCandidate candidate;
  ReviewStatus status = ReviewStatus::pending;
  std::optional<ReviewDecision> decision;
};

struct CandidatePage {
  std::vector<CandidateEntry> items;
  std::size_t total = 0;  // matching the filter, across all pages
  std::size_t page = 1;
  std::size_t page_size = 0;
};

struct ReviewStats {
  std::size_t total = 0, pending = 0, accepted = 0, rejected = 0;
};

struct DecisionAck {
  std::int64_t id = 0;
  Verdict verdict = Verdict::accepted;
  bool appended = false;    // false when identical to the effective decision
  bool superseded = false;  // an earlier, different decision was replaced
};

class ReviewSession {
 public:
  // Throws Error on duplicate candidate ids, or a log line naming an unknown
  // candidate. A truncated final log line (no newline) is an unacknowledged
  // write and is ignored.
  explicit ReviewSession(std::vector<PseudoCandidate> candidates,
                         std::optional<std::filesystem::path> log_path = std::nullopt);

  ReviewSession(const ReviewSession&) = delete;
  ReviewSession& operator=(const ReviewSession&) = delete;

  // Ordered by confidence descending, then id. page is 1-based. Throws Error
  // on page == 0 or page_size == 0.
  CandidatePage list(const CandidateFilter& filter, std::size_t page, std::size_t page_size) const;
  std::optional<CandidateEntry> get(std::int64_t id) const;

  // Throws Error on an unknown id; the log is unchanged in that case.
  DecisionAck post_decision(std::int64_t id, Verdict verdict, const std::string& reviewer,
                            const std::optional<std::string>& note, std::optional<std::int64_t> timestamp = std::nullopt);

  ReviewStats stats() const;
  // Candidates with the given effective verdict, as source=pseudo records,
  // ordered by id.
  RecordSet export_verdict(Verdict v) const;
  RecordSet export_accepted() const { return export_verdict(Verdict::accepted); }

  std::size_t replayed() const { return replayed_; }

 private:
  void apply(const ReviewDecision& d);
  void append_durable(const ReviewDecision& d);

  mutable std::shared_mutex mu_;
  std::vector<PseudoCandidate> candidates_;
  std::map<std::int64_t, std::size_t> index_;
  std::map<std::int64_t, ReviewDecision> effective_;
  std::optional<std::filesystem::path> log_path_;
  std::size_t replayed_ = 0;
};

}  // namespace memessl
