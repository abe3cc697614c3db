#include "memessl/review.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <iostream>
#include <mutex>

#include "json.hpp"
#include "memessl/util.hpp"

namespace memessl {

std::string_view to_string(Verdict v) { return v == Verdict::accepted ? "accepted" : "rejected"; }

std::string_view to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::pending: return "pending";
    case ReviewStatus::accepted: return "accepted";
    case ReviewStatus::rejected: return "rejected";
  }
  return "?";
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  if (s == "accepted") return Verdict::accepted;
  if (s == "rejected") return Verdict::rejected;
  return std::nullopt;
}

std::optional<ReviewStatus> parse_status(std::string_view s) {
  if (s == "pending") return ReviewStatus::pending;
  if (s == "accepted") return ReviewStatus::accepted;
  if (s == "rejected") return ReviewStatus::rejected;
  return std::nullopt;
}

std::string decision_to_json(const ReviewDecision& d) {
  nlohmann::ordered_json j;
  j["id"] = d.id;
  j["verdict"] = std::string(to_string(d.verdict));
  j["reviewer"] = d.reviewer;
  j["note"] = d.note ? nlohmann::ordered_json(*d.note) : nlohmann::ordered_json(nullptr);
  j["timestamp"] = d.timestamp;
  return j.dump();
}

ReviewDecision decision_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  ReviewDecision d;
  try {
    d.id = j.at("id").get<std::int64_t>();
    const auto v = parse_verdict(j.at("verdict").get<std::string>());
    if (!v) throw Error("decision: verdict must be accepted or rejected");
    d.verdict = *v;
    d.reviewer = j.value("reviewer", std::string());
    if (j.contains("note") && !j["note"].is_null()) d.note = j["note"].get<std::string>();
    d.timestamp = j.value("timestamp", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("decision: ") + e.what());
  }
  return d;
}

ReviewSession::ReviewSession(std::vector<PseudoCandidate> candidates, std::optional<std::filesystem::path> log_path)
    : candidates_(std::move(candidates)), log_path_(std::move(log_path)) {
  for (std::size_t i = 0; i < candidates_.size(); ++i)
    if (!index_.emplace(candidates_[i].id, i).second)
      throw Error("review: duplicate candidate id " + std::to_string(candidates_[i].id));

  if (!log_path_ || !std::filesystem::exists(*log_path_)) return;
  const std::string log = binio::read_file(*log_path_);
  std::size_t start = 0, line_no = 0;
  while (start < log.size()) {
    std::size_t end = log.find('\n', start);
    const bool complete = end != std::string::npos;
    if (!complete) end = log.size();
    const std::string_view line(log.data() + start, end - start);
    start = end + 1;
    ++line_no;
    if (trim_ascii(line).empty()) continue;
    ReviewDecision d;
    try {
      d = decision_from_json(line);
    } catch (const std::exception& e) {
      if (!complete) {
        std::cerr << "review: ignoring truncated final line " << line_no << " of " << log_path_->string() << "\n";
        break;
      }
      throw Error("review log " + log_path_->string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!index_.count(d.id))
      throw Error("review log " + log_path_->string() + ":" + std::to_string(line_no) + ": unknown candidate id " +
                  std::to_string(d.id));
    apply(d);
    ++replayed_;
  }
}

void ReviewSession::apply(const ReviewDecision& d) { effective_[d.id] = d; }

void ReviewSession::append_durable(const ReviewDecision& d) {
  if (!log_path_) return;
  if (log_path_->has_parent_path()) std::filesystem::create_directories(log_path_->parent_path());
  const std::string line = decision_to_json(d) + "\n";
  const int fd = ::open(log_path_->c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("review: cannot open decision log: " + std::string(std::strerror(errno)));
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(fd, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = std::strerror(errno);
      ::close(fd);
      throw Error("review: decision log write failed: " + err);
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw Error("review: decision log fsync failed: " + err);
  }
  ::close(fd);
}

CandidatePage ReviewSession::list(const CandidateFilter& filter, std::size_t page, std::size_t page_size) const {
  if (page == 0) throw Error("review: page is 1-based");
  if (page_size == 0) throw Error("review: page_size must be positive");
  std::shared_lock lock(mu_);
  std::vector<CandidateEntry> matching;
  for (const auto& c : candidates_) {
    CandidateEntry e{c, ReviewStatus::pending, std::nullopt};
    if (auto it = effective_.find(c.id); it != effective_.end()) {
      e.decision = it->second;
      e.status = it->second.verdict == Verdict::accepted ? ReviewStatus::accepted : ReviewStatus::rejected;
    }
    if (filter.status && *filter.status != e.status) continue;
    if (filter.assigned_label && *filter.assigned_label != c.assigned_label) continue;
    matching.push_back(std::move(e));
  }
  std::sort(matching.begin(), matching.end(), [](const CandidateEntry& a, const CandidateEntry& b) {
    if (a.candidate.confidence != b.candidate.confidence) return a.candidate.confidence > b.candidate.confidence;
    return a.candidate.id < b.candidate.id;
  });
  CandidatePage out;
  out.total = matching.size();
  out.page = page;
  out.page_size = page_size;
  const std::size_t first = (page - 1) * page_size;
  for (std::size_t i = first; i < matching.size() && i < first + page_size; ++i) out.items.push_back(std::move(matching[i]));
  return out;
}

std::optional<CandidateEntry> ReviewSession::get(std::int64_t id) const {
  std::shared_lock lock(mu_);
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  CandidateEntry e{candidates_[it->second], ReviewStatus::pending, std::nullopt};
  if (auto d = effective_.find(id); d != effective_.end()) {
    e.decision = d->second;
    e.status = d->second.verdict == Verdict::accepted ? ReviewStatus::accepted : ReviewStatus::rejected;
  }
  return e;
}

DecisionAck ReviewSession::post_decision(std::int64_t id, Verdict verdict, const std::string& reviewer,
                                         const std::optional<std::string>& note, std::optional<std::int64_t> timestamp) {
  std::unique_lock lock(mu_);
  if (!index_.count(id)) throw Error("review: unknown candidate id " + std::to_string(id));
  ReviewDecision d;
  d.id = id;
  d.verdict = verdict;
  d.reviewer = reviewer;
  d.note = note;
  d.timestamp = timestamp ? *timestamp
                          : std::chrono::duration_cast<std::chrono::seconds>(
                                std::chrono::system_clock::now().time_since_epoch())
                                .count();
  DecisionAck ack{id, verdict, false, false};
  if (auto it = effective_.find(id); it != effective_.end()) {
    if (it->second.same_payload(d)) return ack;
    ack.superseded = true;
  }
  append_durable(d);
  apply(d);
  ack.appended = true;
  return ack;
}

ReviewStats ReviewSession::stats() const {
  std::shared_lock lock(mu_);
  ReviewStats s;
  s.total = candidates_.size();
  for (const auto& [id, d] : effective_) (d.verdict == Verdict::accepted ? s.accepted : s.rejected)++;
  s.pending = s.total - s.accepted - s.rejected;
  return s;
}

RecordSet ReviewSession::export_verdict(Verdict v) const {
  std::vector<PseudoCandidate> chosen;
  {
    std::shared_lock lock(mu_);
    for (const auto& [id, d] : effective_)
      if (d.verdict == v) chosen.push_back(candidates_[index_.at(id)]);
  }
  return candidates_to_records(chosen, v == Verdict::accepted ? "pseudo_filtered" : "pseudo_rejected");
}

}  // namespace memessl
