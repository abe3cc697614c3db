#include "memessl/pseudo.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "memessl/util.hpp"

namespace memessl {

void Thresholds::validate() const {
  if (!(tau_neg >= 0.0 && tau_neg < tau_pos && tau_pos <= 1.0))
    throw Error("pseudo-label thresholds must satisfy 0 <= tau_neg < tau_pos <= 1");
}

std::vector<PseudoCandidate> filter_pseudo(const std::vector<std::pair<std::int64_t, double>>& pool_probas,
                                           const Thresholds& th, const RecordSet* pool, const std::string& stage) {
  th.validate();
  std::unordered_set<std::int64_t> seen;
  std::vector<PseudoCandidate> out;
  for (const auto& [id, p] : pool_probas) {
    if (!seen.insert(id).second) throw Error("filter_pseudo: duplicate id " + std::to_string(id));
    if (!(p >= 0.0 && p <= 1.0)) throw Error("filter_pseudo: probability outside [0,1] for id " + std::to_string(id));
    int label;
    if (p >= th.tau_pos)
      label = 1;
    else if (p <= th.tau_neg)
      label = 0;
    else
      continue;
    PseudoCandidate c;
    c.id = id;
    c.confidence = p;
    c.assigned_label = label;
    c.stage = stage;
    if (pool != nullptr) {
      const MemeRecord* r = pool->find(id);
      if (r == nullptr) throw Error("filter_pseudo: id " + std::to_string(id) + " not in pool");
      c.text = r->text;
      c.img = r->img;
    }
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

RecordSet candidates_to_records(const std::vector<PseudoCandidate>& candidates, std::string name) {
  std::vector<MemeRecord> recs;
  recs.reserve(candidates.size());
  for (const auto& c : candidates) {
    MemeRecord r;
    r.id = c.id;
    r.img = c.img;
    r.text = c.text;
    r.label = c.assigned_label;
    r.source = Source::pseudo;
    r.confidence = c.confidence;
    recs.push_back(std::move(r));
  }
  return RecordSet(std::move(name), std::move(recs));
}

std::string candidate_to_json(const PseudoCandidate& c) {
  nlohmann::ordered_json j;
  j["id"] = c.id;
  j["img"] = c.img;
  j["text"] = c.text;
  j["confidence"] = c.confidence;
  j["assigned_label"] = c.assigned_label;
  j["stage"] = c.stage;
  return j.dump();
}

PseudoCandidate candidate_from_json(std::string_view line) {
  PseudoCandidate c;
  try {
    const auto j = nlohmann::json::parse(line);
    c.id = j.at("id").get<std::int64_t>();
    c.img = j.value("img", std::string());
    c.text = j.value("text", std::string());
    c.confidence = j.at("confidence").get<double>();
    c.assigned_label = j.at("assigned_label").get<int>();
    c.stage = j.value("stage", std::string("S2_pseudo"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("candidate: ") + e.what());
  }
  if (c.assigned_label != 0 && c.assigned_label != 1) throw Error("candidate: assigned_label must be 0 or 1");
  if (!(c.confidence >= 0.0 && c.confidence <= 1.0)) throw Error("candidate: confidence outside [0,1]");
  return c;
}

void write_candidates(const std::vector<PseudoCandidate>& candidates, const std::filesystem::path& path) {
  std::string out;
  for (const auto& c : candidates) out += candidate_to_json(c) + "\n";
  binio::write_file_atomic(path, out);
}

std::vector<PseudoCandidate> read_candidates(const std::filesystem::path& path) {
  std::istringstream in(binio::read_file(path));
  std::vector<PseudoCandidate> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim_ascii(line).empty()) continue;
    try {
      out.push_back(candidate_from_json(line));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace memessl
