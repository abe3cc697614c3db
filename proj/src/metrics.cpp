#include "memessl/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "memessl/util.hpp"

namespace memessl {

namespace {
void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw Error("metrics: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw Error("metrics: empty input");
}
}  // namespace

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hits += static_cast<int>(scores[i] >= threshold) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of doubled mid-ranks of the positives; ranks are 1-based.
  std::uint64_t pos_rank_x2 = 0, n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t rank_x2 = (i + 1) + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        pos_rank_x2 += rank_x2;
        ++n_pos;
      }
    i = j;
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("auroc: undefined unless both classes are present");
  // 2U = sum(2*rank) - n_pos*(n_pos+1)
  const std::uint64_t u_x2 = pos_rank_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalResult evaluate(std::span<const double> scores, std::span<const int> labels, double threshold) {
  return {accuracy(scores, labels, threshold), auroc(scores, labels), scores.size(), threshold};
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::istringstream in(binio::read_file(path));
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim_ascii(line).empty()) continue;
    auto cols = split(line, ',');
    if (line_no == 1 && !cols.empty() && trim_ascii(cols[0]) == "id") continue;
    if (cols.size() < 2 || cols.size() > 3) throw Error("predictions line " + std::to_string(line_no) + ": expected id,proba,label");
    Prediction p;
    try {
      p.id = std::stoll(trim_ascii(cols[0]));
      p.proba = std::stod(trim_ascii(cols[1]));
      if (!(p.proba >= 0.0 && p.proba <= 1.0))
        throw Error("predictions line " + std::to_string(line_no) + ": proba outside [0,1]");
      if (cols.size() == 3 && !trim_ascii(cols[2]).empty()) {
        const int l = std::stoi(trim_ascii(cols[2]));
        if (l != 0 && l != 1) throw Error("label must be 0 or 1");
        p.label = l;
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(p);
  }
  return out;
}

void write_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path) {
  std::string out = "id,proba,label\n";
  char buf[64];
  for (const auto& p : preds) {
    std::snprintf(buf, sizeof buf, "%.17g", p.proba);
    out += std::to_string(p.id) + "," + buf + "," + (p.label ? std::to_string(*p.label) : std::string()) + "\n";
  }
  binio::write_file_atomic(path, out);
}

EvalResult evaluate(const std::vector<Prediction>& preds, double threshold) {
  std::vector<double> s;
  std::vector<int> l;
  for (const auto& p : preds) {
    if (!p.label) throw Error("evaluate: prediction for id " + std::to_string(p.id) + " has no label");
    s.push_back(p.proba);
    l.push_back(*p.label);
  }
  return evaluate(s, l, threshold);
}

}  // namespace memessl
