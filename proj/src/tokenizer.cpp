#include "memessl/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "memessl/util.hpp"

namespace memessl {

Vocabulary::Vocabulary() : tokens_{"[PAD]", "[UNK]", "[CLS]", "[SEP]"} {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  for (auto& t : tokens) {
    if (v.index_.count(t) && v.index_.at(t) < kNumSpecial) continue;
    if (!v.index_.emplace(t, v.size()).second) throw Error("vocabulary: duplicate token '" + t + "'");
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<const RecordSet*>& sets, int capacity) {
  if (capacity < kNumSpecial) throw Error("vocabulary: capacity below the special-token count");
  std::map<std::string, std::size_t> freq;
  for (const RecordSet* s : sets)
    for (const auto& r : *s)
      for (auto& w : split_ws(lower_ascii(r.text))) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> words(freq.begin(), freq.end());
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (auto& [w, n] : words) {
    if (static_cast<int>(tokens.size()) + kNumSpecial >= capacity) break;
    tokens.push_back(w);
  }
  return from_tokens(std::move(tokens));
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(std::string_view text, int max_len) const {
  std::vector<int> ids;
  for (auto& w : split_ws(lower_ascii(text))) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(id(w));
  }
  return ids;
}

void Vocabulary::write(const std::filesystem::path& path) const {
  std::string out;
  for (std::size_t i = kNumSpecial; i < tokens_.size(); ++i) out += tokens_[i] + "\n";
  binio::write_file_atomic(path, out);
}

Vocabulary Vocabulary::read(const std::filesystem::path& path) {
  std::vector<std::string> tokens;
  std::istringstream in(binio::read_file(path));
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

}  // namespace memessl
