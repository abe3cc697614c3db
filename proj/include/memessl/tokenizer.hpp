#pragma once

// Whitespace tokenizer over a closed vocabulary built from training text.

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memessl/corpus.hpp"

namespace memessl {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kNumSpecial = 4;

  Vocabulary();
  // Most frequent words first (ties broken lexicographically), truncated so
  // that specials + words <= capacity.
  static Vocabulary build(const std::vector<const RecordSet*>& sets, int capacity);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view word) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  // Lowercased whitespace split, OOV -> kUnk, truncated to max_len.
  std::vector<int> encode(std::string_view text, int max_len) const;

  void write(const std::filesystem::path& path) const;
  static Vocabulary read(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace memessl
