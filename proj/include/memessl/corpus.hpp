#pragma once

// Meme metadata model: records, record sets with per-source count ledgers,
// JSONL ingestion/serialization (Hateful Memes field names), text validation
// and auditable merging.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace memessl {

enum class Source { hm_train, hm_dev_seen, hm_dev_unseen, hm_test_unseen, memotion_manual, memotion_pool, pseudo };
inline constexpr std::size_t kNumSources = 7;

enum class Category { multimodal_hate, unimodal_hate, benign_text_confounder, benign_image_confounder, random_nonhateful };
inline constexpr std::size_t kNumCategories = 5;

std::string_view to_string(Source s);
std::string_view to_string(Category c);
std::optional<Source> parse_source(std::string_view s);
std::optional<Category> parse_category(std::string_view s);

struct MemeRecord {
  std::int64_t id = 0;
  std::string img;
  std::string text;
  std::optional<int> label;  // 0 = not hateful, 1 = hateful
  Source source = Source::hm_train;
  std::optional<Category> category;
  std::optional<double> confidence;  // present iff source == pseudo

  bool operator==(const MemeRecord&) const = default;
};

struct CountLedger {
  std::array<std::size_t, kNumSources> by_source{};
  std::size_t total = 0;
  // Records overwritten by replace_on_dup merges over the set's history.
  std::size_t replaced = 0;
  // Named contributions in merge order, e.g. {"hm_train", 8500}.
  std::vector<std::pair<std::string, std::size_t>> components;

  std::size_t count(Source s) const { return by_source[static_cast<std::size_t>(s)]; }
  bool operator==(const CountLedger&) const = default;
};

// Immutable, id-unique ordered collection of records.
class RecordSet {
 public:
  RecordSet() = default;
  // Throws Error on duplicate ids or a confidence/source mismatch.
  RecordSet(std::string name, std::vector<MemeRecord> records);
  RecordSet(std::string name, std::vector<MemeRecord> records, std::size_t replaced,
            std::vector<std::pair<std::string, std::size_t>> components);

  const std::string& name() const { return name_; }
  const std::vector<MemeRecord>& records() const { return records_; }
  const CountLedger& ledger() const { return ledger_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const MemeRecord* find(std::int64_t id) const;
  bool contains(std::int64_t id) const { return find(id) != nullptr; }
  bool all_labeled() const;
  std::vector<std::int64_t> ids() const;

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

 private:
  std::string name_;
  std::vector<MemeRecord> records_;
  std::unordered_map<std::int64_t, std::size_t> index_;
  CountLedger ledger_;
};

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestResult {
  RecordSet set;
  std::vector<LineError> errors;
  std::size_t lines_read = 0;
};

struct IngestOptions {
  // Used when a line carries no "source" key (the public release has none).
  Source default_source = Source::hm_train;
  std::string name;  // defaults to the file stem
};

// Malformed lines land in IngestResult::errors. Missing file, duplicate id and
// (with expect_labels) a missing label throw Error.
IngestResult ingest_metadata(const std::filesystem::path& path, bool expect_labels, const IngestOptions& opts = {});
IngestResult ingest_metadata_text(std::string_view jsonl, bool expect_labels, const IngestOptions& opts = {});

std::string to_jsonl_line(const MemeRecord& r);
std::string to_jsonl(const RecordSet& set);
void write_metadata(const RecordSet& set, const std::filesystem::path& path);
MemeRecord record_from_json_line(std::string_view line);

struct TextValidation {
  RecordSet kept;
  RecordSet rejected;
};

// Text is irregular when, after trimming ASCII whitespace and lowercasing, it
// is empty or equals "none".
bool is_irregular_text(std::string_view text);
TextValidation validate_text(const RecordSet& set);

enum class MergePolicy { error_on_dup, replace_on_dup };

RecordSet merge(const RecordSet& base, const RecordSet& additions, MergePolicy policy, std::string name = {});

// The reliably labeled training metadata: HM train + dev_seen remainder +
// manually picked Memotion records. Throws Error on an unlabeled record or
// an id collision.
RecordSet compose_training_metadata(const RecordSet& hm_train, const RecordSet& dev_remainder, const RecordSet& manual);


}  // namespace memessl
