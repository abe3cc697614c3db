#include "memessl/corpus.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>

#include "memessl/util.hpp"

namespace memessl {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, kNumSources> kSourceNames = {
    "hm_train", "hm_dev_seen", "hm_dev_unseen", "hm_test_unseen", "memotion_manual", "memotion_pool", "pseudo"};
constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "multimodal_hate", "unimodal_hate", "benign_text_confounder", "benign_image_confounder", "random_nonhateful"};

}  // namespace

std::string_view to_string(Source s) { return kSourceNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

std::optional<Source> parse_source(std::string_view s) {
  for (std::size_t i = 0; i < kNumSources; ++i)
    if (kSourceNames[i] == s) return static_cast<Source>(i);
  return std::nullopt;
}

std::optional<Category> parse_category(std::string_view s) {
  for (std::size_t i = 0; i < kNumCategories; ++i)
    if (kCategoryNames[i] == s) return static_cast<Category>(i);
  return std::nullopt;
}

RecordSet::RecordSet(std::string name, std::vector<MemeRecord> records)
    : RecordSet(name, std::move(records), 0, {}) {
  ledger_.components = {{name_, records_.size()}};
}

RecordSet::RecordSet(std::string name, std::vector<MemeRecord> records, std::size_t replaced,
                     std::vector<std::pair<std::string, std::size_t>> components)
    : name_(std::move(name)), records_(std::move(records)) {
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!index_.emplace(r.id, i).second)
      throw Error("record set '" + name_ + "': duplicate id " + std::to_string(r.id));
    if (r.confidence.has_value() != (r.source == Source::pseudo))
      throw Error("record set '" + name_ + "': id " + std::to_string(r.id) +
                  " must carry a confidence iff its source is pseudo");
    if (r.label && *r.label != 0 && *r.label != 1)
      throw Error("record set '" + name_ + "': id " + std::to_string(r.id) + " has a non-binary label");
    ++ledger_.by_source[static_cast<std::size_t>(r.source)];
  }
  ledger_.total = records_.size();
  ledger_.replaced = replaced;
  ledger_.components = std::move(components);
}

const MemeRecord* RecordSet::find(std::int64_t id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

bool RecordSet::all_labeled() const {
  for (const auto& r : records_)
    if (!r.label) return false;
  return true;
}

std::vector<std::int64_t> RecordSet::ids() const {
  std::vector<std::int64_t> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

// --- JSONL ---------------------------------------------------------------

std::string to_jsonl_line(const MemeRecord& r) {
  ojson j;
  j["id"] = r.id;
  j["img"] = r.img;
  j["text"] = r.text;
  if (r.label) j["label"] = *r.label;
  j["source"] = std::string(to_string(r.source));
  if (r.category) j["category"] = std::string(to_string(*r.category));
  if (r.confidence) j["confidence"] = *r.confidence;
  return j.dump();
}

std::string to_jsonl(const RecordSet& set) {
  std::string out;
  for (const auto& r : set) {
    out += to_jsonl_line(r);
    out += '\n';
  }
  return out;
}

void write_metadata(const RecordSet& set, const std::filesystem::path& path) {
  binio::write_file_atomic(path, to_jsonl(set));
}

namespace {

MemeRecord parse_record(const ojson& j, Source default_source) {
  if (!j.is_object()) throw Error("line is not a JSON object");
  MemeRecord r;
  if (!j.contains("id") || !j["id"].is_number_integer()) throw Error("missing or non-integer \"id\"");
  r.id = j["id"].get<std::int64_t>();
  if (r.id < 0) throw Error("negative id " + std::to_string(r.id));
  if (!j.contains("img") || !j["img"].is_string()) throw Error("missing or non-string \"img\"");
  r.img = j["img"].get<std::string>();
  if (!j.contains("text") || !j["text"].is_string()) throw Error("missing or non-string \"text\"");
  r.text = j["text"].get<std::string>();
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_number_integer()) throw Error("non-integer \"label\"");
    int l = j["label"].get<int>();
    if (l != 0 && l != 1) throw Error("label must be 0 or 1, got " + std::to_string(l));
    r.label = l;
  }
  r.source = default_source;
  if (j.contains("source")) {
    if (!j["source"].is_string()) throw Error("non-string \"source\"");
    auto s = parse_source(j["source"].get<std::string>());
    if (!s) throw Error("unknown source \"" + j["source"].get<std::string>() + "\"");
    r.source = *s;
  }
  if (j.contains("category") && !j["category"].is_null()) {
    if (!j["category"].is_string()) throw Error("non-string \"category\"");
    auto c = parse_category(j["category"].get<std::string>());
    if (!c) throw Error("unknown category \"" + j["category"].get<std::string>() + "\"");
    r.category = *c;
  }
  if (j.contains("confidence") && !j["confidence"].is_null()) {
    if (!j["confidence"].is_number()) throw Error("non-numeric \"confidence\"");
    double c = j["confidence"].get<double>();
    if (!(c >= 0.0 && c <= 1.0)) throw Error("confidence outside [0,1]");
    r.confidence = c;
  }
  if (r.confidence.has_value() != (r.source == Source::pseudo))
    throw Error("confidence must be present iff source is pseudo");
  return r;
}

}  // namespace

MemeRecord record_from_json_line(std::string_view line) {
  ojson j = ojson::parse(line);
  return parse_record(j, Source::hm_train);
}

IngestResult ingest_metadata_text(std::string_view jsonl, bool expect_labels, const IngestOptions& opts) {
  IngestResult result;
  std::vector<MemeRecord> records;
  std::unordered_map<std::int64_t, std::size_t> first_line;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim_ascii(line).empty()) continue;
    MemeRecord r;
    try {
      r = parse_record(ojson::parse(line), opts.default_source);
    } catch (const std::exception& e) {
      result.errors.push_back({line_no, e.what()});
      continue;
    }
    if (auto [it, fresh] = first_line.emplace(r.id, line_no); !fresh)
      throw Error("duplicate id " + std::to_string(r.id) + " (lines " + std::to_string(it->second) + " and " +
                  std::to_string(line_no) + ")");
    if (expect_labels && !r.label)
      throw Error("missing label for id " + std::to_string(r.id) + " on line " + std::to_string(line_no));
    records.push_back(std::move(r));
  }
  result.lines_read = line_no;
  result.set = RecordSet(opts.name, std::move(records));
  return result;
}

IngestResult ingest_metadata(const std::filesystem::path& path, bool expect_labels, const IngestOptions& opts) {
  if (!std::filesystem::exists(path)) throw Error("metadata file not found: " + path.string());
  IngestOptions o = opts;
  if (o.name.empty()) o.name = path.stem().string();
  return ingest_metadata_text(binio::read_file(path), expect_labels, o);
}

// --- validation / merging ---------------------------------------------------

bool is_irregular_text(std::string_view text) {
  std::string t = lower_ascii(trim_ascii(text));
  return t.empty() || t == "none";
}

TextValidation validate_text(const RecordSet& set) {
  std::vector<MemeRecord> kept, rejected;
  for (const auto& r : set) (is_irregular_text(r.text) ? rejected : kept).push_back(r);
  return {RecordSet(set.name(), std::move(kept)), RecordSet(set.name() + ":rejected", std::move(rejected))};
}

RecordSet merge(const RecordSet& base, const RecordSet& additions, MergePolicy policy, std::string name) {
  if (name.empty()) name = base.name();
  std::vector<MemeRecord> out = base.records();
  std::unordered_map<std::int64_t, std::size_t> pos;
  pos.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) pos.emplace(out[i].id, i);

  std::size_t replacements = 0;
  for (const auto& r : additions) {
    auto it = pos.find(r.id);
    if (it == pos.end()) {
      pos.emplace(r.id, out.size());
      out.push_back(r);
    } else if (policy == MergePolicy::error_on_dup) {
      throw Error("merge '" + base.name() + "' + '" + additions.name() + "': id collision on " + std::to_string(r.id));
    } else {
      out[it->second] = r;
      ++replacements;
    }
  }
  auto components = base.ledger().components;
  if (!additions.empty())
    for (const auto& c : additions.ledger().components) components.push_back(c);
  return RecordSet(std::move(name), std::move(out),
                   base.ledger().replaced + additions.ledger().replaced + replacements, std::move(components));
}

RecordSet compose_training_metadata(const RecordSet& hm_train, const RecordSet& dev_remainder, const RecordSet& manual) {
  for (const RecordSet* s : {&hm_train, &dev_remainder, &manual}) {
    for (const auto& r : *s)
      if (!r.label) throw Error("training metadata: unlabeled record id " + std::to_string(r.id) + " in '" + s->name() + "'");
  }
  RecordSet out = merge(hm_train, dev_remainder, MergePolicy::error_on_dup, "training_metadata");
  return merge(out, manual, MergePolicy::error_on_dup, "training_metadata");
}

}  // namespace memessl
