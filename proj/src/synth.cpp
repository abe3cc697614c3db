#include "memessl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"
#include "memessl/util.hpp"

namespace memessl {

void SynthSpec::validate() const {
  auto check_mix = [](const std::array<double, kNumCategories>& m, const char* what) {
    double s = 0.0;
    for (double p : m) {
      if (!(p >= 0.0)) throw Error(std::string(what) + ": proportions must be non-negative");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error(std::string(what) + ": proportions sum to " + std::to_string(s) + ", not 1");
  };
  check_mix(mix, "synth mix");
  check_mix(pool_mix, "synth pool_mix");
  if (image_height < 4 || image_width < 4) throw Error("synth: image must be at least 4x4");
  if (text_len < 1) throw Error("synth: text_len must be positive");
  if (n_concepts < 1) throw Error("synth: n_concepts must be positive");
  if (vocab_size < 2 * kSynonymsPerBit + kSlurWords + 2) throw Error("synth: vocab_size too small");
  if (!(noise >= 0.0 && noise < 1.0)) throw Error("synth: noise must lie in [0,1)");
  if (n_pool_irregular_text + n_pool_irregular_size > n_pool)
    throw Error("synth: more irregular pool records than pool records");
}

PatchRect concept_patch(int height, int width) {
  const int rows = std::max(1, height / 4), cols = std::max(1, width / 4);
  return {height / 8, width / 8, rows, cols};
}

PatchRect marker_patch(int height, int width) {
  const int rows = std::max(1, height / 4), cols = std::max(1, width / 4);
  return {height - height / 8 - rows, width - width / 8 - cols, rows, cols};
}

namespace {

bool inside(const PatchRect& p, int r, int c) {
  return r >= p.row0 && r < p.row0 + p.rows && c >= p.col0 && c < p.col0 + p.cols;
}

// Background texture value for a concept, in [0.2, 0.6).
float background(int concept_id, int r, int c) {
  const std::uint64_t h = splitmix64((static_cast<std::uint64_t>(concept_id) << 32) ^ (static_cast<std::uint64_t>(r) << 16) ^
                                     static_cast<std::uint64_t>(c));
  return static_cast<float>(0.2 + 0.4 * (static_cast<double>(h >> 11) * 0x1.0p-53));
}

}  // namespace

SynthImage render_image(int height, int width, int concept_id, int concept_bit, double noise, std::uint64_t seed,
                        bool hate_marker) {
  SynthImage out;
  out.pixels = Image(height, width);
  out.concept_bit = concept_bit;
  out.concept_id = concept_id;
  out.hate_marker = hate_marker;
  const PatchRect cp = concept_patch(height, width);
  const PatchRect mp = marker_patch(height, width);
  Rng rng(seed);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double v;
      if (inside(cp, r, c))
        v = concept_bit ? 1.0 : 0.0;
      else if (hate_marker && inside(mp, r, c))
        v = 1.0;
      else
        v = background(concept_id, r, c);
      if (noise > 0.0) v += rng.uniform(-noise, noise);
      out.pixels.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

std::string concept_word(int bit, int synonym) {
  static const char* kStems[2] = {"calm", "storm"};
  return std::string(kStems[bit & 1]) + std::to_string(synonym);
}
std::string slur_word(int k) { return "slur" + std::to_string(k); }
std::string filler_word(int k) { return "w" + std::to_string(k); }

namespace {

template <std::size_t N>
std::array<std::size_t, N> apportion(std::size_t n, const std::array<double, N>& w) {
  std::array<std::size_t, N> out{};
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (n == 0 || total <= 0.0) return out;
  std::array<double, N> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double exact = static_cast<double>(n) * w[i] / total;
    out[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(out[i]);
    assigned += out[i];
  }
  std::array<std::size_t, N> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b] + 1e-12; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++out[order[k % N]];
  return out;
}

}  // namespace

std::array<std::size_t, kNumCategories> category_counts(std::size_t n, const std::array<double, kNumCategories>& mix) {
  const std::array<double, 2> groups{mix[0] + mix[1], mix[2] + mix[3] + mix[4]};
  const auto g = apportion<2>(n, groups);
  const auto pos = apportion<2>(g[0], std::array<double, 2>{mix[0], mix[1]});
  const auto neg = apportion<3>(g[1], std::array<double, 3>{mix[2], mix[3], mix[4]});
  return {pos[0], pos[1], neg[0], neg[1], neg[2]};
}

namespace {

struct Draft {
  Category category;
  int image_bit;
  int text_bit;
  bool text_slur;
  bool image_marker;
  int label;
};

// Category plan for one split: counts per category, bits balanced within
// each category, then shuffled.
std::vector<Draft> plan_split(std::size_t n, const std::array<double, kNumCategories>& mix, Rng& rng) {
  const auto counts = category_counts(n, mix);
  std::vector<Draft> drafts;
  drafts.reserve(n);
  for (std::size_t ci = 0; ci < kNumCategories; ++ci) {
    const auto cat = static_cast<Category>(ci);
    std::vector<int> bits(counts[ci]);
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = static_cast<int>(i % 2);
    rng.shuffle(bits);
    std::vector<int> modality(counts[ci]);
    for (std::size_t i = 0; i < modality.size(); ++i) modality[i] = static_cast<int>((i / 2) % 2);
    rng.shuffle(modality);
    for (std::size_t i = 0; i < counts[ci]; ++i) {
      const int a = bits[i];
      Draft d{cat, 0, 0, false, false, 0};
      switch (cat) {
        case Category::multimodal_hate:
          d.image_bit = a;
          d.text_bit = 1 - a;
          d.label = 1;
          break;
        case Category::unimodal_hate:
          d.image_bit = a;
          d.text_bit = static_cast<int>(rng.below(2));
          if (modality[i] == 0)
            d.text_slur = true;
          else
            d.image_marker = true;
          d.label = 1;
          break;
        case Category::benign_text_confounder:
          // hateful pairing (a, 1-a) with the text swapped
          d.image_bit = a;
          d.text_bit = a;
          break;
        case Category::benign_image_confounder:
          // hateful pairing (a, 1-a) with the image swapped
          d.image_bit = 1 - a;
          d.text_bit = 1 - a;
          break;
        case Category::random_nonhateful:
          d.image_bit = a;
          d.text_bit = a;
          break;
      }
      drafts.push_back(d);
    }
  }
  rng.shuffle(drafts);
  return drafts;
}

std::string img_path(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img/%06lld.bin", static_cast<long long>(id));
  return buf;
}


}  // namespace

SynthCorpus generate_corpus(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus corpus;
  const int n_fillers = spec.vocab_size - 2 * kSynonymsPerBit - kSlurWords;
  std::int64_t next_id = 1;

  struct SplitDef {
    std::size_t n;
    Source source;
    bool labeled;
    bool pool;
    RecordSet* out;
    const char* name;
  };
  const SplitDef splits[] = {
      {spec.n_train, Source::hm_train, true, false, &corpus.train, "train"},
      {spec.n_dev, Source::hm_dev_unseen, true, false, &corpus.dev, "dev"},
      {spec.n_test, Source::hm_test_unseen, true, false, &corpus.test, "test"},
      {spec.n_dev_remainder, Source::hm_dev_seen, true, false, &corpus.dev_remainder, "dev_remainder"},
      {spec.n_manual, Source::memotion_manual, true, false, &corpus.manual, "manual"},
      {spec.n_pool, Source::memotion_pool, false, true, &corpus.pool, "pool"},
  };

  std::uint64_t split_index = 0;
  for (const auto& sd : splits) {
    Rng split_rng(derive_seed(spec.seed, 0x5117ULL + split_index++));
    const auto drafts = plan_split(sd.n, sd.pool ? spec.pool_mix : spec.mix, split_rng);
    std::vector<MemeRecord> records;
    records.reserve(drafts.size());
    for (std::size_t i = 0; i < drafts.size(); ++i) {
      const Draft& d = drafts[i];
      const std::int64_t id = next_id++;
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(id)));

      std::vector<std::string> words(static_cast<std::size_t>(spec.text_len));
      for (auto& w : words) w = filler_word(static_cast<int>(rng.below(static_cast<std::uint64_t>(n_fillers))));
      const auto concept_pos = rng.below(static_cast<std::uint64_t>(spec.text_len));
      words[concept_pos] = concept_word(d.text_bit, static_cast<int>(rng.below(kSynonymsPerBit)));
      if (d.text_slur) {
        std::uint64_t slur_pos = rng.below(static_cast<std::uint64_t>(spec.text_len));
        if (spec.text_len > 1)
          while (slur_pos == concept_pos) slur_pos = rng.below(static_cast<std::uint64_t>(spec.text_len));
        words[slur_pos] = slur_word(static_cast<int>(rng.below(kSlurWords)));
      }
      std::string text;
      for (std::size_t k = 0; k < words.size(); ++k) text += (k ? " " : "") + words[k];

      const int concept_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_concepts)));
      int h = spec.image_height, w = spec.image_width;
      if (sd.pool && i >= spec.n_pool_irregular_text && i < spec.n_pool_irregular_text + spec.n_pool_irregular_size) ++h;
      if (sd.pool && i < spec.n_pool_irregular_text) {
        static const char* kIrregular[] = {"", "none", "  ", "None"};
        text = kIrregular[i % 4];
      }
      SynthImage img = render_image(h, w, concept_id, d.image_bit, spec.noise, derive_seed(spec.seed ^ 0x1a6e5ULL, id),
                                    d.image_marker);
      corpus.images.put(id, std::move(img.pixels));
      corpus.truth[id] = {d.label, d.category, d.image_bit, d.text_bit};

      MemeRecord r;
      r.id = id;
      r.img = img_path(id);
      r.text = std::move(text);
      r.source = sd.source;
      if (sd.labeled) {
        r.label = d.label;
        r.category = d.category;
      }
      records.push_back(std::move(r));
    }
    *sd.out = RecordSet(sd.name, std::move(records));
  }
  return corpus;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_metadata(corpus.train, dir / "train.jsonl");
  write_metadata(corpus.dev, dir / "dev.jsonl");
  write_metadata(corpus.test, dir / "test.jsonl");
  write_metadata(corpus.dev_remainder, dir / "dev_remainder.jsonl");
  write_metadata(corpus.manual, dir / "manual.jsonl");
  write_metadata(corpus.pool, dir / "pool.jsonl");
  std::string truth;
  for (const auto& [id, t] : corpus.truth) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["label"] = t.label;
    j["category"] = std::string(to_string(t.category));
    j["image_bit"] = t.image_bit;
    j["text_bit"] = t.text_bit;
    truth += j.dump() + "\n";
  }
  binio::write_file_atomic(dir / "truth.jsonl", truth);
  for (const RecordSet* s : {&corpus.train, &corpus.dev, &corpus.test, &corpus.dev_remainder, &corpus.manual, &corpus.pool})
    for (const auto& r : *s) write_image(corpus.images.get(r.id), dir / r.img);
}

std::map<std::int64_t, SynthTruth> read_truth(const std::filesystem::path& path) {
  std::map<std::int64_t, SynthTruth> out;
  const std::string text = binio::read_file(path);
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (trim_ascii(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SynthTruth t;
      t.label = j.at("label").get<int>();
      const auto cat = parse_category(j.at("category").get<std::string>());
      if (!cat) throw Error("unknown category");
      t.category = *cat;
      t.image_bit = j.at("image_bit").get<int>();
      t.text_bit = j.at("text_bit").get<int>();
      out[j.at("id").get<std::int64_t>()] = t;
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace memessl
