#pragma once

// Synthetic confounder meme corpora.
//
// Every meme carries one concept bit per modality: the image marks it in a
// fixed patch of the top-left quadrant (bright = 1, dark = 0), the text
// carries one concept token from the bit's synonym list among filler words.
// Hatefulness is the XOR of the two bits, unless one modality carries a
// unimodal hate marker (a slur token, or a bright patch in the bottom-right
// quadrant), in which case the meme is hateful on that modality alone.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "memessl/corpus.hpp"
#include "memessl/image.hpp"

namespace memessl {

struct SynthSpec {
  std::size_t n_train = 2000;
  std::size_t n_dev = 400;
  std::size_t n_test = 400;
  // Extra splits for the semi-supervised experiment; zero by default.
  std::size_t n_dev_remainder = 0;
  std::size_t n_manual = 0;
  std::size_t n_pool = 0;
  std::size_t n_pool_irregular_text = 0;
  std::size_t n_pool_irregular_size = 0;
  // multimodal_hate, unimodal_hate, benign_text_confounder,
  // benign_image_confounder, random_nonhateful
  std::array<double, kNumCategories> mix{0.4, 0.1, 0.2, 0.2, 0.1};
  std::array<double, kNumCategories> pool_mix{0.4, 0.1, 0.2, 0.2, 0.1};
  int image_height = 8;
  int image_width = 8;
  int vocab_size = 64;
  int text_len = 6;
  int n_concepts = 8;
  double noise = 0.1;
  std::uint64_t seed = 0;

  // Throws Error on proportions not summing to 1 (±1e-9) or bad shapes.
  void validate() const;
};

struct SynthImage {
  Image pixels;
  int concept_bit = 0;
  int concept_id = 0;
  bool hate_marker = false;
};

struct SynthTruth {
  int label = 0;
  Category category = Category::random_nonhateful;
  int image_bit = 0;
  int text_bit = 0;
};

struct SynthCorpus {
  RecordSet train, dev, test;
  RecordSet dev_remainder, manual, pool;
  ImageStore images;
  // Ground truth for every record, including the unlabeled pool.
  std::map<std::int64_t, SynthTruth> truth;
};

// Concept-patch geometry shared with the tests and the feature probe.
struct PatchRect {
  int row0, col0, rows, cols;
};
PatchRect concept_patch(int height, int width);
PatchRect marker_patch(int height, int width);

SynthImage render_image(int height, int width, int concept_id, int concept_bit, double noise, std::uint64_t seed,
                        bool hate_marker = false);

// Word lists used for synthetic captions.
std::string concept_word(int bit, int synonym);
std::string slur_word(int k);
std::string filler_word(int k);
inline constexpr int kSynonymsPerBit = 4;
inline constexpr int kSlurWords = 2;

// Largest-remainder apportionment of n over the mix. When the positive
// categories (the first two) carry exactly half the mass, the split is
// label-balanced within one record.
std::array<std::size_t, kNumCategories> category_counts(std::size_t n, const std::array<double, kNumCategories>& mix);

SynthCorpus generate_corpus(const SynthSpec& spec);

// Writes train/dev/test/dev_remainder/manual/pool .jsonl, truth.jsonl and
// the images (at each record's img path) under dir.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);
std::map<std::int64_t, SynthTruth> read_truth(const std::filesystem::path& path);

}  // namespace memessl
