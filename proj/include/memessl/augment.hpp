#pragma once

// Strong augmentation for pseudo-labeled records.

#include <cstdint>

#include "memessl/corpus.hpp"
#include "memessl/image.hpp"

namespace memessl {

struct CutoutBox {
  int row0 = 0, col0 = 0, rows = 0, cols = 0;
  int cells = 0;  // filled cells, row-major from the box origin
};

// The masked area is round(frac*H*W) cells. When a rectangle of exactly that
// area fits, the box is the squarest such rectangle; otherwise the smallest
// fitting box is filled row-major up to the required count. Placement is
// uniform over valid origins given seed.
CutoutBox cutout_box(int height, int width, double frac, std::uint64_t seed);
Image cutout(const Image& image, double frac, float fill, std::uint64_t seed);

// Weak-augmentation hook of the pseudo-label step; identity.
inline Image weak_augment(const Image& image) { return image; }

// Cutout for every record, seeded per (seed, id). Throws Error on a missing
// image.
ImageStore augment_set(const RecordSet& records, const ImageStore& images, double frac, float fill, std::uint64_t seed);

inline constexpr double kDefaultCutoutFrac = 0.25;
inline constexpr float kDefaultCutoutFill = 0.0f;

}  // namespace memessl
