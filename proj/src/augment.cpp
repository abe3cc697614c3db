#include "memessl/augment.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "memessl/util.hpp"

namespace memessl {

CutoutBox cutout_box(int height, int width, double frac, std::uint64_t seed) {
  if (!(frac >= 0.0 && frac <= 1.0)) throw Error("cutout: frac must lie in [0,1]");
  CutoutBox box;
  const long total = static_cast<long>(height) * width;
  box.cells = static_cast<int>(std::lround(frac * static_cast<double>(total)));
  if (box.cells == 0 || height <= 0 || width <= 0) return box;

  int best_h = 0, best_w = 0;
  for (int h = 1; h <= height; ++h) {
    if (box.cells % h) continue;
    const int w = box.cells / h;
    if (w > width) continue;
    if (best_h == 0 || std::abs(h - w) < std::abs(best_h - best_w)) {
      best_h = h;
      best_w = w;
    }
  }
  if (best_h == 0) {
    long best_area = std::numeric_limits<long>::max();
    for (int h = 1; h <= height; ++h) {
      const int w = (box.cells + h - 1) / h;
      if (w > width) continue;
      const long area = static_cast<long>(h) * w;
      if (area < best_area || (area == best_area && std::abs(h - w) < std::abs(best_h - best_w))) {
        best_area = area;
        best_h = h;
        best_w = w;
      }
    }
  }
  box.rows = best_h;
  box.cols = best_w;
  Rng rng(seed);
  box.row0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - best_h + 1)));
  box.col0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - best_w + 1)));
  return box;
}

Image cutout(const Image& image, double frac, float fill, std::uint64_t seed) {
  const CutoutBox box = cutout_box(image.height, image.width, frac, seed);
  Image out = image;
  int left = box.cells;
  for (int r = 0; r < box.rows && left > 0; ++r)
    for (int c = 0; c < box.cols && left > 0; ++c, --left) out.at(box.row0 + r, box.col0 + c) = fill;
  return out;
}

ImageStore augment_set(const RecordSet& records, const ImageStore& images, double frac, float fill, std::uint64_t seed) {
  ImageStore out;
  for (const auto& r : records) {
    const Image* img = images.find(r.id);
    if (img == nullptr) throw Error("augment: no image for record id " + std::to_string(r.id));
    out.put(r.id, cutout(weak_augment(*img), frac, fill, derive_seed(seed, static_cast<std::uint64_t>(r.id))));
  }
  return out;
}

}  // namespace memessl
