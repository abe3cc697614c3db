#pragma once

// Grid-pooled region features and the persistent feature store.
//
// Each image is cut into a rows x cols grid (K = rows*cols regions). Region
// vector layout, D_v slots:
//   [0] mean  [1] min  [2] max  [3] std  [4..7] 2x2 sub-block means
//   [8] row centre  [9] col centre  [10..] one-hot region index (as many as
//   fit), remaining slots zero.
//
// Store file: "MSFS" magic, u32 version, u32 K, u32 D_v, u32 count, then per
// record i64 id + K*D_v f32, then u32 CRC-32 of all preceding bytes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "memessl/corpus.hpp"
#include "memessl/image.hpp"

namespace memessl {

inline constexpr int kValueSlots = 8;
inline constexpr int kPositionSlot = 8;

struct FeatureConfig {
  int image_height = 8;
  int image_width = 8;
  int grid_rows = 2;
  int grid_cols = 2;
  int dim = 16;  // D_v

  int regions() const { return grid_rows * grid_cols; }
  void validate() const;
};

struct RegionFeatures {
  std::int64_t id = 0;
  int regions = 0;  // K
  int dim = 0;      // D_v
  std::vector<float> values;  // K x D_v row-major

  float at(int k, int d) const { return values[static_cast<std::size_t>(k) * dim + d]; }
  std::span<const float> region(int k) const {
    return {values.data() + static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim)};
  }
  bool operator==(const RegionFeatures&) const = default;
};

struct Skipped {
  std::int64_t id = 0;
  std::string reason;
};

using Extraction = std::variant<RegionFeatures, Skipped>;

// Never throws on image content: wrong size or non-finite pixels yield Skipped.
Extraction extract(std::int64_t id, const Image& image, const FeatureConfig& cfg);

struct FeatureBatch {
  std::vector<RegionFeatures> features;
  std::vector<Skipped> skipped;
};

// Missing images are reported as Skipped as well, so that
// features.size() + skipped.size() == records.size().
FeatureBatch extract_batch(const RecordSet& records, const ImageStore& images, const FeatureConfig& cfg);

// In-memory map of features by record id with file persistence.
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(int regions, int dim) : regions_(regions), dim_(dim) {}

  // Throws Error on shape mismatch or duplicate id.
  void add(RegionFeatures f);
  void add_or_replace(RegionFeatures f);
  bool contains(std::int64_t id) const { return by_id_.count(id) != 0; }
  // Throws Error naming the id when absent.
  const RegionFeatures& get(std::int64_t id) const;
  std::size_t size() const { return by_id_.size(); }
  int regions() const { return regions_; }
  int dim() const { return dim_; }
  std::vector<RegionFeatures> all() const;

  std::string encode() const;
  static FeatureStore decode(std::string_view bytes);
  void write(const std::filesystem::path& path) const;
  static FeatureStore read(const std::filesystem::path& path);

 private:
  int regions_ = 0;
  int dim_ = 0;
  std::map<std::int64_t, RegionFeatures> by_id_;
};

void store_write(const std::vector<RegionFeatures>& features, const std::filesystem::path& path);
RegionFeatures store_read(const std::filesystem::path& path, std::int64_t id);
std::vector<RegionFeatures> store_read_all(const std::filesystem::path& path);

}  // namespace memessl
