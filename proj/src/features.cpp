#include "memessl/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "memessl/util.hpp"

namespace memessl {

void FeatureConfig::validate() const {
  if (grid_rows < 1 || grid_cols < 1) throw Error("features: grid layout must be positive");
  if (image_height / grid_rows < 2 || image_width / grid_cols < 2)
    throw Error("features: grid cells must be at least 2x2 pixels");
  if (dim < kPositionSlot + 2) throw Error("features: dim must be at least " + std::to_string(kPositionSlot + 2));
}

namespace {

struct Block {
  int r0, r1, c0, c1;
};

double block_mean(const Image& img, const Block& b) {
  double s = 0.0;
  for (int r = b.r0; r < b.r1; ++r)
    for (int c = b.c0; c < b.c1; ++c) s += img.at(r, c);
  return s / static_cast<double>((b.r1 - b.r0) * (b.c1 - b.c0));
}

}  // namespace

Extraction extract(std::int64_t id, const Image& image, const FeatureConfig& cfg) {
  if (image.height != cfg.image_height || image.width != cfg.image_width)
    return Skipped{id, "irregular size " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                           ", expected " + std::to_string(cfg.image_height) + "x" + std::to_string(cfg.image_width)};
  if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width)
    return Skipped{id, "pixel buffer does not match dimensions"};
  for (float p : image.pixels)
    if (!std::isfinite(p)) return Skipped{id, "non-finite pixel"};

  RegionFeatures out;
  out.id = id;
  out.regions = cfg.regions();
  out.dim = cfg.dim;
  out.values.assign(static_cast<std::size_t>(out.regions) * out.dim, 0.0f);

  for (int gr = 0; gr < cfg.grid_rows; ++gr) {
    for (int gc = 0; gc < cfg.grid_cols; ++gc) {
      const int k = gr * cfg.grid_cols + gc;
      const Block b{gr * image.height / cfg.grid_rows, (gr + 1) * image.height / cfg.grid_rows,
                    gc * image.width / cfg.grid_cols, (gc + 1) * image.width / cfg.grid_cols};
      double lo = image.at(b.r0, b.c0), hi = lo;
      for (int r = b.r0; r < b.r1; ++r)
        for (int c = b.c0; c < b.c1; ++c) {
          lo = std::min<double>(lo, image.at(r, c));
          hi = std::max<double>(hi, image.at(r, c));
        }
      const double mean = block_mean(image, b);
      double var = 0.0;
      for (int r = b.r0; r < b.r1; ++r)
        for (int c = b.c0; c < b.c1; ++c) var += (image.at(r, c) - mean) * (image.at(r, c) - mean);
      var /= static_cast<double>((b.r1 - b.r0) * (b.c1 - b.c0));
      const int rm = b.r0 + (b.r1 - b.r0) / 2, cm = b.c0 + (b.c1 - b.c0) / 2;

      float* v = out.values.data() + static_cast<std::size_t>(k) * out.dim;
      v[0] = static_cast<float>(mean);
      v[1] = static_cast<float>(lo);
      v[2] = static_cast<float>(hi);
      v[3] = static_cast<float>(std::sqrt(var));
      v[4] = static_cast<float>(block_mean(image, {b.r0, rm, b.c0, cm}));
      v[5] = static_cast<float>(block_mean(image, {b.r0, rm, cm, b.c1}));
      v[6] = static_cast<float>(block_mean(image, {rm, b.r1, b.c0, cm}));
      v[7] = static_cast<float>(block_mean(image, {rm, b.r1, cm, b.c1}));
      v[kPositionSlot] = static_cast<float>((gr + 0.5) / cfg.grid_rows);
      v[kPositionSlot + 1] = static_cast<float>((gc + 0.5) / cfg.grid_cols);
      if (kPositionSlot + 2 + k < out.dim) v[kPositionSlot + 2 + k] = 1.0f;
    }
  }
  return out;
}

FeatureBatch extract_batch(const RecordSet& records, const ImageStore& images, const FeatureConfig& cfg) {
  cfg.validate();
  FeatureBatch batch;
  for (const auto& r : records) {
    const Image* img = images.find(r.id);
    if (img == nullptr) {
      batch.skipped.push_back({r.id, "missing image"});
      continue;
    }
    auto e = extract(r.id, *img, cfg);
    if (auto* f = std::get_if<RegionFeatures>(&e))
      batch.features.push_back(std::move(*f));
    else
      batch.skipped.push_back(std::get<Skipped>(std::move(e)));
  }
  return batch;
}

// --- store ---------------------------------------------------------------

void FeatureStore::add(RegionFeatures f) {
  if (by_id_.count(f.id)) throw Error("feature store: duplicate id " + std::to_string(f.id));
  add_or_replace(std::move(f));
}

void FeatureStore::add_or_replace(RegionFeatures f) {
  if (by_id_.empty() && regions_ == 0 && dim_ == 0) {
    regions_ = f.regions;
    dim_ = f.dim;
  }
  if (f.regions != regions_ || f.dim != dim_ || f.values.size() != static_cast<std::size_t>(regions_) * dim_)
    throw Error("feature store: shape mismatch for id " + std::to_string(f.id));
  by_id_[f.id] = std::move(f);
}

const RegionFeatures& FeatureStore::get(std::int64_t id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error("feature store: missing id " + std::to_string(id));
  return it->second;
}

std::vector<RegionFeatures> FeatureStore::all() const {
  std::vector<RegionFeatures> out;
  out.reserve(by_id_.size());
  for (const auto& [id, f] : by_id_) out.push_back(f);
  return out;
}

namespace {
constexpr char kMagic[4] = {'M', 'S', 'F', 'S'};
constexpr std::uint32_t kStoreVersion = 1;
}  // namespace

std::string FeatureStore::encode() const {
  std::string out;
  binio::put_bytes(out, std::string_view(kMagic, 4));
  binio::put_u32(out, kStoreVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(regions_));
  binio::put_u32(out, static_cast<std::uint32_t>(dim_));
  binio::put_u32(out, static_cast<std::uint32_t>(by_id_.size()));
  for (const auto& [id, f] : by_id_) {
    binio::put_i64(out, id);
    for (float v : f.values) binio::put_f32(out, v);
  }
  binio::put_u32(out, binio::crc32(out));
  return out;
}

FeatureStore FeatureStore::decode(std::string_view bytes) {
  if (bytes.size() < 24) throw Error("feature store: file too short");
  const auto body = bytes.substr(0, bytes.size() - 4);
  binio::Reader tail(bytes.substr(bytes.size() - 4), "feature store");
  if (tail.u32() != binio::crc32(body)) throw Error("feature store: checksum mismatch");
  binio::Reader rd(body, "feature store");
  if (rd.bytes(4) != std::string_view(kMagic, 4)) throw Error("feature store: bad magic");
  if (rd.u32() != kStoreVersion) throw Error("feature store: unsupported version");
  const int k = static_cast<int>(rd.u32());
  const int d = static_cast<int>(rd.u32());
  const std::uint32_t count = rd.u32();
  FeatureStore store(k, d);
  for (std::uint32_t i = 0; i < count; ++i) {
    RegionFeatures f;
    f.id = rd.i64();
    f.regions = k;
    f.dim = d;
    f.values.resize(static_cast<std::size_t>(k) * d);
    for (auto& v : f.values) v = rd.f32();
    store.add(std::move(f));
  }
  if (rd.remaining() != 0) throw Error("feature store: trailing bytes");
  return store;
}

void FeatureStore::write(const std::filesystem::path& path) const { binio::write_file_atomic(path, encode()); }

FeatureStore FeatureStore::read(const std::filesystem::path& path) { return decode(binio::read_file(path)); }

void store_write(const std::vector<RegionFeatures>& features, const std::filesystem::path& path) {
  FeatureStore store;
  for (const auto& f : features) store.add(f);
  store.write(path);
}

RegionFeatures store_read(const std::filesystem::path& path, std::int64_t id) { return FeatureStore::read(path).get(id); }

std::vector<RegionFeatures> store_read_all(const std::filesystem::path& path) { return FeatureStore::read(path).all(); }

}  // namespace memessl
