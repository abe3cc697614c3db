#include <cmath>
#include <limits>

#include "doctest.h"
#include "memessl/features.hpp"
#include "memessl/util.hpp"
#include "test_support.hpp"

using namespace memessl;
using memessl::testing::TempDir;

namespace {

RegionFeatures features_of(std::int64_t id, float base) {
  Image img(8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) img.at(r, c) = base + 0.01f * static_cast<float>(r * 8 + c);
  return std::get<RegionFeatures>(extract(id, img, FeatureConfig{}));
}

}  // namespace

TEST_CASE("region layout on a constant image") {
  const Image img(8, 8, 0.25f);
  const auto f = std::get<RegionFeatures>(extract(3, img, FeatureConfig{}));
  CHECK(f.regions == 4);
  CHECK(f.dim == 16);
  for (int k = 0; k < 4; ++k) {
    for (int d = 0; d < 8; ++d) CHECK(f.at(k, d) == doctest::Approx(d == 3 ? 0.0 : 0.25));
    CHECK(f.at(k, 8) == doctest::Approx((k / 2 + 0.5) / 2));
    CHECK(f.at(k, 9) == doctest::Approx((k % 2 + 0.5) / 2));
    for (int d = 10; d < 16; ++d) CHECK(f.at(k, d) == (d == 10 + k ? 1.0f : 0.0f));
  }
}

TEST_CASE("region statistics on a gradient image") {
  Image img(8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) img.at(r, c) = static_cast<float>(r * 8 + c) / 64.0f;
  const auto f = std::get<RegionFeatures>(extract(1, img, FeatureConfig{}));
  // region 3 = rows 4..7, cols 4..7
  CHECK(f.at(3, 1) == doctest::Approx(36.0 / 64));
  CHECK(f.at(3, 2) == doctest::Approx(63.0 / 64));
  double mean = 0;
  for (int r = 4; r < 8; ++r)
    for (int c = 4; c < 8; ++c) mean += (r * 8 + c) / 64.0;
  CHECK(f.at(3, 0) == doctest::Approx(mean / 16));
  // top-left sub-block of region 0: rows 0..1, cols 0..1
  CHECK(f.at(0, 4) == doctest::Approx((0 + 1 + 8 + 9) / 64.0 / 4));
}

TEST_CASE("irregular images are skipped, never thrown") {
  FeatureConfig fc;
  const auto a = extract(1, Image(9, 8), fc);
  REQUIRE(std::holds_alternative<Skipped>(a));
  CHECK(std::get<Skipped>(a).reason.find("irregular size") != std::string::npos);
  Image nan(8, 8, 0.5f);
  nan.at(2, 2) = std::numeric_limits<float>::quiet_NaN();
  CHECK(std::holds_alternative<Skipped>(extract(2, nan, fc)));
  Image broken(8, 8);
  broken.pixels.pop_back();
  CHECK(std::holds_alternative<Skipped>(extract(3, broken, fc)));
}

TEST_CASE("batch extraction accounts for every record") {
  std::vector<MemeRecord> v;
  ImageStore images;
  for (int i = 1; i <= 6; ++i) {
    v.push_back(memessl::testing::labeled(i, 0));
    if (i == 4) continue;  // missing
    images.put(i, Image(i == 5 ? 7 : 8, 8, 0.5f));
  }
  const FeatureBatch b = extract_batch(RecordSet("s", v), images, FeatureConfig{});
  CHECK(b.features.size() == 4);
  CHECK(b.skipped.size() == 2);
  CHECK(b.features.size() + b.skipped.size() == 6);
}

TEST_CASE("feature config validation") {
  FeatureConfig fc;
  fc.dim = 9;
  CHECK_THROWS_AS(fc.validate(), Error);
  FeatureConfig g;
  g.grid_rows = 8;
  CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("store round trip in memory and on disk") {
  FeatureStore s(4, 16);
  for (int i = 1; i <= 5; ++i) s.add(features_of(i, 0.1f * static_cast<float>(i)));
  const FeatureStore d = FeatureStore::decode(s.encode());
  CHECK(d.size() == 5);
  for (int i = 1; i <= 5; ++i) CHECK(d.get(i) == s.get(i));
  TempDir dir;
  s.write(dir / "f.bin");
  CHECK(FeatureStore::read(dir / "f.bin").get(3) == s.get(3));
  CHECK(store_read(dir / "f.bin", 2) == s.get(2));
  CHECK(store_read_all(dir / "f.bin").size() == 5);
  CHECK_THROWS_AS((void)store_read(dir / "f.bin", 99), Error);
}

TEST_CASE("store rejects corruption, duplicates and shape mismatch") {
  FeatureStore s(4, 16);
  s.add(features_of(1, 0.0f));
  CHECK_THROWS_AS(s.add(features_of(1, 0.5f)), Error);
  CHECK_NOTHROW(s.add_or_replace(features_of(1, 0.5f)));
  CHECK(s.get(1) == features_of(1, 0.5f));
  RegionFeatures wrong = features_of(2, 0.0f);
  wrong.dim = 8;
  wrong.values.resize(32);
  CHECK_THROWS_AS(s.add(wrong), Error);
  CHECK_THROWS_AS((void)s.get(42), Error);

  std::string bytes = s.encode();
  std::string flipped = bytes;
  flipped[30] = static_cast<char>(flipped[30] ^ 0x40);
  CHECK_THROWS_WITH_AS((void)FeatureStore::decode(flipped), doctest::Contains("checksum"), Error);
  CHECK_THROWS_AS((void)FeatureStore::decode(bytes.substr(0, 10)), Error);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS((void)FeatureStore::decode(magic), Error);
}
