#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace memessl {

// Base for every error the library raises on bad input or corrupt artifacts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seeded random source. The engine is std::mt19937_64; the mappings to
// doubles and bounded integers are fixed here so that streams are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n), n > 0, rejection-sampled.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
// Stable per-item seed derived from a base seed and a key (record id, step...).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key);

std::string trim_ascii(std::string_view s);
std::string lower_ascii(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Little-endian binary helpers shared by the image, feature and checkpoint
// formats.
namespace binio {

void put_u32(std::string& out, std::uint32_t v);
void put_i64(std::string& out, std::int64_t v);
void put_f32(std::string& out, float v);
void put_bytes(std::string& out, std::string_view bytes);

class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}
  std::uint32_t u32();
  std::int64_t i64();
  float f32();
  std::string_view bytes(std::size_t n);
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const;
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace binio

}  // namespace memessl
