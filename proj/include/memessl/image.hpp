#pragma once

// Intensity-grid images and their flat binary file format:
//   u32 height, u32 width, then height*width f32 pixels row-major, all
//   little-endian.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace memessl {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  bool operator==(const Image&) const = default;
};

std::string encode_image(const Image& img);
Image decode_image(std::string_view bytes);
void write_image(const Image& img, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

// Images keyed by record id.
class ImageStore {
 public:
  void put(std::int64_t id, Image img) { images_[id] = std::move(img); }
  const Image* find(std::int64_t id) const;
  // Throws Error naming the id when absent.
  const Image& get(std::int64_t id) const;
  bool contains(std::int64_t id) const { return images_.count(id) != 0; }
  std::size_t size() const { return images_.size(); }
  auto begin() const { return images_.begin(); }
  auto end() const { return images_.end(); }

 private:
  std::map<std::int64_t, Image> images_;
};

}  // namespace memessl
