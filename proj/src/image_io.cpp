#include "memessl/image.hpp"

#include "memessl/util.hpp"

namespace memessl {

std::string encode_image(const Image& img) {
  std::string out;
  out.reserve(8 + 4 * img.pixels.size());
  binio::put_u32(out, static_cast<std::uint32_t>(img.height));
  binio::put_u32(out, static_cast<std::uint32_t>(img.width));
  for (float p : img.pixels) binio::put_f32(out, p);
  return out;
}

Image decode_image(std::string_view bytes) {
  binio::Reader rd(bytes, "image");
  const auto h = rd.u32();
  const auto w = rd.u32();
  if (static_cast<std::uint64_t>(h) * w * 4 != rd.remaining())
    throw Error("image: payload size does not match " + std::to_string(h) + "x" + std::to_string(w));
  Image img(static_cast<int>(h), static_cast<int>(w));
  for (auto& p : img.pixels) p = rd.f32();
  return img;
}

void write_image(const Image& img, const std::filesystem::path& path) { binio::write_file_atomic(path, encode_image(img)); }

Image read_image(const std::filesystem::path& path) { return decode_image(binio::read_file(path)); }

const Image* ImageStore::find(std::int64_t id) const {
  auto it = images_.find(id);
  return it == images_.end() ? nullptr : &it->second;
}

const Image& ImageStore::get(std::int64_t id) const {
  const Image* img = find(id);
  if (img == nullptr) throw Error("no image for record id " + std::to_string(id));
  return *img;
}

}  // namespace memessl
