#include "memessl/checkpoint.hpp"

#include <bit>

#include "memessl/util.hpp"

namespace memessl {

namespace {
constexpr char kMagic[4] = {'M', 'S', 'C', 'K'};
}

std::string encode_checkpoint(const FusionConfig& cfg, const FusionParams& params) {
  std::string out;
  binio::put_bytes(out, std::string_view(kMagic, 4));
  binio::put_u32(out, kCheckpointVersion);
  for (int v : {cfg.vocab_size, cfg.max_text_len, cfg.regions, cfg.region_dim, cfg.d_model, cfg.n_heads, cfg.n_layers,
                cfg.d_ff, cfg.n_classes, static_cast<int>(cfg.modality)})
    binio::put_u32(out, static_cast<std::uint32_t>(v));
  binio::put_i64(out, std::bit_cast<std::int64_t>(cfg.dropout_rate));

  std::uint32_t count = 0;
  params.visit([&count](const std::string&, const Matrix&, bool) { ++count; });
  binio::put_u32(out, count);
  params.visit([&out](const std::string& name, const Matrix& m, bool) {
    binio::put_u32(out, static_cast<std::uint32_t>(name.size()));
    binio::put_bytes(out, name);
    binio::put_u32(out, 2);
    binio::put_u32(out, static_cast<std::uint32_t>(m.rows));
    binio::put_u32(out, static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) binio::put_f32(out, static_cast<float>(v));
  });
  binio::put_u32(out, binio::crc32(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 12) throw Error("checkpoint: file too short");
  const auto body = bytes.substr(0, bytes.size() - 4);
  binio::Reader tail(bytes.substr(bytes.size() - 4), "checkpoint");
  if (tail.u32() != binio::crc32(body)) throw Error("checkpoint: checksum mismatch");
  binio::Reader rd(body, "checkpoint");
  if (rd.bytes(4) != std::string_view(kMagic, 4)) throw Error("checkpoint: bad magic");
  if (const auto v = rd.u32(); v != kCheckpointVersion) throw Error("checkpoint: unsupported version " + std::to_string(v));

  Checkpoint ck;
  FusionConfig& c = ck.config;
  for (int* f : {&c.vocab_size, &c.max_text_len, &c.regions, &c.region_dim, &c.d_model, &c.n_heads, &c.n_layers, &c.d_ff,
                 &c.n_classes})
    *f = static_cast<int>(rd.u32());
  const auto modality = rd.u32();
  if (modality > 2) throw Error("checkpoint: bad modality");
  c.modality = static_cast<Modality>(modality);
  c.dropout_rate = std::bit_cast<double>(rd.i64());
  c.validate();

  ck.params = FusionParams::zeros(c);
  const auto count = rd.u32();
  std::uint32_t expected = 0;
  ck.params.visit([&expected](const std::string&, const Matrix&, bool) { ++expected; });
  if (count != expected) throw Error("checkpoint: expected " + std::to_string(expected) + " tensors, found " + std::to_string(count));
  ck.params.visit([&rd](const std::string& name, Matrix& m, bool) {
    const auto len = rd.u32();
    const auto stored = rd.bytes(len);
    if (stored != name) throw Error("checkpoint: expected tensor '" + name + "', found '" + std::string(stored) + "'");
    if (rd.u32() != 2) throw Error("checkpoint: tensor '" + name + "' is not rank 2");
    const auto rows = rd.u32(), cols = rd.u32();
    if (rows != static_cast<std::uint32_t>(m.rows) || cols != static_cast<std::uint32_t>(m.cols))
      throw Error("checkpoint: tensor '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols));
    for (double& v : m.data) v = rd.f32();
  });
  if (rd.remaining() != 0) throw Error("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const FusionConfig& cfg, const FusionParams& params) {
  binio::write_file_atomic(path, encode_checkpoint(cfg, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(binio::read_file(path)); }

}  // namespace memessl
