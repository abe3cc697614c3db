#pragma once

// Checkpoint file:
//   "MSCK" magic, u32 format version,
//   FusionConfig: u32 vocab_size, max_text_len, regions, region_dim, d_model,
//     n_heads, n_layers, d_ff, n_classes, modality; f64 dropout_rate (as
//     raw little-endian bits),
//   u32 tensor count, then per tensor: u32 name length, name bytes, u32 rank,
//     u32 dims..., little-endian f32 values,
//   u32 CRC-32 of all preceding bytes.
// Parameters are held in double precision in memory and rounded to f32 on
// save.

#include <filesystem>
#include <string>
#include <string_view>

#include "memessl/model.hpp"

namespace memessl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  FusionConfig config;
  FusionParams params;
};

std::string encode_checkpoint(const FusionConfig& cfg, const FusionParams& params);
// Throws Error on bad magic, version, shape mismatch or checksum failure.
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const FusionConfig& cfg, const FusionParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace memessl
