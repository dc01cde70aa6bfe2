#pragma once

#include "protoco/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace protoco {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary layout, all integers and floats little-endian:
//   "PTCO"                     4 bytes
//   version                    u32 (currently 1)
//   config                     7 x u32: vocab_size, d_model, n_heads, d_ff,
//                              n_encoder_layers, n_decoder_layers, max_seq_len
//   tensor count               u32
//   per tensor, sorted by name:
//     name length, name        u32, UTF-8 bytes
//     rank, dims               u32 (= 2), rank x u64
//     payload                  f64 x prod(dims), row-major
//   CRC-32 of all prior bytes  u32
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_model(const Model& model);
// Throws CheckpointError on bad magic, version, checksum, truncation, or a
// vocabulary size different from expected_vocab_size.
Model deserialize_model(std::span<const std::uint8_t> bytes, std::optional<int> expected_vocab_size = std::nullopt);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_vocab_size = std::nullopt);

}  // namespace protoco
