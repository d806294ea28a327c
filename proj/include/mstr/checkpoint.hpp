#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mstr/model.hpp"

namespace mstr {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  MstrConfig config;
  ModelParams<float> params;
};

/// Layout (all integers little-endian):
///   "MSTRCKPT", u16 version,
///   config: u32 input_dim, model_dim, p, levels, heads, blocks, num_classes,
///           d_ff, fc1_width, fc2_width (raw, 0 = derived default),
///           u8 use_positional, f64 dropout_rate, u8 variant (0 mstr, 1 vanilla),
///   tensors in ModelParams::for_each order, each u32 rows, u32 cols, then
///   rows*cols f32 row-major. Nothing follows the last tensor.
std::vector<std::uint8_t> encode_checkpoint(const MstrConfig& config,
                                            const ModelParams<float>& params);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const MstrConfig& config,
                      const ModelParams<float>& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace mstr
