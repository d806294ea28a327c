#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mstr/data.hpp"
#include "mstr/model.hpp"
#include "mstr/trainer.hpp"

namespace mstr {

/// Everything a CLI command can be configured with. Keys shared between the
/// data and model sections (input_dim, num_classes, p, levels) are stored once
/// and copied into each section by the accessors below.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t num_seeds = 5;

  SyntheticSpec data;
  MstrConfig model;
  TrainConfig train;

  std::string data_dir = "data";
  std::string checkpoint;
  Split split = Split::kTest;

  std::vector<std::size_t> flops_lengths{81, 162, 324, 648};
  std::vector<std::size_t> sweep_p{2, 3, 4, 5};
  std::vector<std::size_t> sweep_levels{1, 2, 3, 4};

  /// Desk-scale defaults: 8 input features, 3 classes, F=16, 4 heads, one
  /// block, 50 epochs at learning rate 3e-3.
  RunConfig();

  /// Model config with data dims copied in.
  MstrConfig model_config() const;
  /// Train config whose seeds are seed, seed+1, ..., seed+num_seeds-1.
  TrainConfig train_config() const;
  SyntheticSpec data_spec() const;

  /// Throws ConfigError naming the key. Values are parsed strictly.
  void set(std::string_view key, std::string_view value);
  /// Applies a "key=value" string.
  void apply_override(std::string_view assignment);
  /// Reads a flat key=value file; '#' starts a comment, blank lines are skipped.
  void load_file(const std::filesystem::path& path);
  /// Canonical "key = value" listing of every key, one per line.
  std::string dump() const;

  static const std::vector<std::string>& keys();
};

}  // namespace mstr
