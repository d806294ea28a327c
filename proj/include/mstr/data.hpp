#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "mstr/tensor.hpp"

namespace mstr {

/// Recipe for the synthetic multi-scale classification task. Class c hides a
/// template spanning pattern_scales[c] frames somewhere in a noisy sequence.
///
/// Templates are a single feature-space direction modulated over time. A
/// one-frame template is an impulse; longer templates are random mixes of the
/// two lowest zero-mean cosine modes over their span, so their content only
/// stands out once roughly scale/3 frames are averaged together. Every
/// template carries the same total energy.
struct SyntheticSpec {
  std::size_t num_classes = 3;
  std::size_t min_len = 60;
  std::size_t max_len = 81;
  std::size_t input_dim = 8;
  std::vector<std::size_t> pattern_scales{1, 9, 27};
  double noise_std = 0.5;
  std::size_t samples_per_class = 125;
  /// Sum of squares of each template.
  double signal_energy = 28.0;
  /// Orthonormal per-class directions; otherwise all classes share one
  /// direction and differ only in temporal extent.
  bool orthogonal_templates = false;

  void validate() const;
};

struct Sample {
  Tensor<float> features;  // padded to a multiple of p^L, zero rows past valid_len
  std::size_t valid_len = 0;
  std::size_t label = 0;
  std::size_t id = 0;
};

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t input_dim = 0;
  std::vector<Sample> train, val, test;

  const std::vector<Sample>& split(Split s) const;
  std::vector<Sample>& split(Split s);
};

struct PaddedFeatures {
  Tensor<float> features;
  std::size_t valid_len = 0;
};

/// Appends zero rows up to the least multiple of `multiple`.
PaddedFeatures pad_to_length_multiple(const Tensor<float>& features, std::size_t multiple);

/// pad_to_length_multiple with multiple = p^L.
PaddedFeatures pad_to_multiple(const Tensor<float>& features, std::size_t p, std::size_t levels);

/// The per-class templates (pattern_scales[c] x input_dim) that
/// generate_synthetic_dataset injects for `seed`.
std::vector<Tensor<float>> make_templates(const SyntheticSpec& spec, std::uint64_t seed);

/// Deterministic in (spec, seed, p, L); 8:1:1 split per class. Ids run over
/// train, then val, then test.
Dataset generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed, std::size_t p,
                                   std::size_t levels);

// MSF1 feature files: "MSF1", u32 T, u32 F, T*F little-endian f32 row-major.
std::vector<std::uint8_t> encode_feature_file(const Tensor<float>& features);
Tensor<float> decode_feature_file(std::span<const std::uint8_t> bytes);
void write_feature_file(const std::filesystem::path& path, const Tensor<float>& features);
Tensor<float> read_feature_file(const std::filesystem::path& path);

/// Writes {train,val,test}/manifest.csv plus one MSF1 file per sample holding
/// only the valid (unpadded) frames.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

/// Reads a dataset directory and pads every sample for (p, L). Rows are taken
/// in path order, so the result does not depend on manifest row order.
Dataset load_dataset(const std::filesystem::path& dir, std::size_t p, std::size_t levels);

/// Positions into `samples`, grouped into batches. Samples are ordered by id
/// and then shuffled by `shuffle_seed`; the last batch may be partial.
std::vector<std::vector<std::size_t>> batch_iter(std::span<const Sample> samples,
                                                 std::size_t batch_size,
                                                 std::uint64_t shuffle_seed);

}  // namespace mstr
