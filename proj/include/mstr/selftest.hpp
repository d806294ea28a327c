#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mstr {

/// Largest |mstr - vanilla| over `cases` random blocks with L=1, p=T
/// (2 <= T <= 64, 1 <= F <= 32, heads a random divisor of F), single precision.
double degeneracy_max_diff(std::size_t cases, std::uint64_t seed);

/// Largest |row sum - 1| of the windowed attention probabilities over every
/// level and head of one random block input.
double attention_row_sum_error(std::size_t T, std::size_t F, std::size_t p, std::size_t L,
                               std::size_t heads, std::uint64_t seed);

/// Perturbs each frame in `frames` and checks that, at every level, only the
/// window holding that frame changes (other windows compared bitwise). Returns
/// an empty string on success, otherwise a description of the first violation.
std::string window_locality_violation(std::size_t T, std::size_t F, std::size_t p, std::size_t L,
                                      std::size_t heads, std::span<const std::size_t> frames,
                                      std::uint64_t seed);

/// Largest difference between compute_metrics and a per-sample recount on
/// `n` random prediction/label pairs over `num_classes` classes.
double metrics_recount_max_diff(std::size_t n, std::size_t num_classes, std::uint64_t seed);

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Every library invariant that runs in a few seconds. Files are written
/// under `scratch_dir`.
std::vector<PropertyResult> run_property_suite(const std::filesystem::path& scratch_dir);

std::string property_table(std::span<const PropertyResult> results);

}  // namespace mstr
