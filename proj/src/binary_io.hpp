#pragma once

// Little-endian byte packing shared by the feature-file and checkpoint codecs.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mstr/errors.hpp"

namespace mstr::detail {

class ByteWriter {
 public:
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_u8(std::uint8_t v) { bytes_.push_back(v); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() noexcept { return std::move(bytes_); }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const noexcept { return offset_; }
  std::uint64_t remaining() const noexcept { return bytes_.size() - offset_; }

  void expect_magic(std::string_view magic, std::string_view format) {
    require(magic.size(), std::string(format) + " magic");
    for (std::size_t i = 0; i < magic.size(); ++i) {
      if (bytes_[offset_ + i] != static_cast<std::uint8_t>(magic[i])) {
        throw FormatError("bad magic: not a " + std::string(format) + " file", offset_ + i);
      }
    }
    offset_ += magic.size();
  }

  std::uint8_t u8(std::string_view what) { return static_cast<std::uint8_t>(le(1, what)); }
  std::uint16_t u16(std::string_view what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(std::string_view what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(std::string_view what) { return le(8, what); }
  float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
  double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

  void require(std::uint64_t n, const std::string& what) const {
    if (remaining() < n) {
      throw FormatError("truncated payload: need " + std::to_string(n) + " bytes for " + what +
                            ", only " + std::to_string(remaining()) + " remain",
                        offset_);
    }
  }

 private:
  std::uint64_t le(int n, std::string_view what) {
    require(static_cast<std::uint64_t>(n), std::string(what));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += static_cast<std::uint64_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::uint64_t offset_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace mstr::detail
