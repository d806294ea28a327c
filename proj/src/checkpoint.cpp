#include "mstr/checkpoint.hpp"

#include <limits>
#include <string>

#include "binary_io.hpp"

namespace mstr {
namespace {

constexpr std::string_view kMagic = "MSTRCKPT";

std::uint32_t narrow(std::size_t v, const char* field) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError(std::string("checkpoint field ") + field + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const MstrConfig& config,
                                            const ModelParams<float>& params) {
  detail::ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u16(kCheckpointVersion);
  w.put_u32(narrow(config.input_dim, "input_dim"));
  w.put_u32(narrow(config.model_dim, "model_dim"));
  w.put_u32(narrow(config.p, "p"));
  w.put_u32(narrow(config.levels, "levels"));
  w.put_u32(narrow(config.heads, "heads"));
  w.put_u32(narrow(config.blocks, "blocks"));
  w.put_u32(narrow(config.num_classes, "num_classes"));
  w.put_u32(narrow(config.d_ff, "d_ff"));
  w.put_u32(narrow(config.fc1_width, "fc1_width"));
  w.put_u32(narrow(config.fc2_width, "fc2_width"));
  w.put_u8(config.use_positional ? 1 : 0);
  w.put_f64(config.dropout_rate);
  w.put_u8(static_cast<std::uint8_t>(config.variant));
  params.for_each([&w](const Tensor<float>& t) {
    w.put_u32(narrow(t.rows(), "rows"));
    w.put_u32(narrow(t.cols(), "cols"));
    for (float x : t.values()) w.put_f32(x);
  });
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kMagic, "MSTRCKPT checkpoint");
  const auto version_at = r.offset();
  const auto version = r.u16("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  MstrConfig c;
  c.input_dim = r.u32("input_dim");
  c.model_dim = r.u32("model_dim");
  c.p = r.u32("p");
  c.levels = r.u32("levels");
  c.heads = r.u32("heads");
  c.blocks = r.u32("blocks");
  c.num_classes = r.u32("num_classes");
  c.d_ff = r.u32("d_ff");
  c.fc1_width = r.u32("fc1_width");
  c.fc2_width = r.u32("fc2_width");
  c.use_positional = r.u8("use_positional") != 0;
  c.dropout_rate = r.f64("dropout_rate");
  const auto variant_at = r.offset();
  const auto variant = r.u8("variant");
  if (variant > 1) throw FormatError("unknown variant tag " + std::to_string(variant), variant_at);
  c.variant = static_cast<Variant>(variant);
  const auto config_end = r.offset();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint carries an invalid config: ") + e.what(), config_end);
  }

  // Shapes come from the config; the stored dims must agree with them.
  Checkpoint ck{c, init_params<float>(c, 0)};
  std::size_t index = 0;
  ck.params.for_each([&](Tensor<float>& t) {
    const auto at = r.offset();
    const auto rows = r.u32("tensor rows");
    const auto cols = r.u32("tensor cols");
    if (rows != t.rows() || cols != t.cols()) {
      throw FormatError("tensor " + std::to_string(index) + " has shape " +
                            shape_string(rows, cols) + ", config implies " + t.shape(),
                        at);
    }
    r.require(static_cast<std::uint64_t>(rows) * cols * 4,
              "tensor " + std::to_string(index) + " payload");
    for (auto& x : t.values()) x = r.f32("tensor value");
    ++index;
  });
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after the last tensor", r.offset());
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const MstrConfig& config,
                      const ModelParams<float>& params) {
  detail::write_file_bytes(path, encode_checkpoint(config, params));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path));
}

}  // namespace mstr
