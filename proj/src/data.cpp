#include "mstr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "binary_io.hpp"

namespace mstr {
namespace {

constexpr std::string_view kFeatureMagic = "MSF1";
constexpr std::uint64_t kTemplateStream = 0x9E3779B97F4A7C15ULL;

std::vector<double> unit_gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (;;) {
    for (auto& x : v) x = dist(rng);
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm > 1e-8) {
      for (auto& x : v) x /= norm;
      return v;
    }
  }
}

std::vector<std::vector<double>> template_directions(const SyntheticSpec& spec,
                                                     std::mt19937_64& rng) {
  const std::size_t d = spec.input_dim;
  std::vector<std::vector<double>> dirs;
  if (!spec.orthogonal_templates) {
    dirs.assign(spec.num_classes, unit_gaussian(d, rng));
    return dirs;
  }
  // Gram-Schmidt over fresh Gaussian draws.
  while (dirs.size() < spec.num_classes) {
    auto v = unit_gaussian(d, rng);
    for (const auto& u : dirs) {
      const double proj = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
      for (std::size_t i = 0; i < d; ++i) v[i] -= proj * u[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

// Unit-energy waveform over `scale` frames. Zero-mean for scale > 1.
std::vector<double> template_waveform(std::size_t scale, std::mt19937_64& rng) {
  if (scale == 1) return {1.0};
  std::normal_distribution<double> dist(0.0, 1.0);
  const std::size_t modes = std::min<std::size_t>(2, scale - 1);
  std::vector<double> w(scale);
  for (;;) {
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t m = 1; m <= modes; ++m) {
      const double amp = dist(rng);
      for (std::size_t t = 0; t < scale; ++t) {
        w[t] += amp * std::cos(std::numbers::pi * static_cast<double>(m) *
                               (static_cast<double>(t) + 0.5) / static_cast<double>(scale));
      }
    }
    const double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
    if (norm > 1e-6) {
      for (auto& x : w) x /= norm;
      return w;
    }
  }
}

}  // namespace

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid synthetic spec: " + msg); };
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (input_dim == 0) fail("input_dim must be >= 1");
  if (pattern_scales.size() != num_classes) {
    fail("pattern_scales lists " + std::to_string(pattern_scales.size()) + " scales for " +
         std::to_string(num_classes) + " classes");
  }
  if (min_len == 0 || min_len > max_len) fail("length range must satisfy 1 <= min_len <= max_len");
  for (auto s : pattern_scales) {
    if (s == 0) fail("pattern scales must be >= 1");
    if (s > min_len) {
      fail("pattern scale " + std::to_string(s) + " does not fit the minimum length " +
           std::to_string(min_len));
    }
  }
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (!(signal_energy >= 0.0)) fail("signal_energy must be >= 0");
  if (samples_per_class == 0) fail("samples_per_class must be >= 1");
  if (orthogonal_templates && input_dim < num_classes) {
    fail("orthogonal templates need input_dim >= num_classes");
  }
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

const std::vector<Sample>& Dataset::split(Split s) const {
  return s == Split::kTrain ? train : s == Split::kVal ? val : test;
}

std::vector<Sample>& Dataset::split(Split s) {
  return s == Split::kTrain ? train : s == Split::kVal ? val : test;
}

PaddedFeatures pad_to_length_multiple(const Tensor<float>& features, std::size_t multiple) {
  if (multiple == 0) throw ConfigError("pad_to_length_multiple: multiple must be >= 1");
  const std::size_t rows = features.rows();
  const std::size_t padded = (rows + multiple - 1) / multiple * multiple;
  if (padded == rows) return {features, rows};
  Tensor<float> out(padded, features.cols());
  std::copy(features.values().begin(), features.values().end(), out.values().begin());
  return {std::move(out), rows};
}

PaddedFeatures pad_to_multiple(const Tensor<float>& features, std::size_t p, std::size_t levels) {
  std::size_t m = 1;
  for (std::size_t i = 0; i < levels; ++i) m *= p;
  return pad_to_length_multiple(features, m);
}

std::vector<Tensor<float>> make_templates(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed ^ kTemplateStream);
  const auto dirs = template_directions(spec, rng);
  const double amplitude = std::sqrt(spec.signal_energy);
  std::vector<Tensor<float>> templates;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const std::size_t scale = spec.pattern_scales[c];
    const auto w = template_waveform(scale, rng);
    Tensor<float> tmpl(scale, spec.input_dim);
    for (std::size_t t = 0; t < scale; ++t)
      for (std::size_t j = 0; j < spec.input_dim; ++j)
        tmpl(t, j) = static_cast<float>(amplitude * w[t] * dirs[c][j]);
    templates.push_back(std::move(tmpl));
  }
  return templates;
}

Dataset generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed, std::size_t p,
                                   std::size_t levels) {
  spec.validate();
  if (p == 0) throw ConfigError("generate_synthetic_dataset: p must be >= 1");
  const auto templates = make_templates(spec, seed);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> length_dist(spec.min_len, spec.max_len);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);

  const std::size_t n = spec.samples_per_class;
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = (n - n_train) / 2;

  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.input_dim = spec.input_dim;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const auto& tmpl = templates[c];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t len = length_dist(rng);
      std::uniform_int_distribution<std::size_t> offset_dist(0, len - tmpl.rows());
      const std::size_t offset = offset_dist(rng);
      Tensor<float> x(len, spec.input_dim);
      if (spec.noise_std > 0.0) {
        for (auto& v : x.values()) v = static_cast<float>(noise(rng));
      }
      for (std::size_t t = 0; t < tmpl.rows(); ++t)
        for (std::size_t j = 0; j < spec.input_dim; ++j) x(offset + t, j) += tmpl(t, j);
      auto padded = pad_to_multiple(x, p, levels);
      Sample s{std::move(padded.features), padded.valid_len, c, 0};
      auto& dst = i < n_train ? ds.train : i < n_train + n_val ? ds.val : ds.test;
      dst.push_back(std::move(s));
    }
  }
  // Split-major numbering, the same order load_dataset assigns to written files.
  std::size_t next_id = 0;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest})
    for (auto& s : ds.split(split)) s.id = next_id++;
  return ds;
}

std::vector<std::uint8_t> encode_feature_file(const Tensor<float>& features) {
  if (features.rows() > std::numeric_limits<std::uint32_t>::max() ||
      features.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw DimensionError("feature tensor " + features.shape() + " exceeds MSF1 u32 dimensions");
  }
  detail::ByteWriter w;
  w.put_bytes(kFeatureMagic);
  w.put_u32(static_cast<std::uint32_t>(features.rows()));
  w.put_u32(static_cast<std::uint32_t>(features.cols()));
  for (float v : features.values()) w.put_f32(v);
  return w.take();
}

Tensor<float> decode_feature_file(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kFeatureMagic, "MSF1 feature");
  const auto dims_at = r.offset();
  const std::uint64_t rows = r.u32("frame count");
  const std::uint64_t cols = r.u32("feature dimension");
  if (rows == 0 || cols == 0) {
    throw FormatError("feature file declares an empty shape " + shape_string(rows, cols), dims_at);
  }
  const std::uint64_t count = rows * cols;
  // 2^31 values (8 GiB of payload) is far beyond any feature file we accept.
  if (count > (std::uint64_t{1} << 31)) {
    throw FormatError("dimension overflow: " + shape_string(rows, cols) + " is too large",
                      dims_at);
  }
  r.require(count * 4, "the " + shape_string(rows, cols) + " payload");
  Tensor<float> out(rows, cols);
  for (auto& v : out.values()) v = r.f32("feature value");
  if (r.remaining() != 0) throw FormatError("trailing bytes after MSF1 payload", r.offset());
  return out;
}

void write_feature_file(const std::filesystem::path& path, const Tensor<float>& features) {
  detail::write_file_bytes(path, encode_feature_file(features));
}

Tensor<float> read_feature_file(const std::filesystem::path& path) {
  return decode_feature_file(detail::read_file_bytes(path));
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto split_dir = dir / std::string(to_string(split));
    std::filesystem::create_directories(split_dir);
    std::vector<const Sample*> ordered;
    for (const auto& s : dataset.split(split)) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(),
              [](const Sample* a, const Sample* b) { return a->id < b->id; });
    std::ostringstream manifest;
    manifest << "path,label\n";
    for (const Sample* s : ordered) {
      std::ostringstream name;
      name << std::setw(6) << std::setfill('0') << s->id << ".msf";
      Tensor<float> valid(s->valid_len, s->features.cols());
      std::copy_n(s->features.data(), valid.size(), valid.data());
      write_feature_file(split_dir / name.str(), valid);
      manifest << name.str() << ',' << s->label << '\n';
    }
    std::ofstream out(split_dir / "manifest.csv", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest in " + split_dir.string());
    out << manifest.str();
  }
}

Dataset load_dataset(const std::filesystem::path& dir, std::size_t p, std::size_t levels) {
  Dataset ds;
  std::size_t next_id = 0;
  std::size_t max_label = 0;
  bool any = false;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto split_dir = dir / std::string(to_string(split));
    const auto manifest_path = split_dir / "manifest.csv";
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("missing manifest " + manifest_path.string());
    std::string line;
    std::uint64_t offset = 0;
    if (!std::getline(in, line) || line != "path,label") {
      throw FormatError("manifest " + manifest_path.string() + " must start with 'path,label'", 0);
    }
    offset += line.size() + 1;
    std::vector<std::pair<std::string, std::size_t>> rows;
    while (std::getline(in, line)) {
      const auto line_at = offset;
      offset += line.size() + 1;
      if (line.empty()) continue;
      const auto comma = line.rfind(',');
      std::size_t label = 0;
      std::size_t used = 0;
      try {
        if (comma == std::string::npos) throw std::invalid_argument("no comma");
        label = std::stoul(line.substr(comma + 1), &used);
      } catch (const std::exception&) {
        throw FormatError("manifest " + manifest_path.string() + ": malformed row '" + line + "'",
                          line_at);
      }
      if (used != line.size() - comma - 1) {
        throw FormatError("manifest " + manifest_path.string() + ": bad label in '" + line + "'",
                          line_at);
      }
      rows.emplace_back(line.substr(0, comma), label);
    }
    std::sort(rows.begin(), rows.end());
    auto& dst = ds.split(split);
    for (const auto& [rel, label] : rows) {
      Tensor<float> raw = read_feature_file(split_dir / rel);
      if (!any) {
        ds.input_dim = raw.cols();
        any = true;
      } else if (raw.cols() != ds.input_dim) {
        throw DimensionError("feature file " + rel + " has " + std::to_string(raw.cols()) +
                             " features, expected " + std::to_string(ds.input_dim));
      }
      auto padded = pad_to_multiple(raw, p, levels);
      dst.push_back(Sample{std::move(padded.features), padded.valid_len, label, next_id++});
      max_label = std::max(max_label, label);
    }
  }
  if (!any) throw EmptyInputError("dataset " + dir.string() + " contains no samples");
  ds.num_classes = max_label + 1;
  return ds;
}

std::vector<std::vector<std::size_t>> batch_iter(std::span<const Sample> samples,
                                                 std::size_t batch_size,
                                                 std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw ContractError("batch_iter: batch_size must be >= 1");
  if (samples.empty()) throw EmptyInputError("batch_iter: dataset is empty");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].id < samples[b].id; });
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace mstr
