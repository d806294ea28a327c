#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>

#include "mstr/data.hpp"
#include "test_util.hpp"

using namespace mstr;
using mstr::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mstr_data_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.samples_per_class = 20;
  return s;
}

// Best template correlation over all offsets, then argmax over classes.
std::size_t matched_filter(const Sample& s, const std::vector<Tensor<float>>& templates) {
  std::size_t best_class = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < templates.size(); ++c) {
    const auto& t = templates[c];
    double energy = 0.0;
    for (float v : t.values()) energy += static_cast<double>(v) * v;
    const double norm = std::sqrt(energy);
    for (std::size_t off = 0; off + t.rows() <= s.valid_len; ++off) {
      double corr = 0.0;
      for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t j = 0; j < t.cols(); ++j)
          corr += static_cast<double>(s.features(off + r, j)) * t(r, j);
      corr /= norm;
      if (corr > best) {
        best = corr;
        best_class = c;
      }
    }
  }
  return best_class;
}

double matched_filter_accuracy(const SyntheticSpec& spec, std::uint64_t seed) {
  const auto ds = generate_synthetic_dataset(spec, seed, 3, 4);
  const auto templates = make_templates(spec, seed);
  std::size_t correct = 0;
  for (const auto& s : ds.train) correct += matched_filter(s, templates) == s.label;
  return static_cast<double>(correct) / static_cast<double>(ds.train.size());
}

}  // namespace

TEST(PadToMultiple, Examples) {
  EXPECT_EQ(pad_to_multiple(Tensor<float>(81, 2, 1.0f), 3, 4).features.rows(), 81u);
  const auto p80 = pad_to_multiple(Tensor<float>(80, 2, 1.0f), 3, 4);
  EXPECT_EQ(p80.features.rows(), 81u);
  EXPECT_EQ(p80.valid_len, 80u);
  EXPECT_EQ(p80.features(80, 0), 0.0f);
  EXPECT_EQ(p80.features(80, 1), 0.0f);
  EXPECT_EQ(p80.features(79, 1), 1.0f);
  const auto p1 = pad_to_multiple(Tensor<float>(1, 2, 1.0f), 3, 4);
  EXPECT_EQ(p1.features.rows(), 81u);
  EXPECT_EQ(p1.valid_len, 1u);
}

TEST(SyntheticSpec, RejectsInfeasibleSpecs) {
  auto s = small_spec();
  s.min_len = 20;
  EXPECT_THROW(s.validate(), ConfigError);  // 27-frame pattern does not fit
  s = small_spec();
  s.pattern_scales = {1, 9};
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.orthogonal_templates = true;
  s.input_dim = 2;
  EXPECT_THROW(generate_synthetic_dataset(s, 0, 3, 4), ConfigError);
}

TEST(SyntheticData, DeterministicPerSeed) {
  const auto a = generate_synthetic_dataset(small_spec(), 5, 3, 4);
  const auto b = generate_synthetic_dataset(small_spec(), 5, 3, 4);
  for (Split sp : {Split::kTrain, Split::kVal, Split::kTest}) {
    ASSERT_EQ(a.split(sp).size(), b.split(sp).size());
    for (std::size_t i = 0; i < a.split(sp).size(); ++i) {
      EXPECT_EQ(encode_feature_file(a.split(sp)[i].features),
                encode_feature_file(b.split(sp)[i].features));
      EXPECT_EQ(a.split(sp)[i].label, b.split(sp)[i].label);
    }
  }
  const auto c = generate_synthetic_dataset(small_spec(), 6, 3, 4);
  EXPECT_FALSE(a.train[0].features == c.train[0].features);
}

TEST(SyntheticData, SplitsAreBalancedDisjointAndPadded) {
  SyntheticSpec spec;
  const auto ds = generate_synthetic_dataset(spec, 1, 3, 4);
  EXPECT_EQ(ds.train.size(), 300u);
  std::vector<std::size_t> ids;
  for (Split sp : {Split::kTrain, Split::kVal, Split::kTest}) {
    std::vector<std::size_t> counts(3, 0);
    for (const auto& s : ds.split(sp)) {
      ++counts[s.label];
      ids.push_back(s.id);
      EXPECT_EQ(s.features.rows() % 81, 0u);
      EXPECT_GE(s.valid_len, spec.min_len);
      EXPECT_LE(s.valid_len, spec.max_len);
      for (std::size_t r = s.valid_len; r < s.features.rows(); ++r)
        for (float v : s.features.row(r)) EXPECT_EQ(v, 0.0f);
    }
    const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*mx - *mn, 1u) << to_string(sp);
  }
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());
}

TEST(SyntheticData, TemplatesHaveRequestedExtentAndEnergy) {
  SyntheticSpec spec;
  const auto t = make_templates(spec, 3);
  ASSERT_EQ(t.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(t[c].rows(), spec.pattern_scales[c]);
    double e = 0.0;
    for (float v : t[c].values()) e += static_cast<double>(v) * v;
    EXPECT_NEAR(e, spec.signal_energy, 1e-4);
  }
}

TEST(SyntheticData, MatchedFilterIsPerfectWithoutNoise) {
  auto spec = small_spec();
  spec.noise_std = 0.0;
  spec.orthogonal_templates = true;
  for (std::uint64_t seed = 0; seed < 3; ++seed) EXPECT_EQ(matched_filter_accuracy(spec, seed), 1.0);
}

TEST(SyntheticData, MatchedFilterDegradesWithNoise) {
  auto spec = small_spec();
  spec.orthogonal_templates = true;
  double prev = 2.0;
  for (double noise : {0.0, 0.5, 1.0}) {
    spec.noise_std = noise;
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) mean += matched_filter_accuracy(spec, seed) / 5.0;
    EXPECT_LE(mean, prev) << "noise " << noise;
    prev = mean;
  }
}

TEST(FeatureFile, RoundTripIsBitwise) {
  const auto x = random_tensor<float>(7, 5, 10, -1e3, 1e3);
  const auto dir = scratch_dir("roundtrip");
  write_feature_file(dir / "x.msf", x);
  const auto back = read_feature_file(dir / "x.msf");
  EXPECT_EQ(back, x);
  EXPECT_EQ(encode_feature_file(back), encode_feature_file(x));
  const auto bytes = encode_feature_file(x);
  EXPECT_EQ(bytes.size(), 4u + 8u + 35u * 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MSF1");
  EXPECT_EQ(bytes[4], 7);
  EXPECT_EQ(bytes[8], 5);
}

TEST(FeatureFile, RejectsWrongMagic) {
  auto bytes = encode_feature_file(Tensor<float>(2, 3));
  bytes[3] = '2';
  try {
    decode_feature_file(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 3u);
  }
}

TEST(FeatureFile, RejectsTruncatedPayload) {
  auto bytes = encode_feature_file(Tensor<float>(2, 3));
  bytes.resize(12 + 5 * 4);
  try {
    decode_feature_file(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 12u);
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
}

TEST(FeatureFile, RejectsDimensionOverflowAndTrailingBytes) {
  std::vector<std::uint8_t> huge{'M', 'S', 'F', '1', 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF};
  try {
    decode_feature_file(huge);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  auto bytes = encode_feature_file(Tensor<float>(1, 1));
  bytes.push_back(0);
  EXPECT_THROW(decode_feature_file(bytes), FormatError);
  EXPECT_THROW(read_feature_file("/nonexistent/file.msf"), std::runtime_error);
}

TEST(DatasetDir, WriteThenLoadRestoresSamples) {
  const auto ds = generate_synthetic_dataset(small_spec(), 11, 3, 4);
  const auto dir = scratch_dir("dataset");
  write_dataset(dir, ds);
  const auto back = load_dataset(dir, 3, 4);
  EXPECT_EQ(back.num_classes, 3u);
  EXPECT_EQ(back.input_dim, 8u);
  for (Split sp : {Split::kTrain, Split::kVal, Split::kTest}) {
    ASSERT_EQ(back.split(sp).size(), ds.split(sp).size());
    for (std::size_t i = 0; i < ds.split(sp).size(); ++i) {
      EXPECT_EQ(back.split(sp)[i].features, ds.split(sp)[i].features);
      EXPECT_EQ(back.split(sp)[i].valid_len, ds.split(sp)[i].valid_len);
      EXPECT_EQ(back.split(sp)[i].label, ds.split(sp)[i].label);
      EXPECT_EQ(back.split(sp)[i].id, ds.split(sp)[i].id);
    }
  }
  // Loading for a different (p, L) re-pads the same valid frames.
  const auto other = load_dataset(dir, 2, 2);
  EXPECT_EQ(other.train[0].features.rows() % 4, 0u);
  EXPECT_EQ(other.train[0].valid_len, ds.train[0].valid_len);
}

TEST(DatasetDir, ManifestRowOrderDoesNotMatter) {
  const auto ds = generate_synthetic_dataset(small_spec(), 12, 3, 4);
  const auto dir = scratch_dir("reorder");
  write_dataset(dir, ds);
  const auto manifest = dir / "train" / "manifest.csv";
  std::ifstream in(manifest);
  std::string header, line;
  std::getline(in, header);
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  in.close();
  std::reverse(rows.begin(), rows.end());
  std::ofstream out(manifest, std::ios::trunc);
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
  out.close();
  const auto back = load_dataset(dir, 3, 4);
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    EXPECT_EQ(back.train[i].features, ds.train[i].features);
    EXPECT_EQ(back.train[i].id, ds.train[i].id);
  }
}

TEST(DatasetDir, MissingManifestIsRuntimeError) {
  const auto dir = scratch_dir("missing");
  EXPECT_THROW(load_dataset(dir, 3, 4), std::runtime_error);
}

TEST(BatchIter, SizesAndPermutation) {
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < 10; ++i) samples.push_back(Sample{Tensor<float>(1, 1), 1, 0, 100 + i});
  const auto batches = batch_iter(samples, 3, 42);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> seen;
  for (const auto& b : batches) {
    sizes.push_back(b.size());
    for (auto i : b) seen.push_back(samples[i].id);
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 1}));
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen[i], 100 + i);
  EXPECT_EQ(batch_iter(samples, 3, 42), batches);
  EXPECT_NE(batch_iter(samples, 3, 43), batches);
}

TEST(BatchIter, OrderDependsOnIdsNotStorageOrder) {
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < 8; ++i) samples.push_back(Sample{Tensor<float>(1, 1), 1, 0, i});
  auto reversed = samples;
  std::reverse(reversed.begin(), reversed.end());
  auto ids = [](const std::vector<Sample>& s, const std::vector<std::vector<std::size_t>>& b) {
    std::vector<std::size_t> out;
    for (const auto& batch : b)
      for (auto i : batch) out.push_back(s[i].id);
    return out;
  };
  EXPECT_EQ(ids(samples, batch_iter(samples, 3, 7)), ids(reversed, batch_iter(reversed, 3, 7)));
}

TEST(BatchIter, Errors) {
  std::vector<Sample> none;
  EXPECT_THROW(batch_iter(none, 3, 0), EmptyInputError);
  std::vector<Sample> one{Sample{Tensor<float>(1, 1), 1, 0, 0}};
  EXPECT_THROW(batch_iter(one, 0, 0), ContractError);
}
