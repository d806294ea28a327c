#include <gtest/gtest.h>

#include <cmath>

#include "mstr/checkpoint.hpp"
#include "mstr/data.hpp"
#include "mstr/model.hpp"
#include "test_util.hpp"

using namespace mstr;
using mstr::testing::random_tensor;

namespace {

MstrConfig small_config() {
  MstrConfig c;
  c.input_dim = 6;
  c.model_dim = 8;
  c.p = 3;
  c.levels = 2;
  c.heads = 2;
  c.blocks = 2;
  c.num_classes = 3;
  return c;
}

}  // namespace

TEST(MstrConfig, DefaultsFollowReferenceSetup) {
  MstrConfig c;
  EXPECT_EQ(c.p, 3u);
  EXPECT_EQ(c.levels, 4u);
  EXPECT_EQ(c.blocks, 4u);
  EXPECT_EQ(c.heads, 16u);
  EXPECT_EQ(c.ffn_width(), 4 * c.model_dim);
  EXPECT_NO_THROW(c.validate());
}

TEST(MstrConfig, ValidationRejectsBadDims) {
  auto c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.p = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.num_classes = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(init_params<float>(c, 0), ConfigError);
}

TEST(InitParams, DeterministicPerSeed) {
  const auto c = small_config();
  EXPECT_EQ(init_params<float>(c, 7), init_params<float>(c, 7));
  EXPECT_FALSE(init_params<float>(c, 7) == init_params<float>(c, 8));
}

TEST(InitParams, GlorotBoundsZeroBiasesUnitGammas) {
  const auto c = small_config();
  const auto p = init_params<float>(c, 3);
  auto check_matrix = [](const Tensor<float>& w) {
    const auto limit = static_cast<float>(std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols())));
    EXPECT_FLOAT_EQ(limit, static_cast<float>(glorot_limit(w.rows(), w.cols())));
    float mx = 0.0f;
    for (float v : w.values()) {
      EXPECT_LE(std::abs(v), limit);
      mx = std::max(mx, std::abs(v));
    }
    EXPECT_GT(mx, 0.0f);
  };
  check_matrix(p.input_proj);
  for (const auto& b : p.blocks) {
    for (const auto* w : {&b.w_q, &b.w_k, &b.w_v, &b.w_o, &b.ffn_w1, &b.ffn_w2}) check_matrix(*w);
    for (const auto* z : {&b.ffn_b1, &b.ffn_b2, &b.ln1_beta, &b.ln2_beta})
      for (float v : z->values()) EXPECT_EQ(v, 0.0f);
    for (const auto* g : {&b.ln1_gamma, &b.ln2_gamma})
      for (float v : g->values()) EXPECT_EQ(v, 1.0f);
  }
  for (const auto* w : {&p.fc1_w, &p.fc2_w, &p.fc3_w}) check_matrix(*w);
  for (const auto* z : {&p.fc1_b, &p.fc2_b, &p.fc3_b})
    for (float v : z->values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(p.fc1_w.cols(), c.model_dim / 2);
  EXPECT_EQ(p.fc2_w.cols(), c.model_dim / 4);
  EXPECT_EQ(p.fc3_w.cols(), c.num_classes);
}

TEST(ParameterCount, IdenticalAcrossVariants) {
  for (std::size_t F : {8u, 16u, 64u}) {
    MstrConfig m = small_config();
    m.model_dim = F;
    m.heads = 4;
    MstrConfig v = m;
    v.variant = Variant::kVanilla;
    EXPECT_EQ(parameter_count(m), parameter_count(v));
    EXPECT_EQ(init_params<float>(m, 0).parameter_count(), init_params<float>(v, 0).parameter_count());
    EXPECT_EQ(parameter_count(m), init_params<float>(m, 0).parameter_count());
  }
}

TEST(ModelForward, LogitShape) {
  const auto c = small_config();
  const auto params = init_params<float>(c, 1);
  const auto logits = predict_logits(random_tensor<float>(18, 6, 2), 14, params, c);
  EXPECT_EQ(logits.rows(), 1u);
  EXPECT_EQ(logits.cols(), 3u);
}

TEST(ModelForward, InputErrors) {
  const auto c = small_config();
  const auto params = init_params<float>(c, 1);
  EXPECT_THROW(predict_logits(Tensor<float>(18, 6), 0, params, c), EmptyInputError);
  EXPECT_THROW(predict_logits(Tensor<float>(18, 5), 4, params, c), DimensionError);
  EXPECT_THROW(predict_logits(Tensor<float>(18, 6), 19, params, c), DimensionError);
  EXPECT_THROW(predict_logits(Tensor<float>(17, 6), 4, params, c), ConfigError);
}

TEST(ModelForward, DeterministicLogits) {
  const auto c = small_config();
  const auto params = init_params<float>(c, 5);
  const auto x = random_tensor<float>(27, 6, 6);
  EXPECT_EQ(predict_logits(x, 20, params, c), predict_logits(x, 20, params, c));
}

// At L=1 windows past valid_len never mix with valid ones, so extra padding is inert.
TEST(ModelForward, PadAmountDoesNotChangeLogitsAtOneLevel) {
  auto c = small_config();
  c.levels = 1;
  const auto params = init_params<float>(c, 9);
  const auto raw = random_tensor<float>(12, 6, 10);
  const auto a = pad_to_length_multiple(raw, 3);
  const auto b = pad_to_length_multiple(raw, 9);
  ASSERT_EQ(a.features.rows(), 12u);
  ASSERT_EQ(b.features.rows(), 18u);
  const auto la = predict_logits(a.features, 12, params, c);
  const auto lb = predict_logits(b.features, 12, params, c);
  EXPECT_LT(max_abs_diff(la, lb), 1e-6f);
}

TEST(ModelForward, VanillaMatchesSingleLevelFullWindowMstr) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t T = 9 + 3 * seed;
    MstrConfig m = small_config();
    m.blocks = 1;
    m.levels = 1;
    m.p = T;
    MstrConfig v = m;
    v.variant = Variant::kVanilla;
    const auto params = init_params<float>(m, seed);
    const auto x = random_tensor<float>(T, 6, 300 + seed);
    EXPECT_LT(max_abs_diff(predict_logits(x, T - 1, params, m), predict_logits(x, T - 1, params, v)),
              1e-6f);
  }
}

TEST(ModelForward, ArgmaxStableUnderUniformShift) {
  auto logits = Tensor<float>::from_rows({{0.3f, 2.5f, -1.0f, 2.4f}});
  EXPECT_EQ(argmax(logits), 1u);
  for (auto& v : logits.values()) v += 17.0f;
  EXPECT_EQ(argmax(logits), 1u);
  EXPECT_EQ(argmax(Tensor<float>::from_rows({{1.0f, 1.0f}})), 0u);
}

TEST(SinusoidalEncoding, StandardTable) {
  const auto pe = sinusoidal_encoding<double>(5, 4);
  EXPECT_DOUBLE_EQ(pe(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe(0, 1), 1.0);
  EXPECT_NEAR(pe(3, 0), std::sin(3.0), 1e-12);
  EXPECT_NEAR(pe(3, 3), std::cos(3.0 / 100.0), 1e-12);
}

TEST(Variant, ParseRoundTrip) {
  EXPECT_EQ(parse_variant(to_string(Variant::kMstr)), Variant::kMstr);
  EXPECT_EQ(parse_variant(to_string(Variant::kVanilla)), Variant::kVanilla);
  EXPECT_THROW(parse_variant("swin"), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  auto c = small_config();
  c.dropout_rate = 0.1;
  c.variant = Variant::kVanilla;
  const auto params = init_params<float>(c, 11);
  const auto bytes = encode_checkpoint(c, params);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config, c);
  EXPECT_EQ(back.params, params);
  EXPECT_EQ(encode_checkpoint(back.config, back.params), bytes);
}

TEST(Checkpoint, RejectsCorruption) {
  const auto c = small_config();
  auto bytes = encode_checkpoint(c, init_params<float>(c, 12));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version), FormatError);
}
