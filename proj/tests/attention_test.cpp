#include "gtest/gtest.h"
#include "oracles.hpp"

namespace gtattr {
namespace {

nlohmann::json doc_with_layers(const nlohmann::json& layers, std::size_t n) {
  return {{"version", 1}, {"n", n}, {"L", layers.size()}, {"tokens", nullptr}, {"head_reduction", "mean"},
          {"layers", layers}};
}

TEST(LoadAttention, IdentityIsValid) {
  const auto s = attention_from_json(doc_with_layers({{{1, 0}, {0, 1}}}, 2));
  EXPECT_EQ(s.n, 2u);
  EXPECT_EQ(s.num_layers(), 1u);
  EXPECT_EQ(s.layers[0].row_sum(0), 1.0);
  EXPECT_EQ(s.layers[0].row_sum(1), 1.0);
  EXPECT_EQ(s.token(1), "1");
}

TEST(LoadAttention, RenormalizesWithinTolerance) {
  const auto s = attention_from_json(doc_with_layers({{{0.7, 0.300001}, {0.5, 0.5}}}, 2));
  EXPECT_NEAR(s.layers[0].row_sum(0), 1.0, 1e-15);
  EXPECT_NEAR(s.layers[0](0, 0), 0.7 / 1.000001, 1e-15);
}

TEST(LoadAttention, RejectsRowSumOutsideTolerance) {
  EXPECT_THROW(attention_from_json(doc_with_layers({{{0.7, 0.2}, {0.5, 0.5}}}, 2)), ValidationError);
}

TEST(LoadAttention, RejectsMalformedDocuments) {
  EXPECT_THROW(attention_from_json(doc_with_layers({{{1.2, -0.2}, {0.5, 0.5}}}, 2)), ValidationError);
  EXPECT_THROW(attention_from_json(doc_with_layers({{{1.0}, {0.5, 0.5}}}, 2)), ValidationError);
  EXPECT_THROW(attention_from_json(doc_with_layers(nlohmann::json::array(), 2)), ValidationError);
  auto wrong_l = doc_with_layers({{{1, 0}, {0, 1}}}, 2);
  wrong_l["L"] = 2;
  EXPECT_THROW(attention_from_json(wrong_l), ValidationError);
  auto bad_version = doc_with_layers({{{1, 0}, {0, 1}}}, 2);
  bad_version["version"] = 2;
  EXPECT_THROW(attention_from_json(bad_version), ValidationError);
  auto bad_tokens = doc_with_layers({{{1, 0}, {0, 1}}}, 2);
  bad_tokens["tokens"] = {"only-one"};
  EXPECT_THROW(attention_from_json(bad_tokens), ValidationError);
  auto bad_heads = doc_with_layers({{{1, 0}, {0, 1}}}, 2);
  bad_heads["head_reduction"] = "sum";
  EXPECT_THROW(attention_from_json(bad_heads), ValidationError);
  auto missing = doc_with_layers({{{1, 0}, {0, 1}}}, 2);
  missing.erase("head_reduction");
  EXPECT_THROW(attention_from_json(missing), ValidationError);
  EXPECT_THROW(load_attention("/nonexistent.json"), ValidationError);
}

TEST(LoadAttention, HeadReductionVocabulary) {
  for (const char* ok : {"mean", "max", "single:0", "single:11"}) {
    auto d = doc_with_layers({{{1, 0}, {0, 1}}}, 2);
    d["head_reduction"] = ok;
    EXPECT_NO_THROW(attention_from_json(d)) << ok;
  }
  for (const char* bad : {"single:", "single:x", "Mean"}) {
    auto d = doc_with_layers({{{1, 0}, {0, 1}}}, 2);
    d["head_reduction"] = bad;
    EXPECT_THROW(attention_from_json(d), ValidationError) << bad;
  }
}

TEST(LoadAttention, FixturesRoundTrip) {
  for (const char* name : {"two_token", "three_tokens_three_layers", "identity_n3_l2", "shared_bottleneck"}) {
    const auto s = load_attention(testing::fixture(std::string("attention/") + name + ".json"));
    const auto back = attention_from_json(attention_to_json(s));
    EXPECT_EQ(back.layers, s.layers) << name;
    EXPECT_EQ(back.tokens, s.tokens) << name;
    EXPECT_EQ(back.head_reduction, s.head_reduction) << name;
  }
}

TEST(SquareMatrix, ProductAndSums) {
  const auto a = SquareMatrix::from_rows({{1, 2}, {3, 4}});
  const auto b = SquareMatrix::from_rows({{0, 1}, {1, 0}});
  EXPECT_EQ((a * b).rows(), (std::vector<std::vector<double>>{{2, 1}, {4, 3}}));
  EXPECT_EQ(a.col_sum(1), 6.0);
  EXPECT_EQ(a.row_sum(1), 7.0);
  EXPECT_THROW(SquareMatrix::from_rows({{1, 2}}), ValidationError);
}

}  // namespace
}  // namespace gtattr
