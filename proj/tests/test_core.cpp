#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "erbeam/analysis.hpp"
#include "erbeam/core.hpp"

namespace erbeam {
namespace {

SearchConfig base_config() { return SearchConfig{8, 4, 32, 128, 4, 512, 7}; }

TEST(ValidateConfig, AcceptsConsistentConfig) {
  const SearchConfig cfg = base_config();
  EXPECT_EQ(validate_config(cfg), cfg);
  EXPECT_EQ(cfg.keep_count(), 2u);
}

TEST(ValidateConfig, RejectsIndivisibleWidth) {
  SearchConfig cfg = base_config();
  cfg.beam_width = 6;
  try {
    validate_config(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "N not divisible by M");
  }
}

TEST(ValidateConfig, RejectsPrefixLongerThanStep) {
  SearchConfig cfg = base_config();
  cfg.prefix_len = 200;
  try {
    validate_config(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "τ exceeds step length");
  }
}

TEST(ValidateConfig, RejectsZeroes) {
  for (auto mutate : {+[](SearchConfig& c) { c.expansion_factor = 0; },
                      +[](SearchConfig& c) { c.prefix_len = 0; },
                      +[](SearchConfig& c) { c.num_steps = 0; },
                      +[](SearchConfig& c) { c.beam_width = 0; }}) {
    SearchConfig cfg = base_config();
    mutate(cfg);
    EXPECT_THROW(validate_config(cfg), ConfigError);
  }
}

TEST(BeamNode, RewardsRequireGeneratedTokens) {
  BeamNode node{Path{0}};
  EXPECT_THROW(node.record_partial(1.0, 32), std::logic_error);
  node.tokens_generated = 32;
  node.record_partial(1.0, 32);
  EXPECT_THROW(node.record_final(2.0, 128), std::logic_error);
  node.tokens_generated = 128;
  node.record_final(2.0, 128);
  EXPECT_EQ(node.final_reward, 2.0);
}

TEST(BeamNode, StatusIsOneWay) {
  BeamNode node{Path{0}};
  node.retire(BeamStatus::rejected_early);
  EXPECT_THROW(node.retire(BeamStatus::completed), std::logic_error);
  BeamNode other{Path{1}};
  EXPECT_THROW(other.retire(BeamStatus::active), std::logic_error);
}

TEST(KeyedStream, SameKeySameValue) {
  const KeyedStream s(1);
  const Path root{};
  const double a = keyed_draw(s, root, 0);
  const double b = keyed_draw(s, root, 0);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(KeyedStream, SeedSensitivity) {
  const Path root{};
  EXPECT_NE(keyed_draw(KeyedStream(1), root, 0), keyed_draw(KeyedStream(2), root, 0));
}

TEST(KeyedStream, PathsAreOrderAndLengthSensitive) {
  const KeyedStream s(5);
  EXPECT_NE(s.draw(Path{0, 1}, 3), s.draw(Path{1, 0}, 3));
  EXPECT_NE(s.draw(Path{}, 3), s.draw(Path{0}, 3));
  EXPECT_NE(s.draw(Path{0}, 3), s.draw(Path{0, 0}, 3));
  EXPECT_NE(s.draw(Path{0}, 3), s.draw(Path{0}, 3, DrawSpec::standard_normal(), Channel::noise));
}

TEST(KeyedStream, FillMatchesPointDraws) {
  const KeyedStream s(9);
  const auto cursor = s.at(Path{2, 1});
  for (std::uint64_t first : {0u, 1u, 7u}) {
    std::vector<double> buf(13);
    cursor.fill_normal(first, buf);
    for (std::size_t i = 0; i < buf.size(); ++i) EXPECT_EQ(buf[i], cursor.normal(first + i));
  }
}

// Monte Carlo oracle: 10^4 standard normals over distinct keys.
TEST(KeyedStream, StandardNormalMoments) {
  const KeyedStream s(123);
  std::vector<double> xs;
  for (std::uint32_t i = 0; i < 10000; ++i) xs.push_back(s.draw(Path{i}, 0));
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= xs.size() - 1;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(var, 1.0, 0.1);
}

TEST(KeyedStream, UniformDrawsStayInRange) {
  const KeyedStream s(4);
  const DrawSpec spec{DrawSpec::Kind::uniform, -2.0, 3.0};
  for (std::uint64_t t = 0; t < 5000; ++t) {
    const double u = s.draw(Path{1}, t, spec);
    EXPECT_GE(u, -2.0);
    EXPECT_LE(u, 3.0);
  }
}

TEST(KeyedStream, ConsecutiveIndicesUncorrelated) {
  const KeyedStream s(77);
  const auto cursor = s.at(Path{0, 3});
  std::vector<double> a, b;
  for (std::uint64_t t = 0; t < 10000; ++t) {
    a.push_back(cursor.normal(t));
    b.push_back(cursor.normal(t + 1));
  }
  EXPECT_LT(std::abs(pearson(a, b)), 0.05);
}

TEST(KeyedStream, PairwiseKeysUncorrelated) {
  const KeyedStream s(31);
  std::vector<double> a, b, u, v;
  for (std::uint32_t i = 0; i < 10000; ++i) {
    a.push_back(s.draw(Path{i}, 0));
    b.push_back(s.draw(Path{i + 1}, 0));
    u.push_back(s.draw(Path{i}, 0, DrawSpec::unit_uniform()));
    v.push_back(s.draw(Path{i, 0}, 0, DrawSpec::unit_uniform()));
  }
  EXPECT_LT(std::abs(pearson(a, b)), 0.05);
  EXPECT_LT(std::abs(pearson(u, v)), 0.05);
}

TEST(DeriveSeed, DependsOnEveryCoordinate) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(2, {2, 3}));
  EXPECT_EQ(KeyedStream(5).derive(9), derive_seed(5, {9}));
}

}  // namespace
}  // namespace erbeam
