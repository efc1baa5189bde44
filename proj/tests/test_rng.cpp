#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "stochpool/rng.hpp"

using stochpool::RngStream;

TEST(Philox, KnownAnswerVectors) {
  using stochpool::philox4x32_10;
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}),
            (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RngStream, SequentialDrawsMatchRandomAccess) {
  RngStream rng(0xDEADBEEF, 42);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    ASSERT_EQ(rng.next_u64(), RngStream::bits_at(0xDEADBEEF, 42, i)) << i;
  }
  EXPECT_EQ(rng.draws(), 1000u);
}

TEST(RngStream, AllSimdPathsAgree) {
  int& level = stochpool::detail::simd_level_override();
  const int saved = level;
  std::vector<std::vector<std::uint64_t>> runs;
  for (int forced : {0, 1, 2}) {
    level = forced;
    RngStream rng(77, 1234567);
    std::vector<std::uint64_t> v(517);
    for (auto& x : v) x = rng.next_u64();
    runs.push_back(v);
  }
  level = saved;
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_EQ(runs[0], runs[2]);
  for (std::size_t i = 0; i < runs[0].size(); ++i) ASSERT_EQ(runs[0][i], RngStream::bits_at(77, 1234567, i));
}

TEST(RngStream, DistinctStreamsDiffer) {
  RngStream a(5, 0);
  RngStream b(5, 1);
  RngStream c(6, 0);
  int same_ab = 0;
  int same_ac = 0;
  for (int i = 0; i < 256; ++i) {
    const auto x = a.next_u64();
    same_ab += x == b.next_u64();
    same_ac += x == c.next_u64();
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
}

TEST(RngStream, SubstreamDoesNotAdvanceParent) {
  RngStream parent(9, 3);
  const auto child = parent.substream(17);
  EXPECT_EQ(parent.draws(), 0u);
  EXPECT_EQ(child.seed(), 9u);
  EXPECT_NE(child.stream_id(), parent.stream_id());
  EXPECT_EQ(parent.substream(17).stream_id(), child.stream_id());
  EXPECT_NE(parent.substream(18).stream_id(), child.stream_id());
}

TEST(RngStream, SplitConsumesOneDraw) {
  RngStream rng(1, 1);
  const auto a = rng.split();
  const auto b = rng.split();
  EXPECT_EQ(rng.draws(), 2u);
  EXPECT_NE(a.stream_id(), b.stream_id());
}

TEST(RngStream, UniformRanges) {
  RngStream rng(11);
  double lo = 1.0;
  double hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    const double v = rng.uniform_open_zero();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_GT(v, 0.0);
    ASSERT_LE(v, 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  EXPECT_LT(lo, 1e-3);
  EXPECT_GT(hi, 1.0 - 1e-3);
}

TEST(RngStream, BelowIsUniform) {
  RngStream rng(12);
  constexpr int kBound = 7;
  constexpr int kDraws = 70000;
  std::vector<double> counts(kBound, 0.0);
  for (int i = 0; i < kDraws; ++i) {
    const auto v = rng.below(kBound);
    ASSERT_LT(v, static_cast<std::uint64_t>(kBound));
    counts[v] += 1.0;
  }
  const std::vector<double> expected(kBound, static_cast<double>(kDraws) / kBound);
  EXPECT_GT(oracle::chi_square_p(counts, expected), 1e-3);
}

TEST(RngStream, NormalPassesKolmogorovSmirnov) {
  RngStream rng(2718);
  std::vector<double> sample(200000);
  for (double& v : sample) v = rng.normal();
  const double d = oracle::ks_statistic(sample, oracle::normal_cdf);
  EXPECT_GT(oracle::ks_p_value(d, sample.size()), 1e-3) << "D = " << d;
}

TEST(RngStream, NormalTailsAndMoments) {
  RngStream rng(314);
  constexpr int kDraws = 2'000'000;
  double s1 = 0.0;
  double s2 = 0.0;
  double s4 = 0.0;
  int beyond3 = 0;
  for (int i = 0; i < kDraws; ++i) {
    const double v = rng.normal();
    s1 += v;
    s2 += v * v;
    s4 += v * v * v * v;
    beyond3 += std::fabs(v) > 3.0;
  }
  EXPECT_NEAR(s1 / kDraws, 0.0, 4.0 / std::sqrt(kDraws));
  EXPECT_NEAR(s2 / kDraws, 1.0, 4.0 * std::sqrt(2.0 / kDraws));
  EXPECT_NEAR(s4 / kDraws, 3.0, 4.0 * std::sqrt(96.0 / kDraws));
  // P(|Z| > 3) = 2 * (1 - Phi(3))
  const double p3 = 2.0 * (1.0 - oracle::normal_cdf(3.0));
  const double expect = p3 * kDraws;
  EXPECT_NEAR(beyond3, expect, 4.0 * std::sqrt(expect));
}

TEST(RngStream, FillNormalMatchesRepeatedNormal) {
  for (std::size_t len : {1u, 2u, 3u, 63u, 64u, 65u, 1001u}) {
    RngStream a(55, len);
    RngStream b(55, len);
    a.normal();  // start with a pending half on both
    b.normal();
    std::vector<double> filled(len);
    a.fill_normal(filled);
    for (std::size_t i = 0; i < len; ++i) ASSERT_EQ(filled[i], b.normal()) << len << ":" << i;
    EXPECT_EQ(a.draws(), b.draws());
    EXPECT_EQ(a.normal(), b.normal());
  }
}

TEST(RngStream, BernoulliFrequency) {
  RngStream rng(8);
  constexpr int kDraws = 100000;
  int hits = 0;
  for (int i = 0; i < kDraws; ++i) hits += rng.bernoulli(0.3);
  EXPECT_NEAR(hits, 0.3 * kDraws, 4.0 * std::sqrt(kDraws * 0.3 * 0.7));
}
