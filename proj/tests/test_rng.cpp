#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "quditspam/rng.hpp"

using namespace quditspam;

TEST(Philox, KnownAnswerZeros) {
  const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes) {
  const auto out = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out, (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPiDigits) {
  const auto out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out, (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(SubStream, Deterministic) {
  SubStream a(42, 7, 3), b(42, 7, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(SubStream, DistinctStreams) {
  std::set<double> firsts;
  for (std::uint64_t shot = 0; shot < 50; ++shot)
    for (std::uint32_t prepared = 0; prepared < 4; ++prepared) firsts.insert(SubStream(1, shot, prepared).uniform());
  firsts.insert(SubStream(2, 0, 0).uniform());
  firsts.insert(SubStream(1, std::uint64_t{1} << 40, 0).uniform());
  EXPECT_EQ(firsts.size(), 202u);
}

TEST(SubStream, UniformMoments) {
  SubStream s(9, 0, 0);
  const int n = 200000;
  double sum = 0, sum2 = 0, lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    sum += u, sum2 += u * u;
    lo = std::min(lo, u), hi = std::max(hi, u);
  }
  EXPECT_NEAR(sum / n, 0.5, 5 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(sum2 / n, 1.0 / 3, 0.003);
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(hi, 1.0);
}

TEST(SubStream, BernoulliEdges) {
  SubStream s(3, 0, 0);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_FALSE(s.bernoulli(0.0));
    EXPECT_TRUE(s.bernoulli(1.0));
  }
}
