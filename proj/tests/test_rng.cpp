#include <gtest/gtest.h>

#include <set>

#include "fragbench/rng.hpp"

using namespace fragbench;

// Known-answer vectors from the Random123 distribution (kat_vectors).
TEST(Philox, KnownAnswerZero) {
  const auto out = philox4x32_10({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes) {
  const auto out = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out, (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const auto out = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out, (std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RngStream, SameSeedAndStreamRepeat) {
  RngStream a(7, 3), b(7, 3);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  EXPECT_EQ(a.position(), b.position());
}

TEST(RngStream, StreamsAndChildrenDiffer) {
  RngStream a(7, 0), b(7, 1);
  EXPECT_NE(a.next_u64(), b.next_u64());
  const RngStream root(7, 0);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t i = 0; i < 1000; ++i) firsts.insert(root.child(i).next_u64());
  EXPECT_EQ(firsts.size(), 1000u);
  EXPECT_NE(root.child(1, 0).stream(), root.child(1, 1).stream());
}

TEST(RngStream, ChildDoesNotAdvanceParent) {
  RngStream a(1, 1), b(1, 1);
  (void)a.child(5);
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngStream, UniformRanges) {
  RngStream r(11, 0);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform01();
    const double v = r.uniform_open();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.005);
}

TEST(RngStream, UniformBelowCoversRange) {
  RngStream r(2, 2);
  std::array<int, 7> counts{};
  for (int i = 0; i < 70000; ++i) ++counts[r.uniform_below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(RngStream, NormalMoments) {
  RngStream r(3, 0);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
