#include <gtest/gtest.h>

#include "fragbench/big_length.hpp"
#include "fragbench/error.hpp"

using namespace fragbench;

TEST(BigLength, ParsesPlainAndScientific) {
  EXPECT_EQ(parse_big_length("1001").to_u64(), 1001u);
  EXPECT_EQ(parse_big_length("82e3").to_u64(), 82000u);
  EXPECT_EQ(parse_big_length("1e6+1").to_u64(), 1000001u);
  EXPECT_EQ(parse_big_length("1e6-1").to_u64(), 999999u);
  const auto big = parse_big_length("82e200");
  EXPECT_EQ(big.to_string(), "82" + std::string(200, '0'));
  EXPECT_FALSE(big.fits_u64());
}

TEST(BigLength, RejectsNonPositiveAndGarbage) {
  EXPECT_THROW(parse_big_length("0"), DomainError);
  EXPECT_THROW(parse_big_length("1e2-100"), DomainError);
  EXPECT_THROW(parse_big_length("abc"), DomainError);
  EXPECT_THROW(parse_big_length(""), DomainError);
  EXPECT_THROW(BigLength(BigInt(0)), DomainError);
}

TEST(BigLength, HugeExponentIsCheap) {
  const auto x = parse_big_length("82e12000");
  EXPECT_GT(x.bit_length(), 39000u);
  EXPECT_NEAR(static_cast<double>(log_quad(x) / M_LN10q), 12000 + std::log10(82.0), 1e-9);
}

TEST(BigLength, Ordering) {
  EXPECT_LT(BigLength(3), BigLength(5));
  EXPECT_EQ(parse_big_length("1e3"), BigLength(1000));
}

TEST(LogQuad, MatchesLibmOnSmallValues) {
  for (std::uint64_t v : {1ull, 2ull, 10ull, 12345ull, 1ull << 62}) {
    EXPECT_NEAR(static_cast<double>(log_quad(BigInt(v))), std::log(static_cast<double>(v)), 1e-15);
  }
}

TEST(DecimalShape, SmallValuesArePrinted) {
  const auto s = decimal_shape(BigInt(123456), 3);
  EXPECT_EQ(s.digit_count, 6u);
  EXPECT_EQ(s.leading, "123");
  EXPECT_EQ(decimal_shape(BigInt(7)).leading, "7");
}

TEST(DecimalShape, LargeValuesExactAtBoundaries) {
  const auto p = power_of_ten(100);
  const auto below = decimal_shape(p - 1);
  EXPECT_EQ(below.digit_count, 100u);
  EXPECT_EQ(below.leading, "9999999999");
  const auto at = decimal_shape(p);
  EXPECT_EQ(at.digit_count, 101u);
  EXPECT_EQ(at.leading, "1000000000");
  const auto skew = decimal_shape(parse_big_length("82e200").value());
  EXPECT_EQ(skew.digit_count, 202u);
  EXPECT_EQ(skew.leading, "8200000000");
}

TEST(DecimalShape, AgreesWithStringForRandomWideValues) {
  BigInt v = 1;
  for (int i = 0; i < 120; ++i) {
    v = v * 7919 + 104729;
    const auto text = v.str();
    const auto s = decimal_shape(v, 12);
    ASSERT_EQ(s.digit_count, text.size());
    ASSERT_EQ(s.leading, text.substr(0, std::min<std::size_t>(12, text.size())));
  }
}
