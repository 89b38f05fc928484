#include <gtest/gtest.h>

#include <random>

#include "routoo/decimal.hpp"

using routoo::Decimal;

TEST(Decimal, ParsesAndPrintsShortestForm) {
  EXPECT_EQ(Decimal::parse("0.2").to_string(), "0.2");
  EXPECT_EQ(Decimal::parse("0.260").to_string(), "0.26");
  EXPECT_EQ(Decimal::parse("12").to_string(), "12");
  EXPECT_EQ(Decimal::parse("-1.5").to_string(), "-1.5");
  EXPECT_EQ(Decimal::parse(".5").to_string(), "0.5");
  EXPECT_EQ(Decimal::parse("0.000000000001").units(), 1);
  EXPECT_EQ(Decimal::parse("1.0000000000000").units(), Decimal::kScale);
}

TEST(Decimal, RejectsMalformedText) {
  for (const char* bad : {"", "-", ".", "1.", "1.2.3", "abc", "1e5", "0.0000000000001", " 1"}) {
    EXPECT_ANY_THROW(Decimal::parse(bad)) << bad;
  }
  EXPECT_THROW(Decimal::parse("99999999999"), std::overflow_error);
}

TEST(Decimal, ArithmeticIsExact) {
  Decimal sum;
  for (int i = 0; i < 10; ++i) sum += Decimal::parse("0.1");
  EXPECT_EQ(sum, Decimal::from_integer(1));
  EXPECT_EQ(Decimal::parse("0.3") - Decimal::parse("0.1"), Decimal::parse("0.2"));
  EXPECT_EQ(Decimal::parse("0.0002") * 3, Decimal::parse("0.0006"));
  EXPECT_LT(Decimal::parse("0.1"), Decimal::parse("0.10000000001"));
}

TEST(Decimal, OverflowIsReported) {
  EXPECT_THROW(Decimal::max() + Decimal::from_units(1), std::overflow_error);
  EXPECT_THROW(Decimal::max() * 2, std::overflow_error);
  EXPECT_THROW(Decimal::from_integer(10'000'000), std::overflow_error);
}

TEST(Decimal, RoundsHalfAwayFromZero) {
  EXPECT_EQ(Decimal::parse("0.59995").rounded(4).to_string(), "0.6");
  EXPECT_EQ(Decimal::parse("0.12344").rounded(4).to_string(), "0.1234");
  EXPECT_EQ(Decimal::parse("0.12345").rounded(4).to_string(), "0.1235");
  EXPECT_EQ(Decimal::parse("-0.12345").rounded(4).to_string(), "-0.1235");
  EXPECT_EQ(Decimal::parse("2.5").rounded(0).to_string(), "3");
}

TEST(Decimal, ScaleRatioRounds) {
  EXPECT_EQ(routoo::scale_ratio(Decimal::parse("6"), 1'000'000, 10'000'000), Decimal::parse("0.6"));
  EXPECT_EQ(routoo::scale_ratio(Decimal::parse("1"), 1, 3).to_string(), "0.333333333333");
  EXPECT_EQ(routoo::scale_ratio(Decimal::parse("2"), 1, 3).to_string(), "0.666666666667");
}

TEST(Decimal, TextRoundTripsOnRandomValues) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int64_t> units(-1'000'000'000'000'000, 1'000'000'000'000'000);
  for (int i = 0; i < 2000; ++i) {
    const Decimal d = Decimal::from_units(units(rng));
    EXPECT_EQ(Decimal::parse(d.to_string()), d);
  }
}
