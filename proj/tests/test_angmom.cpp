#include "quditspam/angmom.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "oracles/racah_oracle.hpp"

using quditspam::HalfInt;
using quditspam::clebsch_gordan;
using quditspam::wigner3j;

namespace {
HalfInt h(int twice) { return HalfInt::from_twice(twice); }
} // namespace

TEST(HalfInt, ParseAndPrint) {
  EXPECT_EQ(HalfInt::parse("5/2").twice(), 5);
  EXPECT_EQ(HalfInt::parse("-3/2").twice(), -3);
  EXPECT_EQ(HalfInt::parse("4").twice(), 8);
  EXPECT_EQ(HalfInt::parse("4/2").twice(), 4);
  EXPECT_EQ(h(5).str(), "5/2");
  EXPECT_EQ(h(-4).str(), "-2");
  EXPECT_THROW(HalfInt::parse("5/3"), std::invalid_argument);
  EXPECT_THROW(HalfInt::parse("x"), std::invalid_argument);
}

TEST(ClebschGordan, StretchedCouplingIsOne) {
  EXPECT_DOUBLE_EQ(clebsch_gordan(h(1), h(1), h(4), h(4), h(5), h(5)), 1.0);
}

TEST(ClebschGordan, ProjectionSelectionRule) {
  EXPECT_EQ(clebsch_gordan(h(1), h(1), h(4), h(2), h(5), h(5)), 0.0);
}

TEST(ClebschGordan, KnownValueMatchesOracle) {
  // <2,2; 1/2,-1/2 | 5/2,3/2> = +sqrt(1/5)
  const double value = clebsch_gordan(h(4), h(4), h(1), h(-1), h(5), h(3));
  EXPECT_NEAR(value, std::sqrt(0.2), 1e-15);
  EXPECT_NEAR(value, oracle::racah_cg(4, 4, 1, -1, 5, 3), 1e-15);
}

TEST(Wigner3j, KnownValues) {
  EXPECT_NEAR(wigner3j(h(2), h(2), h(0), h(0), h(0), h(0)), -1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(wigner3j(h(2), h(2), h(2), h(2), h(-2), h(0)), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_EQ(wigner3j(h(2), h(2), h(2), h(2), h(0), h(0)), 0.0);
}

TEST(ClebschGordan, OutOfRangeProjectionsReturnZero) {
  EXPECT_EQ(clebsch_gordan(h(1), h(3), h(2), h(0), h(3), h(3)), 0.0);
  EXPECT_EQ(clebsch_gordan(h(1), h(1), h(1), h(1), h(6), h(2)), 0.0); // triangle
  EXPECT_EQ(clebsch_gordan(h(1), h(0), h(1), h(1), h(2), h(1)), 0.0); // parity
}

// Exhaustive checks over every j1, j2 <= 4.
class ExhaustiveCoupling : public ::testing::Test {
protected:
  template <class F> static void for_all(F &&f) {
    for (int tj1 = 0; tj1 <= 8; ++tj1)
      for (int tj2 = 0; tj2 <= 8; ++tj2)
        for (int tm1 = -tj1; tm1 <= tj1; tm1 += 2)
          for (int tm2 = -tj2; tm2 <= tj2; tm2 += 2) f(tj1, tm1, tj2, tm2);
  }
};

TEST_F(ExhaustiveCoupling, MatchesRacahOracle) {
  for_all([](int tj1, int tm1, int tj2, int tm2) {
    for (int tJ = std::abs(tj1 - tj2); tJ <= tj1 + tj2; tJ += 2) {
      const int tM = tm1 + tm2;
      ASSERT_NEAR(clebsch_gordan(h(tj1), h(tm1), h(tj2), h(tm2), h(tJ), h(tM)),
                  oracle::racah_cg(tj1, tm1, tj2, tm2, tJ, tM), 1e-12)
          << tj1 << " " << tm1 << " " << tj2 << " " << tm2 << " " << tJ;
    }
  });
}

TEST_F(ExhaustiveCoupling, CompletenessOverCoupledStates) {
  for_all([](int tj1, int tm1, int tj2, int tm2) {
    double sum = 0.0;
    for (int tJ = std::abs(tj1 - tj2); tJ <= tj1 + tj2; tJ += 2) {
      const double c = clebsch_gordan(h(tj1), h(tm1), h(tj2), h(tm2), h(tJ), h(tm1 + tm2));
      sum += c * c;
    }
    ASSERT_NEAR(sum, 1.0, 1e-12);
  });
}

TEST_F(ExhaustiveCoupling, OrthonormalColumns) {
  for (int tj1 = 0; tj1 <= 8; ++tj1)
    for (int tj2 = 0; tj2 <= 8; ++tj2)
      for (int tJ = std::abs(tj1 - tj2); tJ <= tj1 + tj2; tJ += 2)
        for (int tJp = std::abs(tj1 - tj2); tJp <= tj1 + tj2; tJp += 2)
          for (int tM = -std::min(tJ, tJp); tM <= std::min(tJ, tJp); tM += 2) {
            double overlap = 0.0;
            for (int tm1 = -tj1; tm1 <= tj1; tm1 += 2)
              overlap += clebsch_gordan(h(tj1), h(tm1), h(tj2), h(tM - tm1), h(tJ), h(tM)) *
                         clebsch_gordan(h(tj1), h(tm1), h(tj2), h(tM - tm1), h(tJp), h(tM));
            ASSERT_NEAR(overlap, tJ == tJp ? 1.0 : 0.0, 1e-12);
          }
}

TEST_F(ExhaustiveCoupling, ExchangeSymmetry) {
  for_all([](int tj1, int tm1, int tj2, int tm2) {
    for (int tJ = std::abs(tj1 - tj2); tJ <= tj1 + tj2; tJ += 2) {
      const int phase_exp = (tj1 + tj2 - tJ) / 2;
      const double phase = phase_exp % 2 ? -1.0 : 1.0;
      ASSERT_NEAR(clebsch_gordan(h(tj1), h(tm1), h(tj2), h(tm2), h(tJ), h(tm1 + tm2)),
                  phase * clebsch_gordan(h(tj2), h(tm2), h(tj1), h(tm1), h(tJ), h(tm1 + tm2)), 1e-14);
    }
  });
}

TEST_F(ExhaustiveCoupling, ThreeJIdentity) {
  for_all([](int tj1, int tm1, int tj2, int tm2) {
    for (int tJ = std::abs(tj1 - tj2); tJ <= tj1 + tj2; tJ += 2) {
      const int tM = tm1 + tm2;
      const int phase_exp = (tj1 - tj2 + tM) / 2;
      const double expected = (std::abs(phase_exp) % 2 ? -1.0 : 1.0) * std::sqrt(tJ + 1.0) *
                              wigner3j(h(tj1), h(tj2), h(tJ), h(tm1), h(tm2), h(-tM));
      ASSERT_EQ(clebsch_gordan(h(tj1), h(tm1), h(tj2), h(tm2), h(tJ), h(tM)), expected);
    }
  });
}

TEST(ClebschGordan, HeadroomAtNineHalves) {
  for (int tm1 = -9; tm1 <= 9; tm1 += 2)
    for (int tm2 = -9; tm2 <= 9; tm2 += 2)
      for (int tJ = 0; tJ <= 18; tJ += 2)
        ASSERT_NEAR(clebsch_gordan(h(9), h(tm1), h(9), h(tm2), h(tJ), h(tm1 + tm2)),
                    oracle::racah_cg(9, tm1, 9, tm2, tJ, tm1 + tm2), 1e-10);
  EXPECT_THROW(clebsch_gordan(h(20), h(0), h(2), h(0), h(20), h(0)), std::out_of_range);
}
