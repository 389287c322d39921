#include "quditspam/transitions.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "oracles/fbasis_oracle.hpp"

using namespace quditspam;

namespace {
StateLabel L(int F, int m) { return {HalfInt(F), HalfInt(m)}; }
const LaserGeometry kGeometry{45.0, 58.0};
const std::string kFixtures = QUDITSPAM_FIXTURES_DIR;

const StrengthTable &paper_table() {
  static const StrengthTable table = strength_table(8.35, kGeometry);
  return table;
}
} // namespace

TEST(GeometricFactor, Examples) {
  EXPECT_NEAR(geometric_factor(0, {45.0, 0.0}), 0.5, 1e-15);
  EXPECT_NEAR(geometric_factor(1, {45.0, 0.0}), 0.0, 1e-15);
  EXPECT_NEAR(geometric_factor(-1, {45.0, 0.0}), 0.0, 1e-15);
  EXPECT_NEAR(geometric_factor(0, {45.0, 58.0}), 0.26496, 5e-6);
  EXPECT_EQ(geometric_factor(3, kGeometry), 0.0);
}

TEST(GeometricFactor, MatchesIndependentFormula) {
  for (double phi = 0.0; phi < 180.0; phi += 7.5)
    for (double gamma = 0.0; gamma < 180.0; gamma += 7.5)
      for (int q = -2; q <= 2; ++q)
        ASSERT_NEAR(geometric_factor(q, {phi, gamma}), oracle::geometry_factor(q, phi, gamma), 1e-14);
}

TEST(GeometricFactor, PlusMinusSymmetryAtSpecialAngles) {
  for (double a = 0.0; a < 180.0; a += 5.0)
    for (int q : {1, 2}) {
      EXPECT_NEAR(geometric_factor(q, {a, 0.0}), geometric_factor(-q, {a, 0.0}), 1e-15);
      EXPECT_NEAR(geometric_factor(q, {90.0, a}), geometric_factor(-q, {90.0, a}), 1e-15);
    }
}

TEST(LaserGeometry, Normalization) {
  const auto g = LaserGeometry{225.0, -30.0}.normalized();
  EXPECT_DOUBLE_EQ(g.phi, 45.0);
  EXPECT_DOUBLE_EQ(g.gamma, 150.0);
  EXPECT_DOUBLE_EQ((LaserGeometry{180.0, 360.0}.normalized().phi), 0.0);
}

TEST(RelativeStrength, ReferenceExamples) {
  const auto &t = paper_table();
  EXPECT_NEAR(t.at(L(2, 2), L(4, 4)), 0.2676, 5e-5);
  EXPECT_EQ(t.at(L(2, 2), L(4, -4)), 0.0);
  EXPECT_EQ(t.at(L(1, -1), L(4, -4)), 0.0);
  EXPECT_NEAR(t.at(L(2, 2), L(3, 3)), 0.0036, 5e-5);
  EXPECT_NEAR(t.at(L(2, 2), L(2, 1)), 0.0724, 5e-5);
}

TEST(StrengthTable, LayoutAndSelectionRule) {
  const auto &t = paper_table();
  ASSERT_EQ(t.ground_states().size(), 8u);
  ASSERT_EQ(t.excited_states().size(), 24u);
  EXPECT_EQ(t.ground_states().front(), L(1, -1));
  EXPECT_EQ(t.ground_states().back(), L(2, 2));
  EXPECT_EQ(t.excited_states().front(), L(1, 1));
  EXPECT_EQ(t.excited_states().back(), L(4, -4));
  for (const auto &g : t.ground_states())
    for (const auto &e : t.excited_states()) {
      const double v = t.at(g, e);
      EXPECT_GE(v, 0.0);
      if (std::abs((e.m - g.m).twice()) > 4) EXPECT_EQ(v, 0.0);
    }
  EXPECT_THROW(t.at(L(3, 0), L(4, 4)), std::out_of_range);
}

TEST(StrengthTable, ReproducesBundledFixture) {
  std::ifstream in(kFixtures + "/table_e1.csv");
  ASSERT_TRUE(in) << kFixtures;
  const auto fixture = read_strength_csv(in);
  const auto &t = paper_table();
  double worst = 0.0;
  for (const auto &g : fixture.ground_states())
    for (const auto &e : fixture.excited_states()) worst = std::max(worst, std::abs(t.at(g, e) - fixture.at(g, e)));
  EXPECT_LT(worst, 5e-5);
}

namespace {
double max_deviation_from_fbasis(double field) {
  const auto t = strength_table(field, kGeometry);
  double worst = 0.0;
  for (const auto &g : t.ground_states())
    for (const auto &e : t.excited_states()) {
      const int q = (e.m - g.m).twice() / 2;
      const double expected = oracle::geometry_factor(q, kGeometry.phi, kGeometry.gamma) *
                              std::abs(oracle::fbasis_coupling(g.F.twice(), g.m.twice(), e.F.twice(), e.m.twice()));
      worst = std::max(worst, std::abs(t.at(g, e) - expected));
    }
  return worst;
}
} // namespace

TEST(StrengthTable, NearZeroFieldMatchesFBasisOracle) {
  EXPECT_LT(max_deviation_from_fbasis(0.0), 1e-12);
  EXPECT_LT(max_deviation_from_fbasis(1e-4), 1e-4);
  // Residual is first-order Zeeman mixing across the 486 kHz F=3/F=4 gap: linear in B.
  const double ratio = max_deviation_from_fbasis(1e-3) / max_deviation_from_fbasis(5e-4);
  EXPECT_NEAR(ratio, 2.0, 0.01);
}

// With the geometric weight removed and q summed, sum_e |M|^2 from any ground
// state equals (2 J_D + 1)/(2 J_S + 1) = 3 by Clebsch-Gordan completeness.
TEST(StrengthTable, GeometryFreeSumIsFieldInvariant) {
  for (double field : {0.0, 4.0, 8.35}) {
    const auto t = strength_table(field, kGeometry);
    for (const auto &g : t.ground_states()) {
      double sum = 0.0;
      for (const auto &e : t.excited_states()) {
        const int q = (e.m - g.m).twice() / 2;
        if (std::abs(q) > 2) continue;
        const double v = t.at(g, e) / geometric_factor(q, kGeometry);
        sum += v * v;
      }
      EXPECT_NEAR(sum, 3.0, 1e-8) << field << " " << g.str();
    }
  }
}

// The stretched ground state has a fixed m_J, so even the geometry-weighted sum is invariant.
TEST(StrengthTable, WeightedSumInvariantForStretchedGround) {
  double reference = -1.0;
  for (double field : {0.0, 4.0, 8.35}) {
    const auto t = strength_table(field, kGeometry);
    double sum = 0.0;
    for (const auto &e : t.excited_states()) sum += std::pow(t.at(L(2, 2), e), 2);
    if (reference < 0) reference = sum;
    EXPECT_NEAR(sum, reference, 1e-8);
  }
}

TEST(Encodable, ThresholdGivesTwelveStatesInPresetOrder) {
  const auto states = encodable_states(paper_table(), L(2, 2));
  EXPECT_EQ(states, paper13_preset().excited);
  EXPECT_TRUE(encodable_states(paper_table(), L(2, 2), 1.0).empty());
  EXPECT_EQ(encodable_states(paper_table(), L(2, 2), 0.0).size(), 14u);
  EXPECT_THROW(encodable_states(paper_table(), L(3, 3)), std::out_of_range);
}

TEST(StrengthTable, CsvRoundTrip) {
  std::stringstream ss;
  write_csv(ss, paper_table(), 10);
  const auto back = read_strength_csv(ss);
  for (const auto &g : back.ground_states())
    for (const auto &e : back.excited_states()) EXPECT_NEAR(back.at(g, e), paper_table().at(g, e), 1e-10);
}

TEST(StrengthTable, JsonHasExplicitKeys) {
  nlohmann::json j = paper_table();
  ASSERT_EQ(j["entries"].size(), 192u);
  EXPECT_EQ(j["entries"][0]["ground"]["F"], 1.0);
  EXPECT_EQ(j["entries"][0]["excited"]["m"], 1.0);
}
