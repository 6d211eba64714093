#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/core/rng.hpp"
#include "tevim/core/step_cumhaz.hpp"

using namespace tevim;

TEST(Rng, UniformOpenStaysInsideUnitInterval) {
  Engine g(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = uniform_open(g);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, DerivedSeedsDifferAndRepeat) {
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
  EXPECT_NE(derive_seed(7, 3), derive_seed(7, 4));
  EXPECT_NE(derive_seed(7, 3), derive_seed(8, 3));
}

TEST(Rng, NormalMoments) {
  Engine g(11);
  NormalSampler z;
  double s = 0.0, ss = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = z(g);
    s += v;
    ss += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.015);
}

TEST(Rng, ShuffleIsPermutation) {
  Engine g(3);
  std::vector<std::size_t> v(50);
  std::iota(v.begin(), v.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(v), g);
  std::set<std::size_t> seen(v.begin(), v.end());
  EXPECT_EQ(seen.size(), 50u);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(Rng, UniformIndexBounds) {
  Engine g(5);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i) ++hits[uniform_index(g, 7)];
  for (int h : hits) EXPECT_NEAR(h, 10000, 500);
}

TEST(StepCumHazard, EvaluationAndLeftLimits) {
  StepCumHazard h({2.0, 1.0, 3.0}, {0.2, 0.5, 0.1});
  EXPECT_DOUBLE_EQ(h(0.5), 0.0);
  EXPECT_DOUBLE_EQ(h(1.0), 0.5);
  EXPECT_DOUBLE_EQ(h.left_limit(1.0), 0.0);
  EXPECT_DOUBLE_EQ(h(2.5), 0.7);
  EXPECT_DOUBLE_EQ(h.left_limit(3.0), 0.7);
  EXPECT_NEAR(h(10.0), 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(h.survival_left(0.0), 1.0);
}

TEST(StepCumHazard, MergesDuplicateTimes) {
  StepCumHazard a({1.0, 1.0, 2.0}, {0.2, 0.3, 0.1});
  StepCumHazard b({1.0, 2.0}, {0.5, 0.1});
  EXPECT_EQ(a.size(), 2u);
  EXPECT_NEAR(a(1.5), b(1.5), 1e-15);
  EXPECT_NEAR(a.restricted_mean(3.0), b.restricted_mean(3.0), 1e-15);
}

TEST(StepCumHazard, RestrictedMeanRectangles) {
  StepCumHazard h({1.0}, {0.5});
  EXPECT_NEAR(h.restricted_mean(2.0), 1.0 + std::exp(-0.5), 1e-15);
  EXPECT_NEAR(h.restricted_mean(1.5, 2.0), 0.5 * std::exp(-0.5), 1e-15);
  EXPECT_NEAR(h.restricted_mean(0.5, 2.0), 0.5 + std::exp(-0.5), 1e-15);
  EXPECT_DOUBLE_EQ(StepCumHazard{}.restricted_mean(4.0), 4.0);
}

TEST(StepCumHazard, RejectsNegativeJumps) {
  EXPECT_THROW(StepCumHazard({1.0}, {-0.1}), Error);
  EXPECT_THROW(StepCumHazard({1.0, 2.0}, {0.1}), Error);
}

TEST(StepCumHazard, ScaledMultipliesJumps) {
  StepCumHazard h({1.0, 2.0}, {0.2, 0.3});
  EXPECT_NEAR(h.scaled(2.0)(5.0), 1.0, 1e-15);
}

TEST(Error, MessageIsModuleQualified) {
  Error e("data", "bad row");
  EXPECT_STREQ(e.what(), "data: bad row");
  EXPECT_EQ(e.module(), "data");
}
