#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "tevim/sim/replicate.hpp"

using namespace tevim;

TEST(Method, NamesRoundTrip) {
  for (std::string name : {"correct-kernel", "correct-kernel-CF", "correct-RF-CF", "RF-RF", "RF-kernel-CF"}) {
    EXPECT_EQ(Method::parse(name).name(), name);
  }
  EXPECT_THROW(Method::parse("GAM-RF"), Error);
  EXPECT_THROW(Method::parse("RF-RF-XF"), Error);
  EXPECT_THROW(Method::parse("RF"), Error);
}

TEST(Method, CorrectFormulasFollowNonzeroCoefficients) {
  const auto l = correct_learners(weibull_cox_design());
  ASSERT_TRUE(l.event.formula);
  EXPECT_EQ(l.event.formula->main, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(l.event.formula->interactions, (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(l.event.formula->treatment);
  ASSERT_TRUE(l.censoring && l.censoring->formula);
  EXPECT_EQ(l.censoring->formula->main, (std::vector<std::size_t>{0}));
  EXPECT_FALSE(l.censoring->formula->treatment);
  EXPECT_TRUE(l.censoring->formula->interactions.empty());
  EXPECT_EQ(*l.propensity.covariates, (std::vector<std::size_t>{0, 1}));
  const auto null = correct_learners(null_heterogeneity_design());
  EXPECT_TRUE(null.event.formula->main.empty());
  EXPECT_TRUE(null.event.formula->treatment);
}

TEST(Replicate, SmokeRunGivesOneRow) {
  auto s = preset("smoke");
  s.threads = 2;
  const auto records = run_replications(s);
  ASSERT_EQ(records.size(), 2u);
  const auto rows = summarize(records, s, -0.1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].method, "correct-kernel-CF");
  EXPECT_EQ(rows[0].runs, 2u);
  std::ostringstream os;
  write_summary_csv(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "n,method,bias,coverage,SD,mean SE,MSE,runs,failures");
}

TEST(Replicate, SchedulingDoesNotChangeResults) {
  auto s = preset("smoke");
  s.reps = 3;
  s.threads = 1;
  const auto a = run_replications(s);
  s.threads = 3;
  const auto b = run_replications(s);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].point, b[i].point);
    EXPECT_EQ(a[i].se, b[i].se);
  }
}

TEST(Replicate, SummaryArithmetic) {
  ReplicationSetup s;
  s.sample_sizes = {10};
  s.methods = {Method{}};
  std::vector<ReplicationRecord> recs(4);
  const double points[4] = {1.0, 2.0, 4.0, 0.0};
  for (int i = 0; i < 4; ++i) {
    recs[i].n = 10;
    recs[i].method = "correct-kernel-CF";
    recs[i].ok = i < 3;
    recs[i].point = points[i];
    recs[i].se = 0.5;
    recs[i].ci = {points[i] - 1.0, points[i] + 1.0};
  }
  const auto rows = summarize(recs, s, 2.0);
  ASSERT_EQ(rows.size(), 1u);
  const double mean = 7.0 / 3.0;
  EXPECT_NEAR(rows[0].bias, mean - 2.0, 1e-12);
  EXPECT_NEAR(rows[0].coverage, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(rows[0].mse, (1.0 + 0.0 + 4.0) / 3.0, 1e-12);
  const double ss = std::pow(1 - mean, 2) + std::pow(2 - mean, 2) + std::pow(4 - mean, 2);
  EXPECT_NEAR(rows[0].sd, std::sqrt(ss / 2.0), 1e-12);
  EXPECT_EQ(rows[0].failures, 1u);
  EXPECT_TRUE(failure_rate_exceeded(rows));
}

TEST(Replicate, UnknownPreset) { EXPECT_THROW(preset("table9"), Error); }
