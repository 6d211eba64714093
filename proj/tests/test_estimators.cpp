#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "tevim/data/dgp.hpp"
#include "tevim/estimators/estimate.hpp"
#include "tevim/oracle/oracle.hpp"
#include "tevim/oracle/true_nuisances.hpp"

using namespace tevim;

namespace {

TargetSpec spec_for(TargetKind kind, const DgpConfig& c, std::size_t folds = 5) {
  TargetSpec s;
  s.kind = kind;
  s.subset = {0};
  s.covariate = 0;
  s.horizon = c.horizon;
  s.folds = folds;
  s.inner_folds = 3;
  s.seed = 17;
  return s;
}

// Light censoring and a clear effect; used where nuisances are fitted.
DgpConfig mild_config() {
  DgpConfig c;
  c.dimension = 2;
  c.horizon = 1.0;
  c.outcome = {1.0, 1.0, {0.5, -0.3}, -0.5, {0.8, 0.2}};
  c.censoring = WeibullCoxHazard{0.2, 1.0, {0.2, 0.0}, 0.0, {0.0, 0.0}};
  c.propensity = {0.0, {0.3, 0.0}};
  return c;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

InjectedNuisances oracle_injection(const DgpConfig& c, Estimand est, std::vector<std::size_t> l) {
  auto inj = true_nuisances(c, c.horizon, est, 400);
  inj.cate_projection = mc_cate_projection(TrueCate(c, c.horizon, est), std::move(l), 200, 9);
  return inj;
}

}  // namespace

TEST(CrossFitVariance, PooledSquares) {
  EXPECT_DOUBLE_EQ(cross_fit_variance({{1.0, -1.0}, {2.0}}), 2.0);
  EXPECT_DOUBLE_EQ(cross_fit_variance({{3.0}}), 9.0);
  EXPECT_THROW(cross_fit_variance(std::vector<std::vector<double>>{{}}), Error);
  const FoldPlan plan(4, {{0, 3}, {1, 2}});
  const std::vector<double> v{1.0, 2.0, 0.0, -1.0};
  EXPECT_DOUBLE_EQ(cross_fit_variance(v, plan), 6.0 / 4.0);
}

TEST(TargetSpec, LabelsAndValidation) {
  TargetSpec s;
  s.kind = TargetKind::theta_l;
  s.subset = {0, 2};
  EXPECT_EQ(s.label(), "theta_1_3");
  s.kind = TargetKind::omega_j;
  s.covariate = 1;
  EXPECT_EQ(s.label(), "omega_2");
  EXPECT_THROW(s.validate(1), Error);
  s.kind = TargetKind::psi_l;
  s.subset = {0, 0};
  EXPECT_THROW(s.validate(3), Error);
  s.subset = {};
  EXPECT_THROW(s.validate(3), Error);
  EXPECT_EQ(target_from_string("vte"), TargetKind::theta_d);
  EXPECT_THROW(target_from_string("beta"), Error);
}

TEST(Estimators, FoldBookkeeping) {
  const auto c = weibull_cox_design();
  const auto data = simulate(c, 10, 2);
  auto spec = spec_for(TargetKind::theta_l, c, 2);
  spec.injected = oracle_injection(c, Estimand::survival, {0});
  const auto r = estimate_target(data, spec);
  ASSERT_EQ(r.folds.size(), 2u);
  EXPECT_EQ(r.folds[0].size, 5u);
  EXPECT_EQ(r.folds[1].size, 5u);
  EXPECT_NEAR(r.point, 0.5 * (r.folds[0].estimate + r.folds[1].estimate), 1e-14);
  EXPECT_EQ(r.n, 10u);
  const auto j = report_to_json(r);
  EXPECT_EQ(j["folds"][0]["fold"], 1);
  EXPECT_EQ(j["target"], "theta_1");
  EXPECT_NEAR(r.ci[1] - r.ci[0], 2 * kNormalQuantile975 * r.se, 1e-14);
}

TEST(Estimators, EstimatingEquationHolds) {
  const auto c = mild_config();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto data = simulate(c, 160, seed);
    for (auto kind : {TargetKind::theta_l, TargetKind::theta_d, TargetKind::psi_l, TargetKind::gamma_j,
                      TargetKind::chi_j, TargetKind::omega_j}) {
      auto spec = spec_for(kind, c, 4);
      spec.seed = seed;
      spec.fast_theta_d = true;
      EstimateReport r;
      try {
        r = estimate_target(data, spec);
      } catch (const DegenerateTarget&) {
        continue;
      }
      ASSERT_EQ(r.eif.size(), data.n());
      EXPECT_LE(std::abs(mean(r.eif)), 1e-10 * std::max(1.0, std::abs(r.point))) << to_string(kind);
    }
  }
}

TEST(Estimators, FoldRelabelInvariance) {
  const auto c = mild_config();
  const auto data = simulate(c, 150, 4);
  auto spec = spec_for(TargetKind::theta_d, c, 3);
  const auto plan = plan_for(data, spec);
  const auto a = estimate_target(data, spec, cross_fit_nuisances(data, spec, plan));
  const auto b = estimate_target(data, spec, cross_fit_nuisances(data, spec, plan.relabeled({2, 0, 1})));
  EXPECT_NEAR(a.point, b.point, 1e-12);
  EXPECT_NEAR(a.se, b.se, 1e-12);
}

TEST(Estimators, Deterministic) {
  const auto c = mild_config();
  const auto data = simulate(c, 400, 5);
  const auto spec = spec_for(TargetKind::psi_l, c, 3);
  const auto a = estimate_target(data, spec);
  const auto b = estimate_target(data, spec);
  EXPECT_EQ(a.point, b.point);
  EXPECT_EQ(a.se, b.se);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
}

TEST(Estimators, RatioComponentsAgree) {
  const auto c = mild_config();
  const auto data = simulate(c, 200, 6);
  auto spec = spec_for(TargetKind::omega_j, c, 4);
  const auto cf = cross_fit_nuisances(data, spec);
  const auto g = estimate_gamma(data, spec, cf);
  const auto x = estimate_chi(data, spec, cf);
  const auto o = estimate_omega(data, spec, cf);
  EXPECT_NEAR(o.point, g.point / x.point, 1e-14);
  EXPECT_NEAR(o.components.at("gamma"), g.point, 1e-14);
  EXPECT_NEAR(o.components.at("chi_se"), x.se, 1e-14);
  ASSERT_TRUE(o.statistic && o.p_value);
  EXPECT_NEAR(*o.statistic, o.point / o.se, 1e-12);
  EXPECT_NEAR(*o.p_value, std::erfc(std::abs(*o.statistic) / std::sqrt(2.0)), 1e-14);
}

TEST(Estimators, FullSampleModeUsesOneFold) {
  const auto c = mild_config();
  const auto data = simulate(c, 150, 7);
  auto spec = spec_for(TargetKind::psi_l, c);
  spec.cross_fit = false;
  const auto cf = cross_fit_nuisances(data, spec);
  EXPECT_TRUE(cf.plan.is_full_sample());
  EXPECT_EQ(cf.folds.size(), 1u);
  EXPECT_EQ(cf.folds[0].training.size(), data.n());
}

TEST(Estimators, OracleNuisancesRecoverPsiAndOmega) {
  const auto c = weibull_cox_design();
  const auto data = simulate(c, 3000, 8);
  OracleOptions opt;
  opt.n_draws = 20000;
  opt.inner_draws = 400;
  opt.seed = 1;

  auto spec = spec_for(TargetKind::psi_l, c, 5);
  spec.injected = oracle_injection(c, Estimand::survival, {0});
  const auto psi = estimate_target(data, spec);
  const auto truth = oracle_psi(c, {0}, c.horizon, Estimand::survival, opt);
  EXPECT_NEAR(psi.point, truth.value, 4 * std::hypot(psi.se, truth.mc_se));

  auto ospec = spec_for(TargetKind::omega_j, c, 5);
  ospec.injected = oracle_injection(c, Estimand::survival, {0});
  const auto omega = estimate_target(data, ospec);
  const auto otruth = oracle_omega(c, 0, c.horizon, Estimand::survival, opt);
  EXPECT_NEAR(omega.point, otruth.omega.value, 4 * std::hypot(omega.se, otruth.omega.mc_se));
}

TEST(Estimators, FullSubsetGivesPsiNearOne) {
  const auto c = weibull_cox_design();
  const auto data = simulate(c, 2000, 9);
  auto spec = spec_for(TargetKind::psi_l, c, 5);
  spec.subset = {0, 1, 2, 3};
  auto inj = true_nuisances(c, c.horizon, Estimand::survival, 400);
  OracleOptions opt;
  opt.n_draws = 200000;
  const double ate = oracle_ate(c, c.horizon, Estimand::survival, opt).value;
  inj.cate_projection = [ate](std::span<const double>) { return ate; };
  spec.injected = inj;
  const auto r = estimate_target(data, spec);
  EXPECT_NEAR(r.point, 1.0, 4 * r.se + 0.01);
}

TEST(Estimators, ZetaBackTransformStaysInUnitInterval) {
  const auto c = mild_config();
  const auto data = simulate(c, 1500, 10);
  auto spec = spec_for(TargetKind::zeta_l, c, 5);
  spec.injected = oracle_injection(c, Estimand::survival, {0});
  const auto z = estimate_target(data, spec);
  ASSERT_TRUE(z.psi_point && z.psi_ci);
  EXPECT_GT(*z.psi_point, 0.0);
  EXPECT_LT(*z.psi_point, 1.0);
  EXPECT_GT((*z.psi_ci)[0], 0.0);
  EXPECT_LT((*z.psi_ci)[1], 1.0);
  EXPECT_NEAR(*z.psi_point, expit(z.point), 1e-15);
  EXPECT_TRUE(z.diagnostics.dropped_folds.empty());
  auto pspec = spec;
  pspec.kind = TargetKind::psi_l;
  const auto p = estimate_target(data, pspec);
  EXPECT_NEAR(*z.psi_point, p.point, 2 * p.se);
  EXPECT_NEAR(*z.statistic, z.point / z.se, 1e-12);
}

TEST(Estimators, ZetaAllFoldsDroppedIsDegenerate) {
  const auto c = weibull_cox_design();
  const auto data = simulate(c, 100, 11);
  auto spec = spec_for(TargetKind::zeta_l, c, 3);
  auto inj = true_nuisances(c, c.horizon, Estimand::survival, 100);
  inj.cate_projection = inj.cate;  // Θ⁰_l = 0 in every fold
  spec.injected = inj;
  EXPECT_THROW(estimate_target(data, spec), DegenerateTarget);
}

TEST(Estimators, CollinearCovariateIsDegenerate) {
  const auto c = weibull_cox_design();
  auto sim = simulate(c, 100, 12);
  std::vector<double> x(sim.covariates().begin(), sim.covariates().end());
  for (std::size_t i = 0; i < sim.n(); ++i) x[i * 4 + 1] = x[i * 4];
  const SurvivalDataset data({sim.times().begin(), sim.times().end()}, {sim.events().begin(), sim.events().end()},
                             {sim.treatments().begin(), sim.treatments().end()}, x, sim.covariate_names());
  auto spec = spec_for(TargetKind::omega_j, c, 2);
  auto inj = oracle_injection(c, Estimand::survival, {0});
  inj.covariate_mean = [](std::span<const double> z) { return z[1]; };
  spec.injected = inj;
  EXPECT_THROW(estimate_target(data, spec), DegenerateTarget);
}

TEST(Estimators, RmstTargetsRun) {
  const auto c = mild_config();
  const auto data = simulate(c, 200, 13);
  auto spec = spec_for(TargetKind::omega_j, c, 3);
  spec.estimand = Estimand::rmst;
  const auto r = estimate_target(data, spec);
  EXPECT_TRUE(std::isfinite(r.point));
  EXPECT_GT(r.se, 0.0);
}

TEST(Estimators, FitFailureNamesFold) {
  const auto c = weibull_cox_design();
  auto sim = simulate(c, 40, 14);
  std::vector<int> a(sim.n(), 0);
  a[0] = 1;
  const SurvivalDataset data({sim.times().begin(), sim.times().end()}, {sim.events().begin(), sim.events().end()},
                             a, {sim.covariates().begin(), sim.covariates().end()}, sim.covariate_names());
  auto spec = spec_for(TargetKind::theta_l, c, 2);
  try {
    estimate_target(data, spec);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("fold"), std::string::npos);
  }
}
