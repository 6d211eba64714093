#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tevim/oracle/oracle.hpp"
#include "tevim/oracle/true_nuisances.hpp"

using namespace tevim;

namespace {

// τ(x) = 2 x1 + x2² over two standard normals: τ_{1} = x2², Θ_1 = 4,
// Θ_d = 4 + var(x2²) = 6, Ω_1 = 2, the partially linear remainder is zero
// and the linear one is x2² − 1 with norm √2.
struct Quadratic {
  double operator()(std::span<const double> x) const { return 2.0 * x[0] + x[1] * x[1]; }
};

DgpConfig flat_config() {
  DgpConfig c;
  c.dimension = 2;
  c.horizon = 1.0;
  c.outcome = {0.7, 1.3, {0.4, -0.2}, 0.0, {0.0, 0.0}};
  c.propensity = {0.0, {0.0, 0.0}};
  return c;
}

OracleOptions small(std::size_t n, std::uint64_t seed = 3, std::size_t inner = 400) {
  OracleOptions o;
  o.n_draws = n;
  o.inner_draws = inner;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(Oracle, QuadraticVarianceDecomposition) {
  const auto v = oracle_variance(Quadratic{}, 2, {0}, small(100000));
  EXPECT_NEAR(v.theta_l.value, 4.0, 4 * v.theta_l.mc_se + 1e-3);
  EXPECT_NEAR(v.theta_d.value, 6.0, 4 * v.theta_d.mc_se);
  EXPECT_NEAR(v.psi.value, 2.0 / 3.0, 4 * v.psi.mc_se);
  EXPECT_LT(v.psi.mc_se, 0.01);
}

TEST(Oracle, LawOfTotalVariance) {
  const auto c = weibull_cox_design();
  const auto v = oracle_theta(c, {1}, c.horizon, Estimand::survival, small(20000));
  // Θ_l = var τ − var τ_l holds exactly for the population quantities
  EXPECT_NEAR(v.var_tau, v.theta_l.value + v.var_tau_l, 4 * v.theta_l.mc_se);
  EXPECT_GT(v.psi.value, 0.0);
  EXPECT_LT(v.psi.value, 1.0);
}

TEST(Oracle, McSeShrinksWithDraws) {
  const auto a = oracle_variance(Quadratic{}, 2, {0}, small(5000, 11, 100));
  const auto b = oracle_variance(Quadratic{}, 2, {0}, small(20000, 11, 100));
  const double ratio = b.psi.mc_se / a.psi.mc_se;
  EXPECT_GT(ratio, 0.4);
  EXPECT_LT(ratio, 0.6);
}

TEST(Oracle, Deterministic) {
  const auto c = weibull_cox_design();
  const auto a = oracle_theta(c, {0}, c.horizon, Estimand::survival, small(2000));
  const auto b = oracle_theta(c, {0}, c.horizon, Estimand::survival, small(2000));
  EXPECT_EQ(a.psi.value, b.psi.value);
  EXPECT_EQ(a.psi.mc_se, b.psi.mc_se);
  const auto d = oracle_theta(c, {0}, c.horizon, Estimand::survival, small(2000, 4));
  EXPECT_NE(a.psi.value, d.psi.value);
}

TEST(Oracle, ZeroEffectIsDegenerate) {
  const auto c = flat_config();
  const auto v = oracle_theta(c, {0}, c.horizon, Estimand::survival, small(1000));
  EXPECT_EQ(v.theta_d.value, 0.0);
  EXPECT_TRUE(std::isnan(v.psi.value));
  EXPECT_THROW(oracle_psi(c, {0}, c.horizon, Estimand::survival, small(1000)), DegenerateTarget);
  const auto p = oracle_omega(c, 0, c.horizon, Estimand::rmst, small(1000));
  EXPECT_EQ(p.gamma.value, 0.0);
  EXPECT_EQ(p.omega.value, 0.0);
  EXPECT_NEAR(oracle_ate(c, c.horizon, Estimand::survival, small(100)).value, 0.0, 1e-15);
}

TEST(Oracle, QuadraticProjection) {
  const auto p = oracle_projection(Quadratic{}, 2, 0, small(100000));
  EXPECT_NEAR(p.omega.value, 2.0, 4 * p.omega.mc_se);
  EXPECT_NEAR(p.chi.value, 1.0, 4 * p.chi.mc_se);
  const auto e = oracle_projection_errors(Quadratic{}, 2, 0, small(50000, 5, 20));
  // antithetic inner pairs recover x2² exactly, so the remainder is (2 − Ω̂) x1
  EXPECT_NEAR(e.omega, 2.0, 0.05);
  EXPECT_NEAR(e.norm_partial, std::abs(2.0 - e.omega), 2e-3);
  EXPECT_NEAR(e.norm_linear, std::sqrt(2.0), 4 * e.mc_se_linear);
  EXPECT_LE(e.norm_partial, e.norm_linear);
}

TEST(Oracle, SurvivalTauAtOriginClosedForm) {
  const auto c = weibull_cox_design();
  const double x[4] = {0, 0, 0, 0};
  const double h = 2.0 * std::pow(10.0, 0.0025);
  const double expected = std::exp(-h * std::exp(-2.0)) - std::exp(-h);
  EXPECT_NEAR(oracle_tau(c, x, c.horizon, Estimand::survival), expected, 1e-14);
  EXPECT_NEAR(oracle_tau(weibull_cox_design_literal(), x, 10.0, Estimand::survival), expected, 1e-14);
  EXPECT_NEAR(TrueCate(c, c.horizon, Estimand::survival)(x), expected, 1e-14);
  EXPECT_NEAR(expected, 0.627894972910119, 1e-14);
}

TEST(Oracle, RmstClosedFormMatchesQuadrature) {
  const double x[2] = {0.3, -1.1};
  for (double shape : {0.1, 0.5, 1.0, 1.7, 3.0}) {
    WeibullCoxHazard h{0.8, shape, {0.5, 0.2}, -0.7, {0.1, 0.4}};
    for (int a : {0, 1}) {
      for (double t : {0.2, 1.0, 4.0}) {
        const double q = rmst_quadrature(h, a, x, t, 1e-12);
        EXPECT_NEAR(rmst_weibull(h, a, x, t), q, 1e-9 * std::max(1.0, q)) << shape << " " << a << " " << t;
      }
    }
  }
}

TEST(Oracle, RmstExponentialByHand) {
  WeibullCoxHazard h{0.5, 1.0, {0.0}, 0.0, {0.0}};
  const double x[1] = {0.0};
  EXPECT_NEAR(rmst_quadrature(h, 0, x, 3.0), (1.0 - std::exp(-1.5)) / 0.5, 1e-10);
  EXPECT_NEAR(rmst_weibull(h, 0, x, 3.0), (1.0 - std::exp(-1.5)) / 0.5, 1e-14);
}

TEST(Oracle, QuadratureToleranceStable) {
  const auto c = weibull_cox_design();
  const double x[4] = {0.5, -0.2, 1.0, 0.3};
  const double a = oracle_tau(c, x, c.horizon, Estimand::rmst, 1e-6);
  const double b = oracle_tau(c, x, c.horizon, Estimand::rmst, 1e-8);
  EXPECT_NEAR(a, b, 1e-5);
  EXPECT_NEAR(TrueCate(c, c.horizon, Estimand::rmst)(x), b, 1e-7);
}

TEST(Oracle, InvalidArguments) {
  const auto c = weibull_cox_design();
  EXPECT_THROW(oracle_theta(c, {}, 1.0, Estimand::survival, small(10)), Error);
  EXPECT_THROW(oracle_theta(c, {4}, 1.0, Estimand::survival, small(10)), Error);
  EXPECT_THROW(oracle_omega(c, 7, 1.0, Estimand::survival, small(10)), Error);
}

TEST(TrueNuisances, StepApproximationHitsGridValues) {
  const auto c = weibull_cox_design();
  const auto grid = hazard_grid(c.horizon, 50, 20);
  EXPECT_EQ(grid.size(), 70u);
  EXPECT_DOUBLE_EQ(grid.back(), c.horizon);
  for (std::size_t k = 1; k < grid.size(); ++k) EXPECT_LT(grid[k - 1], grid[k]);
  const double x[4] = {0.1, 0.2, -0.3, 0.4};
  const auto s = step_approximation(c.outcome, 1, x, grid);
  for (double u : {grid[5], grid[30], grid.back()}) {
    EXPECT_NEAR(s(u), c.outcome.cumhaz(u, 1, x), 1e-12);
  }
}

TEST(TrueNuisances, InjectedFunctionsMatchConfig) {
  const auto c = weibull_cox_design();
  const auto inj = true_nuisances(c, c.horizon, Estimand::survival, 200);
  const double x[4] = {0.3, -0.4, 0.0, 1.0};
  EXPECT_NEAR(inj.propensity->predict_raw(x), c.propensity.probability(x), 1e-15);
  EXPECT_NEAR(inj.cate(x), oracle_tau(c, x, c.horizon, Estimand::survival), 1e-14);
  EXPECT_EQ(inj.covariate_mean(x), 0.0);
  const auto cens = inj.censoring->predict(0, x);
  EXPECT_NEAR(cens(c.horizon), c.censoring->cumhaz(c.horizon, 0, x), 1e-12);
}

TEST(TrueNuisances, CateProjectionOfQuadratic) {
  const auto proj = mc_cate_projection(Quadratic{}, {0}, 10, 1);
  const double x[2] = {0.9, -1.5};
  EXPECT_NEAR(proj(x), 2.25, 1e-12);
}
