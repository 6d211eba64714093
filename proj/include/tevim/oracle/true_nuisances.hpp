#pragma once

// The data-generating nuisances packaged for injection into the estimators.
// Continuous hazards are represented by their values on a fixed grid
// (geometric near 0, uniform after), which makes the martingale sums
// Riemann-Stieltjes sums with O(grid spacing) error.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "tevim/core/rng.hpp"
#include "tevim/core/step_cumhaz.hpp"
#include "tevim/data/dgp.hpp"
#include "tevim/estimators/target.hpp"
#include "tevim/nuisance/models.hpp"
#include "tevim/oracle/oracle.hpp"

namespace tevim {

inline std::vector<double> hazard_grid(double horizon, std::size_t uniform_points = 2000,
                                       std::size_t geometric_points = 400) {
  std::vector<double> g;
  const double lo = horizon * 1e-9;
  const double hi = horizon / static_cast<double>(uniform_points);
  for (std::size_t k = 0; k < geometric_points; ++k) {
    g.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(geometric_points)));
  }
  for (std::size_t k = 1; k <= uniform_points; ++k) {
    g.push_back(horizon * static_cast<double>(k) / static_cast<double>(uniform_points));
  }
  return g;
}

/// Step function with jumps Λ(u_k) − Λ(u_{k−1}) at the grid points.
inline StepCumHazard step_approximation(const WeibullCoxHazard& h, int a, std::span<const double> x,
                                        const std::vector<double>& grid) {
  std::vector<double> sizes(grid.size());
  double prev = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double cur = h.cumhaz(grid[k], a, x);
    sizes[k] = cur - prev;
    prev = cur;
  }
  return StepCumHazard(grid, sizes);
}

/// τ_l(x) = E[τ(X) | X_{-l} = x_{-l}] with a fixed set of antithetic inner
/// draws (common random numbers across x).
template <class Tau>
CateFunction mc_cate_projection(Tau tau, std::vector<std::size_t> l, std::size_t draws, std::uint64_t seed) {
  Engine g(derive_seed(seed, 7));
  NormalSampler normal;
  auto z = std::make_shared<std::vector<double>>();
  for (std::size_t p = 0; p < draws / 2; ++p) {
    for (std::size_t m = 0; m < l.size(); ++m) z->push_back(normal(g));
  }
  return [tau = std::move(tau), l = std::move(l), z](std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    const std::size_t pairs = z->size() / l.size();
    double s = 0.0;
    for (std::size_t p = 0; p < pairs; ++p) {
      for (std::size_t m = 0; m < l.size(); ++m) y[l[m]] = (*z)[p * l.size() + m];
      s += tau(std::span<const double>(y));
      for (std::size_t m = 0; m < l.size(); ++m) y[l[m]] = -(*z)[p * l.size() + m];
      s += tau(std::span<const double>(y));
    }
    return s / static_cast<double>(2 * pairs);
  };
}

/// True Λ, Λ_c, π and τ for `config`; E(X_j | X_{-j}) = 0 under independent
/// centred covariates. cate_projection is left unset (see mc_cate_projection).
inline InjectedNuisances true_nuisances(const DgpConfig& config, double horizon, Estimand estimand,
                                        std::size_t uniform_points = 2000) {
  config.validate();
  InjectedNuisances inj;
  auto grid = std::make_shared<std::vector<double>>(hazard_grid(horizon, uniform_points));
  inj.event = std::make_shared<FunctionHazard>(
      [h = config.outcome, grid](int a, std::span<const double> x) { return step_approximation(h, a, x, *grid); },
      "true");
  if (config.censoring) {
    inj.censoring = std::make_shared<FunctionHazard>(
        [h = *config.censoring, grid](int a, std::span<const double> x) {
          return step_approximation(h, a, x, *grid);
        },
        "true");
  } else {
    inj.censoring = std::make_shared<FunctionHazard>([](int, std::span<const double>) { return StepCumHazard(); },
                                                     "none");
  }
  inj.propensity = std::make_shared<FunctionPropensity>(
      [p = config.propensity](std::span<const double> x) { return p.probability(x); });
  inj.cate = TrueCate(config, horizon, estimand);
  inj.covariate_mean = [](std::span<const double>) { return 0.0; };
  return inj;
}

}  // namespace tevim
