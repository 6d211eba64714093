#pragma once

// Monte Carlo ground truth for the simulation designs, where X is a vector
// of independent standard normals and both hazards are Weibull-Cox.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "tevim/core/error.hpp"
#include "tevim/core/rng.hpp"
#include "tevim/data/dgp.hpp"
#include "tevim/nuisance/models.hpp"

namespace tevim {

struct OracleResult {
  double value = 0.0;
  double mc_se = 0.0;
  std::size_t n_draws = 0;
  std::uint64_t seed = 0;
};

struct OracleOptions {
  std::size_t n_draws = 1000000;
  std::size_t inner_draws = 2000;  ///< nested draws of X_l, used in antithetic pairs
  std::uint64_t seed = 0;
};

/// ∫₀ᵗ S(u|a,x) du by adaptive Gauss-Kronrod. For shape < 1 the integral is
/// taken over v = u^shape, where the integrand is smooth.
inline double rmst_quadrature(const WeibullCoxHazard& h, int a, std::span<const double> x, double t,
                              double tolerance = 1e-10) {
  if (t <= 0.0) return 0.0;
  using boost::math::quadrature::gauss_kronrod;
  const double c = h.scale * std::exp(h.linear_predictor(a, x));
  const double k = h.shape;
  if (k >= 1.0) {
    auto f = [&](double u) { return std::exp(-c * std::pow(u, k)); };
    return gauss_kronrod<double, 31>::integrate(f, 0.0, t, 15, tolerance);
  }
  auto g = [&](double v) { return std::pow(v, 1.0 / k - 1.0) * std::exp(-c * v) / k; };
  return gauss_kronrod<double, 31>::integrate(g, 0.0, std::pow(t, k), 15, tolerance);
}

/// ∫₀ᵗ exp(−c u^k) du = c^{−1/k} Γ(1/k) P(1/k, c t^k) / k, falling back to
/// quadrature where the incomplete-gamma form loses range.
inline double rmst_weibull(const WeibullCoxHazard& h, int a, std::span<const double> x, double t) {
  if (t <= 0.0) return 0.0;
  const double lp = h.linear_predictor(a, x);
  const double c = h.scale * std::exp(lp);
  const double k = h.shape;
  if (k == 1.0) return -std::expm1(-c * t) / c;
  const double s = 1.0 / k;
  if (s <= 50.0) {
    const double p = boost::math::gamma_p(s, c * std::pow(t, k));
    const double v = std::exp(std::lgamma(s) - s * std::log(c) - std::log(k)) * p;
    if (std::isfinite(v) && p > 1e-250) return v;
  }
  return rmst_quadrature(h, a, x, t);
}

/// τ(x) from the closed-form survival curves; rmst by quadrature.
inline double oracle_tau(const DgpConfig& config, std::span<const double> x, double t, Estimand estimand,
                         double tolerance = 1e-10) {
  const auto& h = config.outcome;
  if (estimand == Estimand::survival) return h.survival(t, 1, x) - h.survival(t, 0, x);
  return rmst_quadrature(h, 1, x, t, tolerance) - rmst_quadrature(h, 0, x, t, tolerance);
}

/// Fast τ for Monte Carlo loops (closed forms only).
class TrueCate {
 public:
  TrueCate(DgpConfig config, double horizon, Estimand estimand)
      : config_(std::move(config)), horizon_(horizon), estimand_(estimand) {
    config_.validate();
    const auto& h = config_.outcome;
    base_ = h.scale * std::pow(horizon_, h.shape);
  }

  double operator()(std::span<const double> x) const {
    const auto& h = config_.outcome;
    if (estimand_ == Estimand::rmst) return rmst_weibull(h, 1, x, horizon_) - rmst_weibull(h, 0, x, horizon_);
    double lp0 = 0.0, shift = h.treatment;
    for (std::size_t j = 0; j < x.size(); ++j) {
      lp0 += h.coefficients[j] * x[j];
      shift += h.interactions[j] * x[j];
    }
    const double e0 = std::exp(lp0);
    return std::exp(-base_ * e0 * std::exp(shift)) - std::exp(-base_ * e0);
  }

  std::size_t dimension() const { return config_.dimension; }

  /// Survival τ is exp(−H e^{lp0+shift}) − exp(−H e^{lp0}), both linear in x.
  bool linear_survival() const { return estimand_ == Estimand::survival; }
  double lp_coefficient(std::size_t j) const { return config_.outcome.coefficients[j]; }
  double shift_coefficient(std::size_t j) const { return config_.outcome.interactions[j]; }
  double treatment_shift() const { return config_.outcome.treatment; }
  /// τ from exp(lp0) and exp(shift).
  double from_exponentials(double e0, double es) const { return std::exp(-base_ * e0 * es) - std::exp(-base_ * e0); }

 private:
  DgpConfig config_;
  double horizon_;
  Estimand estimand_;
  double base_ = 0.0;  // scale · t^shape
};

struct VarianceOracle {
  OracleResult theta_l;  ///< E[var{τ(X) | X_{-l}}]
  OracleResult theta_d;  ///< var τ(X)
  OracleResult psi;
  double var_tau = 0.0;
  double var_tau_l = 0.0;  ///< var τ_l(X), inner-MC bias removed
};

namespace detail {

struct Moments {
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n) : 0.0; }
  double se() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0; }
};

/// Inner estimate of E[τ | X_{-l} = x_{-l}] from antithetic pairs; returns the
/// mean and the estimated variance of that mean.
template <class Tau>
std::pair<double, double> inner_mean(const Tau& tau, std::vector<double>& x, std::span<const std::size_t> l,
                                     std::size_t draws, Engine& g, NormalSampler& normal,
                                     std::vector<double>& z) {
  const std::size_t pairs = std::max<std::size_t>(draws / 2, 2);
  std::vector<double> saved(l.size());
  for (std::size_t m = 0; m < l.size(); ++m) saved[m] = x[l[m]];
  Moments pm;
  if constexpr (std::is_same_v<Tau, TrueCate>) {
    if (tau.linear_survival()) {
      double lp0 = 0.0, shift = tau.treatment_shift();
      std::vector<char> in_l(x.size(), 0);
      for (auto j : l) in_l[j] = 1;
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (in_l[j]) continue;
        lp0 += tau.lp_coefficient(j) * x[j];
        shift += tau.shift_coefficient(j) * x[j];
      }
      const double e0 = std::exp(lp0), es = std::exp(shift);
      for (std::size_t p = 0; p < pairs; ++p) {
        double a = 0.0, b = 0.0;
        for (std::size_t m = 0; m < l.size(); ++m) {
          const double v = normal(g);
          a += tau.lp_coefficient(l[m]) * v;
          b += tau.shift_coefficient(l[m]) * v;
        }
        const double u = std::exp(a), w = std::exp(b);
        const double up = tau.from_exponentials(e0 * u, es * w);
        const double down = tau.from_exponentials(e0 / u, es / w);
        pm.add(0.5 * (up + down));
      }
      return {pm.mean, pm.m2 / static_cast<double>(pairs - 1) / static_cast<double>(pairs)};
    }
  }
  for (std::size_t p = 0; p < pairs; ++p) {
    for (auto& v : z) v = normal(g);
    for (std::size_t m = 0; m < l.size(); ++m) x[l[m]] = z[m];
    const double up = tau(std::span<const double>(x));
    for (std::size_t m = 0; m < l.size(); ++m) x[l[m]] = -z[m];
    const double down = tau(std::span<const double>(x));
    pm.add(0.5 * (up + down));
  }
  for (std::size_t m = 0; m < l.size(); ++m) x[l[m]] = saved[m];
  const double var_of_mean = pm.m2 / static_cast<double>(pairs - 1) / static_cast<double>(pairs);
  return {pm.mean, var_of_mean};
}

inline double ratio_se(const std::vector<double>& num_if, const std::vector<double>& den_if, double num,
                       double den) {
  Moments m;
  for (std::size_t i = 0; i < num_if.size(); ++i) m.add((num_if[i] - num / den * den_if[i]) / den);
  return m.se();
}

}  // namespace detail

/// Θ_l, Θ_d and Ψ_l for τ over independent standard-normal covariates in
/// dimension d. τ_l is estimated per outer draw by nested Monte Carlo and
/// the resulting O(1/inner_draws) bias is removed.
template <class Tau>
VarianceOracle oracle_variance(const Tau& tau, std::size_t d, std::vector<std::size_t> l, const OracleOptions& opt) {
  if (l.empty()) throw Error("oracle", "subset l must be nonempty");
  for (auto j : l) {
    if (j >= d) throw Error("oracle", "subset index out of range");
  }
  if (opt.n_draws < 2) throw Error("oracle", "need at least 2 outer draws");
  Engine outer(derive_seed(opt.seed, 1));
  Engine inner(derive_seed(opt.seed, 2));
  NormalSampler n_outer, n_inner;
  std::vector<double> x(d), z(l.size());
  std::vector<double> a(opt.n_draws), b(opt.n_draws), c(opt.n_draws);
  for (std::size_t i = 0; i < opt.n_draws; ++i) {
    for (auto& v : x) v = n_outer(outer);
    a[i] = tau(std::span<const double>(x));
    const auto [mean, var_of_mean] = detail::inner_mean(tau, x, l, opt.inner_draws, inner, n_inner, z);
    b[i] = mean;
    c[i] = var_of_mean;
  }
  const double nd = static_cast<double>(opt.n_draws);
  double abar = 0.0, bbar = 0.0, cbar = 0.0;
  for (std::size_t i = 0; i < opt.n_draws; ++i) {
    abar += a[i];
    bbar += b[i];
    cbar += c[i];
  }
  abar /= nd;
  bbar /= nd;
  cbar /= nd;
  std::vector<double> if_l(opt.n_draws), if_d(opt.n_draws);
  double theta_l = 0.0, theta_d = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < opt.n_draws; ++i) {
    if_l[i] = (a[i] - b[i]) * (a[i] - b[i]) - c[i];
    if_d[i] = (a[i] - abar) * (a[i] - abar);
    theta_l += if_l[i];
    theta_d += if_d[i];
    var_b += (b[i] - bbar) * (b[i] - bbar);
  }
  theta_l /= nd;
  theta_d /= nd;
  var_b /= nd;
  detail::Moments ml, md;
  for (std::size_t i = 0; i < opt.n_draws; ++i) {
    ml.add(if_l[i]);
    md.add(if_d[i]);
  }
  VarianceOracle out;
  out.theta_l = {theta_l, ml.se(), opt.n_draws, opt.seed};
  out.theta_d = {theta_d, md.se(), opt.n_draws, opt.seed};
  out.var_tau = theta_d;
  out.var_tau_l = var_b - cbar;
  if (!(theta_d > 0.0)) {
    out.psi = {std::nan(""), std::nan(""), opt.n_draws, opt.seed};
    return out;
  }
  out.psi = {theta_l / theta_d, detail::ratio_se(if_l, if_d, theta_l, theta_d), opt.n_draws, opt.seed};
  return out;
}

struct ProjectionOracle {
  OracleResult gamma;
  OracleResult chi;
  OracleResult omega;
};

/// Γ_j = E[X_j τ(X)], χ_j = E[X_j²] and Ω_j = Γ_j/χ_j; under independent
/// centred covariates E(X_j | X_{-j}) = 0 so these equal the conditional
/// forms.
template <class Tau>
ProjectionOracle oracle_projection(const Tau& tau, std::size_t d, std::size_t j, const OracleOptions& opt) {
  if (j >= d) throw Error("oracle", "covariate index out of range");
  if (opt.n_draws < 2) throw Error("oracle", "need at least 2 draws");
  Engine g(derive_seed(opt.seed, 3));
  NormalSampler normal;
  std::vector<double> x(d), gi(opt.n_draws), ci(opt.n_draws);
  detail::Moments mg, mc;
  for (std::size_t i = 0; i < opt.n_draws; ++i) {
    for (auto& v : x) v = normal(g);
    gi[i] = x[j] * tau(std::span<const double>(x));
    ci[i] = x[j] * x[j];
    mg.add(gi[i]);
    mc.add(ci[i]);
  }
  ProjectionOracle out;
  out.gamma = {mg.mean, mg.se(), opt.n_draws, opt.seed};
  out.chi = {mc.mean, mc.se(), opt.n_draws, opt.seed};
  if (!(mc.mean > 0.0)) throw Error("oracle", "chi estimate is not positive");
  out.omega = {mg.mean / mc.mean, detail::ratio_se(gi, ci, mg.mean, mc.mean), opt.n_draws, opt.seed};
  return out;
}

struct ProjectionErrors {
  double norm_partial = 0.0;  ///< ‖τ − Ω_j x_j − E(τ | X_{-j})‖
  double norm_linear = 0.0;   ///< ‖τ − α − γᵀx‖ at the least-squares (α, γ)
  double mc_se_partial = 0.0;
  double mc_se_linear = 0.0;
  double mc_se_difference = 0.0;  ///< of norm_linear − norm_partial
  double omega = 0.0;
  std::size_t n_draws = 0;
};

/// L2 norms of the best partially linear remainder and of the linear
/// least-squares remainder of τ. Ω_j and the OLS fit use the same draws.
template <class Tau>
ProjectionErrors oracle_projection_errors(const Tau& tau, std::size_t d, std::size_t j, const OracleOptions& opt) {
  if (j >= d) throw Error("oracle", "covariate index out of range");
  const std::size_t n = opt.n_draws;
  if (n < d + 2) throw Error("oracle", "too few draws for the linear projection");
  Engine outer(derive_seed(opt.seed, 4));
  Engine inner(derive_seed(opt.seed, 5));
  NormalSampler n_outer, n_inner;
  std::vector<double> x(d), z(1);
  const std::size_t l[1] = {j};
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + 1));
  Eigen::VectorXd t(static_cast<Eigen::Index>(n));
  std::vector<double> tj(n), cvar(n), xj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = n_outer(outer);
    const auto r = static_cast<Eigen::Index>(i);
    design(r, 0) = 1.0;
    for (std::size_t m = 0; m < d; ++m) design(r, static_cast<Eigen::Index>(m + 1)) = x[m];
    t[r] = tau(std::span<const double>(x));
    const auto [mean, var_of_mean] = detail::inner_mean(tau, x, l, opt.inner_draws, inner, n_inner, z);
    tj[i] = mean;
    cvar[i] = var_of_mean;
    xj[i] = x[j];
  }
  // Ω_j = E[X_j τ] / E[X_j²]
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += xj[i] * t[static_cast<Eigen::Index>(i)];
    den += xj[i] * xj[i];
  }
  const double omega = num / den;
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(t);
  const Eigen::VectorXd lin_res = t - design * coef;
  detail::Moments mp, ml, mdiff;
  std::vector<double> rp(n), rl(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double res = t[static_cast<Eigen::Index>(i)] - omega * xj[i] - tj[i];
    rp[i] = res * res - cvar[i];
    rl[i] = lin_res[static_cast<Eigen::Index>(i)] * lin_res[static_cast<Eigen::Index>(i)];
    mp.add(rp[i]);
    ml.add(rl[i]);
  }
  ProjectionErrors out;
  out.omega = omega;
  out.n_draws = n;
  out.norm_partial = std::sqrt(std::max(mp.mean, 0.0));
  out.norm_linear = std::sqrt(std::max(ml.mean, 0.0));
  // delta method for sqrt, floored so that a zero norm still gets a finite scale
  const double fp = 2.0 * std::max(out.norm_partial, 1e-3);
  const double fl = 2.0 * std::max(out.norm_linear, 1e-3);
  out.mc_se_partial = mp.se() / fp;
  out.mc_se_linear = ml.se() / fl;
  for (std::size_t i = 0; i < n; ++i) mdiff.add(rl[i] / fl - rp[i] / fp);
  out.mc_se_difference = mdiff.se();
  return out;
}

// Config-level entry points.

inline VarianceOracle oracle_theta(const DgpConfig& config, const std::vector<std::size_t>& l, double t,
                                   Estimand estimand, const OracleOptions& opt) {
  return oracle_variance(TrueCate(config, t, estimand), config.dimension, l, opt);
}

inline OracleResult oracle_psi(const DgpConfig& config, const std::vector<std::size_t>& l, double t,
                               Estimand estimand, const OracleOptions& opt) {
  const auto v = oracle_theta(config, l, t, estimand, opt);
  if (!(v.theta_d.value > 0.0)) throw DegenerateTarget("oracle", "theta_d estimate is not positive");
  return v.psi;
}

inline ProjectionOracle oracle_omega(const DgpConfig& config, std::size_t j, double t, Estimand estimand,
                                     const OracleOptions& opt) {
  return oracle_projection(TrueCate(config, t, estimand), config.dimension, j, opt);
}

inline ProjectionErrors oracle_projection_errors(const DgpConfig& config, std::size_t j, double t,
                                                 Estimand estimand, const OracleOptions& opt) {
  return oracle_projection_errors(TrueCate(config, t, estimand), config.dimension, j, opt);
}

inline OracleResult oracle_ate(const DgpConfig& config, double t, Estimand estimand, const OracleOptions& opt) {
  const TrueCate tau(config, t, estimand);
  Engine g(derive_seed(opt.seed, 6));
  NormalSampler normal;
  std::vector<double> x(config.dimension);
  detail::Moments m;
  for (std::size_t i = 0; i < opt.n_draws; ++i) {
    for (auto& v : x) v = normal(g);
    m.add(tau(x));
  }
  return {m.mean, m.se(), opt.n_draws, opt.seed};
}

}  // namespace tevim
