#pragma once

// Weibull-Cox data-generating process with i.i.d. standard normal covariates:
//
//   Λ(t | a, x)   = scale · t^shape · exp(β·x + a·(γ0 + γ·x))
//   Λ_c(t | a, x) = same form, independent of T given (A, X)
//   π(1 | x)      = expit(α0 + α·x)

#include <cfloat>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tevim/core/error.hpp"
#include "tevim/core/rng.hpp"
#include "tevim/data/dataset.hpp"

namespace tevim {

struct WeibullCoxHazard {
  double scale = 1.0;
  double shape = 1.0;
  std::vector<double> coefficients;  ///< β, one per covariate
  double treatment = 0.0;            ///< γ0
  std::vector<double> interactions;  ///< γ, one per covariate (treatment × x)

  double linear_predictor(int a, std::span<const double> x) const {
    double lp = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      lp += coefficients[j] * x[j];
      if (a == 1) lp += interactions[j] * x[j];
    }
    if (a == 1) lp += treatment;
    return lp;
  }

  double cumhaz(double t, int a, std::span<const double> x) const {
    if (t <= 0.0) return 0.0;
    return scale * std::pow(t, shape) * std::exp(linear_predictor(a, x));
  }

  double survival(double t, int a, std::span<const double> x) const {
    return std::exp(-cumhaz(t, a, x));
  }
};

struct LogisticPropensity {
  double intercept = 0.0;
  std::vector<double> coefficients;

  double probability(std::span<const double> x) const {
    double eta = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) eta += coefficients[j] * x[j];
    return 1.0 / (1.0 + std::exp(-eta));
  }
};

struct DgpConfig {
  std::size_t dimension = 0;
  double horizon = 1.0;
  WeibullCoxHazard outcome;
  std::optional<WeibullCoxHazard> censoring;  ///< nullopt: no censoring (C ≡ +∞)
  LogisticPropensity propensity;

  void validate() const {
    auto check = [&](const WeibullCoxHazard& h, const char* name) {
      if (!(h.scale > 0.0) || !(h.shape > 0.0)) {
        throw Error("data", std::string(name) + ": scale and shape must be positive");
      }
      if (h.coefficients.size() != dimension || h.interactions.size() != dimension) {
        throw Error("data", std::string(name) + ": coefficient vectors must have length d");
      }
    };
    if (dimension == 0) throw Error("data", "dgp: covariate dimension must be positive");
    if (!(horizon > 0.0)) throw Error("data", "dgp: horizon must be positive");
    check(outcome, "outcome_hazard");
    if (censoring) check(*censoring, "censoring_hazard");
    if (propensity.coefficients.size() != dimension) {
      throw Error("data", "propensity: coefficient vector must have length d");
    }
  }

  /// The same law observed on the time scale u ↦ u^power: shapes divide by
  /// `power` and the horizon maps to horizon^power. S(t|a,x) at the mapped
  /// horizon, and every rank-based estimator, are unchanged.
  DgpConfig time_rescaled(double power) const {
    if (!(power > 0.0)) throw Error("data", "dgp: time power must be positive");
    DgpConfig out = *this;
    out.outcome.shape /= power;
    if (out.censoring) out.censoring->shape /= power;
    out.horizon = std::pow(horizon, power);
    return out;
  }
};

/// The Weibull-Cox simulation design with four covariates exactly as
/// written: Λ = 2 t^0.0025 exp{−X1 − X2 − 0.3X3 + 0.1X4 − A(2 − 0.5X1 − 0.3X2)},
/// Λ_c = 2 t^0.00025 exp(−0.3 X1), π = expit(0.3X1 + 0.3X2), horizon 10.
inline DgpConfig weibull_cox_design_literal() {
  DgpConfig c;
  c.dimension = 4;
  c.horizon = 10.0;
  c.outcome = {2.0, 0.0025, {-1.0, -1.0, -0.3, 0.1}, -2.0, {0.5, 0.3, 0.0, 0.0}};
  c.censoring = WeibullCoxHazard{2.0, 0.00025, {-0.3, 0.0, 0.0, 0.0}, 0.0, {0.0, 0.0, 0.0, 0.0}};
  c.propensity = {0.0, {0.3, 0.3, 0.0, 0.0}};
  return c;
}

/// The literal design re-expressed on the time scale u^0.0025 (outcome
/// shape 1, censoring shape 0.1). With the literal shapes most simulated
/// times underflow to 0 in double precision; this version does not.
inline DgpConfig weibull_cox_design() { return weibull_cox_design_literal().time_rescaled(0.0025); }

/// Solves scale·t^shape·exp(lp) = −log U for t.
inline double inverse_transform_survival_time(const WeibullCoxHazard& h, int a,
                                              std::span<const double> x, double uniform_draw) {
  if (!(uniform_draw > 0.0 && uniform_draw < 1.0)) {
    throw Error("data", "inverse transform: uniform draw must lie strictly inside (0,1)");
  }
  const double log_t =
      (std::log(-std::log(uniform_draw)) - std::log(h.scale) - h.linear_predictor(a, x)) / h.shape;
  return std::exp(log_t);
}

struct SimulationResult {
  SurvivalDataset data;
  std::vector<double> latent_event;   ///< T, possibly +inf
  std::vector<double> latent_censor;  ///< C, +inf when uncensored
};

namespace detail {

inline double log_event_time(const WeibullCoxHazard& h, int a, std::span<const double> x, double u) {
  return (std::log(-std::log(u)) - std::log(h.scale) - h.linear_predictor(a, x)) / h.shape;
}

inline double clamp_time(double log_t) {
  const double t = std::exp(log_t);
  return std::isinf(t) ? DBL_MAX : t;
}

}  // namespace detail

/// Draws n subjects. Δ compares log T with log C so that the indicator stays
/// exact when the times themselves under- or overflow.
inline SimulationResult simulate_with_latent(const DgpConfig& config, std::size_t n,
                                             std::uint64_t seed) {
  config.validate();
  if (n == 0) throw Error("data", "simulate: n must be at least 1");
  const std::size_t d = config.dimension;
  Engine g(derive_seed(seed, 0x5eed));
  NormalSampler normal;
  std::vector<double> time(n), x(n * d), latent_t(n), latent_c(n);
  std::vector<int> event(n), trt(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> xi(x.data() + i * d, d);
    for (auto& v : xi) v = normal(g);
    const int a = uniform_open(g) < config.propensity.probability(xi) ? 1 : 0;
    const double log_t = detail::log_event_time(config.outcome, a, xi, uniform_open(g));
    double log_c = INFINITY;
    if (config.censoring) log_c = detail::log_event_time(*config.censoring, a, xi, uniform_open(g));
    trt[i] = a;
    event[i] = log_t <= log_c ? 1 : 0;
    time[i] = detail::clamp_time(std::min(log_t, log_c));
    latent_t[i] = std::exp(log_t);
    latent_c[i] = std::exp(log_c);
  }
  return {SurvivalDataset(std::move(time), std::move(event), std::move(trt), std::move(x),
                          default_covariate_names(d)),
          std::move(latent_t), std::move(latent_c)};
}

inline SurvivalDataset simulate(const DgpConfig& config, std::size_t n, std::uint64_t seed) {
  return simulate_with_latent(config, n, seed).data;
}

// JSON form: {"dimension", "horizon", "outcome_hazard", "censoring_hazard"
// (null = none), "propensity"}; hazards carry scale, shape, coefficients,
// treatment, interactions.

inline WeibullCoxHazard hazard_from_json(const nlohmann::json& j, std::size_t d) {
  WeibullCoxHazard h;
  h.scale = j.at("scale").get<double>();
  h.shape = j.at("shape").get<double>();
  h.coefficients = j.value("coefficients", std::vector<double>(d, 0.0));
  h.treatment = j.value("treatment", 0.0);
  h.interactions = j.value("interactions", std::vector<double>(d, 0.0));
  return h;
}

inline nlohmann::json hazard_to_json(const WeibullCoxHazard& h) {
  return {{"scale", h.scale},
          {"shape", h.shape},
          {"coefficients", h.coefficients},
          {"treatment", h.treatment},
          {"interactions", h.interactions}};
}

inline DgpConfig dgp_from_json(const nlohmann::json& j) {
  try {
    DgpConfig c;
    c.dimension = j.at("dimension").get<std::size_t>();
    c.horizon = j.value("horizon", 1.0);
    c.outcome = hazard_from_json(j.at("outcome_hazard"), c.dimension);
    if (j.contains("censoring_hazard") && !j.at("censoring_hazard").is_null()) {
      c.censoring = hazard_from_json(j.at("censoring_hazard"), c.dimension);
    }
    const auto& p = j.at("propensity");
    c.propensity.intercept = p.value("intercept", 0.0);
    c.propensity.coefficients = p.value("coefficients", std::vector<double>(c.dimension, 0.0));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error("data", std::string("dgp config: ") + e.what());
  }
}

inline nlohmann::json dgp_to_json(const DgpConfig& c) {
  return {{"dimension", c.dimension},
          {"horizon", c.horizon},
          {"outcome_hazard", hazard_to_json(c.outcome)},
          {"censoring_hazard", c.censoring ? hazard_to_json(*c.censoring) : nlohmann::json(nullptr)},
          {"propensity",
           {{"intercept", c.propensity.intercept}, {"coefficients", c.propensity.coefficients}}}};
}

}  // namespace tevim
