#pragma once

// Uncentered efficient influence function φ of the ATE for right-censored
// data. For arm a,
//
//   φ_a(O) = F_a(X) − 1(A=a)/π(a|X) · ∫₀ᵗ w(u) dM(u | A, X),
//   w(u)   = G(u) / { S(u−|A,X) · S_c(u−|A,X) },
//
// with F_a = S(t|a,X), G(u) = S(t|A,X) for the survival estimand and
// F_a = ∫₀ᵗ S(u|a,X) du, G(u) = H(u,t|A,X) = ∫_u^t S(v|A,X) dv for RMST.
// dM = dN − 1(T̃ ≥ u) dΛ; with a step Λ̂ the compensator is a finite sum over
// its jump points. Both denominators are floored at ε.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>

#include "tevim/core/error.hpp"
#include "tevim/core/step_cumhaz.hpp"
#include "tevim/data/dataset.hpp"
#include "tevim/nuisance/cate.hpp"
#include "tevim/nuisance/models.hpp"

namespace tevim {

/// Fitted nuisances for one training split.
struct NuisanceBundle {
  std::shared_ptr<const HazardModel> event;
  std::shared_ptr<const HazardModel> censoring;
  std::shared_ptr<const PropensityModel> propensity;
  CateFunction cate;             ///< τ̂
  CateFunction cate_projection;  ///< τ̂_l on the full x (optional)
  CateFunction covariate_mean;   ///< Ê^j on the full x (optional)
  double horizon = 1.0;
  Estimand estimand = Estimand::survival;
  double epsilon = 0.05;

  void validate() const {
    if (!event || !censoring || !propensity) throw Error("eif", "nuisance bundle is not fitted");
    if (!(horizon > 0.0)) throw Error("eif", "nuisance bundle: horizon must be positive");
    if (!(epsilon >= 0.0 && epsilon < 0.5)) throw Error("eif", "nuisance bundle: epsilon must lie in [0, 0.5)");
  }
};

struct ArmTerms {
  double plug_in = 0.0;      ///< F_a(X)
  double counting = 0.0;     ///< Δ·1(T̃ ≤ t)·w(T̃), own arm only
  double compensator = 0.0;  ///< Σ_{u_k ≤ min(t,T̃)} w(u_k) ΔΛ̂(u_k), own arm only
  double inverse_propensity = 0.0;  ///< 1(A=a)/π̂(a|X)
  double value = 0.0;        ///< φ_a

  double martingale() const { return inverse_propensity * (counting - compensator); }
};

struct PhiValue {
  ArmTerms arm1;
  ArmTerms arm0;
  double phi1 = 0.0;
  double phi0 = 0.0;
  double phi = 0.0;
  int truncated_weights = 0;  ///< denominators floored at ε
  bool truncated_propensity = false;
};

namespace detail {

inline double floor_eps(double v, double eps, int& truncated) {
  if (v < eps) {
    ++truncated;
    return eps;
  }
  return v;
}

/// w(u) for one subject's own-arm event and censoring curves.
inline double weight_at(double u, const StepCumHazard& event, const StepCumHazard& censoring, double horizon,
                        Estimand estimand, double eps, int& truncated) {
  const double numerator =
      estimand == Estimand::survival ? event.survival(horizon) : event.restricted_mean(u, horizon);
  const double s = floor_eps(event.survival_left(u), eps, truncated);
  const double sc = floor_eps(censoring.survival_left(u), eps, truncated);
  return numerator / (s * sc);
}

}  // namespace detail

/// w(u) for the subject's own arm.
inline double weight_numerator(double u, const Subject& subject, const NuisanceBundle& bundle) {
  bundle.validate();
  int truncated = 0;
  return detail::weight_at(u, bundle.event->predict(subject.treatment, subject.x),
                           bundle.censoring->predict(subject.treatment, subject.x), bundle.horizon,
                           bundle.estimand, bundle.epsilon, truncated);
}

/// Own-arm martingale integral ∫₀ᵗ w dM split into counting and compensator parts.
inline void martingale_terms(const Subject& s, const StepCumHazard& event, const StepCumHazard& censoring,
                             double horizon, Estimand estimand, double eps, ArmTerms& out, int& truncated) {
  if (s.event == 1 && s.time <= horizon) {
    out.counting = detail::weight_at(s.time, event, censoring, horizon, estimand, eps, truncated);
  }
  const auto times = event.jump_times();
  const auto sizes = event.jump_sizes();
  const auto cum = event.cumulative();
  const auto ctimes = censoring.jump_times();
  const auto ccum = censoring.cumulative();
  const double limit = std::min(horizon, s.time);
  const double survival_t = event.survival(horizon);
  const double total_area = estimand == Estimand::rmst ? event.restricted_mean(horizon) : 0.0;
  double area_before = 0.0;  // ∫₀^{u_k} Ŝ
  double prev_time = 0.0;
  double prev_level = 1.0;
  std::size_t c = 0;
  double comp = 0.0;
  for (std::size_t k = 0; k < times.size() && times[k] <= limit; ++k) {
    const double u = times[k];
    area_before += prev_level * (u - prev_time);
    const double s_left = k == 0 ? 1.0 : std::exp(-cum[k - 1]);
    while (c < ctimes.size() && ctimes[c] < u) ++c;
    const double sc_left = c == 0 ? 1.0 : std::exp(-ccum[c - 1]);
    const double numerator = estimand == Estimand::survival ? survival_t : total_area - area_before;
    comp += numerator / (detail::floor_eps(s_left, eps, truncated) * detail::floor_eps(sc_left, eps, truncated)) *
            sizes[k];
    prev_time = u;
    prev_level = std::exp(-cum[k]);
  }
  out.compensator = comp;
}

/// φ from already-predicted curves: event hazards for both arms and the
/// censoring hazard for the subject's own arm.
inline PhiValue phi_from_curves(const Subject& s, const StepCumHazard& event1, const StepCumHazard& event0,
                                const StepCumHazard& censoring_own, double propensity1, double horizon,
                                Estimand estimand, double eps) {
  PhiValue out;
  out.arm1.plug_in = arm_functional(event1, horizon, estimand);
  out.arm0.plug_in = arm_functional(event0, horizon, estimand);
  ArmTerms& own = s.treatment == 1 ? out.arm1 : out.arm0;
  const double pi_own = s.treatment == 1 ? propensity1 : 1.0 - propensity1;
  own.inverse_propensity = 1.0 / pi_own;
  martingale_terms(s, s.treatment == 1 ? event1 : event0, censoring_own, horizon, estimand, eps, own,
                   out.truncated_weights);
  out.arm1.value = out.arm1.plug_in - out.arm1.martingale();
  out.arm0.value = out.arm0.plug_in - out.arm0.martingale();
  out.phi1 = out.arm1.value;
  out.phi0 = out.arm0.value;
  out.phi = out.phi1 - out.phi0;
  return out;
}

inline PhiValue phi(const Subject& s, const NuisanceBundle& bundle) {
  bundle.validate();
  const double raw = bundle.propensity->predict_raw(s.x);
  const double p1 = std::clamp(raw, bundle.epsilon, 1.0 - bundle.epsilon);
  auto out = phi_from_curves(s, bundle.event->predict(1, s.x), bundle.event->predict(0, s.x),
                             bundle.censoring->predict(s.treatment, s.x), p1, bundle.horizon, bundle.estimand,
                             bundle.epsilon);
  out.truncated_propensity = p1 != raw;
  return out;
}

}  // namespace tevim
