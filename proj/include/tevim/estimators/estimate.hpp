#pragma once

// Cross-fitted one-step estimators, their variance estimators and the
// logit-scale estimator of Ψ_l.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/data/dataset.hpp"
#include "tevim/data/folds.hpp"
#include "tevim/eif/influence.hpp"
#include "tevim/estimators/cross_fit.hpp"
#include "tevim/estimators/target.hpp"

namespace tevim {

inline constexpr double kNormalQuantile975 = 1.959963984540054;

/// Σ_k (n_k/n) · mean_{V_k} ψ̃².
inline double cross_fit_variance(const std::vector<std::vector<double>>& by_fold) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& fold : by_fold) {
    for (double v : fold) total += v * v;
    n += fold.size();
  }
  if (n == 0) throw Error("estimators", "cross-fit variance of an empty sample");
  return total / static_cast<double>(n);
}

inline double cross_fit_variance(std::span<const double> values, const FoldPlan& plan) {
  std::vector<std::vector<double>> by_fold(plan.folds());
  for (std::size_t k = 0; k < plan.folds(); ++k) {
    for (auto i : plan.validation(k)) by_fold[k].push_back(values[i]);
  }
  return cross_fit_variance(by_fold);
}

namespace detail {

inline double mean_over(std::span<const double> v, const std::vector<std::size_t>& rows) {
  double s = 0.0;
  for (auto i : rows) s += v[i];
  return s / static_cast<double>(rows.size());
}

inline void finish_interval(EstimateReport& r, const FoldPlan& plan) {
  const double var = cross_fit_variance(r.eif, plan);
  r.se = std::sqrt(var / static_cast<double>(r.n));
  r.ci = {r.point - kNormalQuantile975 * r.se, r.point + kNormalQuantile975 * r.se};
}

/// Report for a target whose EIF is linear in the parameter: the one-step
/// estimate is the mean of the uncentered values.
inline EstimateReport linear_report(std::string label, std::vector<double> unc, const CrossFitResult& cf) {
  EstimateReport r;
  r.target = std::move(label);
  r.n = unc.size();
  r.point = std::accumulate(unc.begin(), unc.end(), 0.0) / static_cast<double>(r.n);
  for (std::size_t k = 0; k < cf.plan.folds(); ++k) {
    r.folds.push_back({k, cf.plan.validation(k).size(), mean_over(unc, cf.plan.validation(k)), false});
  }
  r.eif = std::move(unc);
  for (auto& v : r.eif) v -= r.point;
  finish_interval(r, cf.plan);
  r.diagnostics = cf.diagnostics;
  return r;
}

inline std::vector<double> theta_l_terms(const CrossFitResult& cf) {
  std::vector<double> u(cf.phi.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = theta_term(cf.phi[i].phi, cf.cate[i], cf.cate_projection[i]);
  return u;
}

inline std::vector<double> theta_d_terms(const CrossFitResult& cf) {
  std::vector<double> u(cf.phi.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = theta_term(cf.phi[i].phi, cf.cate[i], cf.folds[cf.plan.fold_of(i)].tau_d);
  }
  return u;
}

inline std::vector<double> gamma_terms(const SurvivalDataset& data, const TargetSpec& spec, const CrossFitResult& cf) {
  std::vector<double> u(cf.phi.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = gamma_term(cf.phi[i].phi, cf.cate_projection[i], data.x(i, spec.covariate), cf.covariate_mean[i]);
  }
  return u;
}

inline std::vector<double> chi_terms(const SurvivalDataset& data, const TargetSpec& spec, const CrossFitResult& cf) {
  std::vector<double> u(cf.phi.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = chi_term(data.x(i, spec.covariate), cf.covariate_mean[i]);
  return u;
}

/// Ratio of two linear targets with the delta-method EIF.
inline EstimateReport ratio_report(std::string label, const EstimateReport& num, const EstimateReport& den,
                                   const CrossFitResult& cf, const char* num_name, const char* den_name) {
  EstimateReport r;
  r.target = std::move(label);
  r.n = num.n;
  r.point = num.point / den.point;
  r.eif.resize(r.n);
  for (std::size_t i = 0; i < r.n; ++i) {
    r.eif[i] = ratio_eif(num.eif[i] + num.point, den.eif[i] + den.point, num.point, den.point, r.target.c_str());
  }
  for (std::size_t k = 0; k < num.folds.size(); ++k) {
    r.folds.push_back({k, num.folds[k].size, num.folds[k].estimate / den.folds[k].estimate, false});
  }
  finish_interval(r, cf.plan);
  r.components[num_name] = num.point;
  r.components[std::string(num_name) + "_se"] = num.se;
  r.components[den_name] = den.point;
  r.components[std::string(den_name) + "_se"] = den.se;
  r.diagnostics = cf.diagnostics;
  return r;
}

/// expit kept strictly inside (0,1) in floating point.
inline double open_expit(double z) {
  const double p = expit(z);
  return std::clamp(p, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

inline std::string subset_suffix(const TargetSpec& spec) {
  std::string s;
  for (auto j : spec.subset) s += "_" + std::to_string(j + 1);
  return s;
}

}  // namespace detail

inline EstimateReport estimate_theta_l(const SurvivalDataset&, const TargetSpec& spec, const CrossFitResult& cf) {
  return detail::linear_report("theta" + detail::subset_suffix(spec), detail::theta_l_terms(cf), cf);
}

inline EstimateReport estimate_theta_d(const SurvivalDataset&, const TargetSpec&, const CrossFitResult& cf) {
  return detail::linear_report("theta_d", detail::theta_d_terms(cf), cf);
}

inline EstimateReport estimate_psi_l(const SurvivalDataset& data, const TargetSpec& spec, const CrossFitResult& cf) {
  const auto tl = estimate_theta_l(data, spec, cf);
  const auto td = estimate_theta_d(data, spec, cf);
  if (!(td.point > 0.0)) {
    throw DegenerateTarget("estimators", "estimated VTE theta_d = " + std::to_string(td.point) +
                                             " is not positive; psi is undefined, use the theta or zeta targets");
  }
  return detail::ratio_report("psi" + detail::subset_suffix(spec), tl, td, cf, "theta_l", "theta_d");
}

/// One-step estimator of ζ_l = logit Ψ_l. Per fold,
/// ζ̂_k = logit Ψ̂⁰_{-k} + P_n^k ψ̃_Ψ / {Ψ̂⁰_{-k}(1 − Ψ̂⁰_{-k})}, with ψ̃_Ψ built on
/// the training-sample plug-ins Θ̂⁰_{l,-k}, Θ̂⁰_{d,-k}. Folds whose plug-in
/// lies outside (0,1) are dropped; more than half dropped is degenerate.
inline EstimateReport estimate_zeta_l(const SurvivalDataset& data, const TargetSpec& spec, const CrossFitResult& cf) {
  const auto tl_terms = detail::theta_l_terms(cf);
  const auto td_terms = detail::theta_d_terms(cf);
  EstimateReport r;
  r.target = "zeta" + detail::subset_suffix(spec);
  r.n = data.n();
  r.diagnostics = cf.diagnostics;
  double weighted = 0.0;
  std::size_t kept = 0;
  for (std::size_t k = 0; k < cf.folds.size(); ++k) {
    const auto& f = cf.folds[k];
    const auto& rows = cf.plan.validation(k);
    FoldEstimate fe{k, rows.size(), std::numeric_limits<double>::quiet_NaN(), false};
    const double psi0 = f.theta0_l / f.theta0_d;
    if (!(f.theta0_d > 0.0) || !(psi0 > 0.0 && psi0 < 1.0)) {
      fe.dropped = true;
      r.diagnostics.dropped_folds.push_back(k);
      r.diagnostics.learner_warnings.push_back("fold " + std::to_string(k + 1) + ": plug-in psi " +
                                               std::to_string(psi0) + " outside (0,1), fold dropped");
    } else {
      double correction = 0.0;
      for (auto i : rows) correction += ratio_eif(tl_terms[i], td_terms[i], f.theta0_l, f.theta0_d, "zeta");
      correction /= static_cast<double>(rows.size());
      fe.estimate = logit(psi0) + correction / (psi0 * (1.0 - psi0));
      weighted += fe.estimate * static_cast<double>(rows.size());
      kept += rows.size();
    }
    r.folds.push_back(fe);
  }
  if (2 * r.diagnostics.dropped_folds.size() > cf.folds.size() || kept == 0) {
    throw DegenerateTarget("estimators", "zeta: plug-in psi outside (0,1) in " +
                                             std::to_string(r.diagnostics.dropped_folds.size()) + " of " +
                                             std::to_string(cf.folds.size()) + " folds");
  }
  r.point = weighted / static_cast<double>(kept);

  const auto tl = detail::linear_report("theta_l", tl_terms, cf);
  const auto td = detail::linear_report("theta_d", td_terms, cf);
  if (!(td.point > 0.0)) {
    throw DegenerateTarget("estimators", "zeta: estimated VTE theta_d = " + std::to_string(td.point) +
                                             " is not positive, no variance estimate");
  }
  const double p = expit(r.point);
  std::vector<std::vector<double>> by_fold;
  r.eif.assign(r.n, 0.0);
  for (std::size_t k = 0; k < cf.folds.size(); ++k) {
    if (r.folds[k].dropped) continue;
    by_fold.emplace_back();
    for (auto i : cf.plan.validation(k)) {
      const double v = ratio_eif(tl_terms[i], td_terms[i], tl.point, td.point, "zeta") / (p * (1.0 - p));
      r.eif[i] = v;
      by_fold.back().push_back(v);
    }
  }
  r.se = std::sqrt(cross_fit_variance(by_fold) / static_cast<double>(kept));
  r.ci = {r.point - kNormalQuantile975 * r.se, r.point + kNormalQuantile975 * r.se};
  r.statistic = r.point / r.se;
  r.p_value = normal_p_value(*r.statistic);
  r.psi_point = detail::open_expit(r.point);
  r.psi_ci = std::array<double, 2>{detail::open_expit(r.ci[0]), detail::open_expit(r.ci[1])};
  r.components["theta_l"] = tl.point;
  r.components["theta_d"] = td.point;
  r.components["psi"] = tl.point / td.point;
  return r;
}

inline EstimateReport estimate_gamma(const SurvivalDataset& data, const TargetSpec& spec, const CrossFitResult& cf) {
  return detail::linear_report("gamma_" + std::to_string(spec.covariate + 1), detail::gamma_terms(data, spec, cf), cf);
}

inline EstimateReport estimate_chi(const SurvivalDataset& data, const TargetSpec& spec, const CrossFitResult& cf) {
  return detail::linear_report("chi_" + std::to_string(spec.covariate + 1), detail::chi_terms(data, spec, cf), cf);
}

/// Ω̂_j = Γ̂_j/χ̂_j with the Wald test of H0: Ω_j = 0.
inline EstimateReport estimate_omega(const SurvivalDataset& data, const TargetSpec& spec, const CrossFitResult& cf) {
  const auto g = estimate_gamma(data, spec, cf);
  const auto c = estimate_chi(data, spec, cf);
  double mean = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) mean += data.x(i, spec.covariate);
  mean /= static_cast<double>(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) ss += std::pow(data.x(i, spec.covariate) - mean, 2);
  const double var_xj = ss / static_cast<double>(data.n());
  if (!(c.point > 1e-12 * var_xj)) {
    throw DegenerateTarget("estimators", "chi_" + std::to_string(spec.covariate + 1) + " = " +
                                             std::to_string(c.point) +
                                             ": covariate is (nearly) collinear with the others, omega is undefined");
  }
  auto r = detail::ratio_report("omega_" + std::to_string(spec.covariate + 1), g, c, cf, "gamma", "chi");
  r.statistic = r.point / r.se;
  r.p_value = normal_p_value(*r.statistic);
  return r;
}

inline EstimateReport estimate_target(const SurvivalDataset& data, const TargetSpec& spec, const CrossFitResult& cf) {
  switch (spec.kind) {
    case TargetKind::theta_l: return estimate_theta_l(data, spec, cf);
    case TargetKind::theta_d: return estimate_theta_d(data, spec, cf);
    case TargetKind::psi_l: return estimate_psi_l(data, spec, cf);
    case TargetKind::zeta_l: return estimate_zeta_l(data, spec, cf);
    case TargetKind::gamma_j: return estimate_gamma(data, spec, cf);
    case TargetKind::chi_j: return estimate_chi(data, spec, cf);
    case TargetKind::omega_j: return estimate_omega(data, spec, cf);
  }
  throw Error("estimators", "unknown target kind");
}

inline EstimateReport estimate_target(const SurvivalDataset& data, const TargetSpec& spec) {
  return estimate_target(data, spec, cross_fit_nuisances(data, spec));
}

inline EstimateReport estimate_theta_l(const SurvivalDataset& data, TargetSpec spec) {
  spec.kind = TargetKind::theta_l;
  return estimate_target(data, spec);
}
inline EstimateReport estimate_theta_d(const SurvivalDataset& data, TargetSpec spec) {
  spec.kind = TargetKind::theta_d;
  return estimate_target(data, spec);
}
inline EstimateReport estimate_psi_l(const SurvivalDataset& data, TargetSpec spec) {
  spec.kind = TargetKind::psi_l;
  return estimate_target(data, spec);
}
inline EstimateReport estimate_zeta_l(const SurvivalDataset& data, TargetSpec spec) {
  spec.kind = TargetKind::zeta_l;
  return estimate_target(data, spec);
}
inline EstimateReport estimate_gamma_chi_omega(const SurvivalDataset& data, TargetSpec spec) {
  if (!is_projection_target(spec.kind)) spec.kind = TargetKind::omega_j;
  return estimate_target(data, spec);
}

}  // namespace tevim
