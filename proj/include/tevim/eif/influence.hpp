#pragma once

// Uncentered influence values of the variable-importance targets and the
// delta-method EIFs of the two ratio targets.

#include <span>

#include "tevim/core/error.hpp"
#include "tevim/data/dataset.hpp"
#include "tevim/eif/phi.hpp"

namespace tevim {

enum class ThetaKind { l, d };

/// (φ − τ_l)² − (φ − τ)² for Θ_l, or (φ − τ_d)² − (φ − τ)² for Θ_d.
inline double theta_term(double phi_value, double cate, double reference) {
  return (phi_value - reference) * (phi_value - reference) - (phi_value - cate) * (phi_value - cate);
}

inline double gamma_term(double phi_value, double cate_j, double xj, double xj_mean) {
  return (phi_value - cate_j) * (xj - xj_mean);
}

inline double chi_term(double xj, double xj_mean) { return (xj - xj_mean) * (xj - xj_mean); }

/// tau_bar is τ̂_d and is only read for ThetaKind::d.
inline double eif_theta(const Subject& s, const NuisanceBundle& bundle, double tau_bar, ThetaKind target) {
  const double p = phi(s, bundle).phi;
  const double cate = bundle.cate(s.x);
  if (target == ThetaKind::d) return theta_term(p, cate, tau_bar);
  if (!bundle.cate_projection) throw Error("eif", "theta_l needs a fitted cate projection");
  return theta_term(p, cate, bundle.cate_projection(s.x));
}

inline double eif_gamma(const Subject& s, const NuisanceBundle& bundle, std::size_t j) {
  if (!bundle.cate_projection || !bundle.covariate_mean) {
    throw Error("eif", "gamma needs a cate projection and a covariate mean");
  }
  return gamma_term(phi(s, bundle).phi, bundle.cate_projection(s.x), s.x[j], bundle.covariate_mean(s.x));
}

inline double eif_chi(const Subject& s, const NuisanceBundle& bundle, std::size_t j) {
  if (!bundle.covariate_mean) throw Error("eif", "chi needs a covariate mean");
  return chi_term(s.x[j], bundle.covariate_mean(s.x));
}

/// (1/den)·((num_unc − num) − ratio·(den_unc − den)) with ratio = num/den.
inline double ratio_eif(double num_unc, double den_unc, double num, double den, const char* what) {
  if (!(den > 0.0)) throw DegenerateTarget("eif", std::string(what) + ": nonpositive denominator");
  const double ratio = num / den;
  return ((num_unc - num) - ratio * (den_unc - den)) / den;
}

inline double eif_psi(double theta_l_unc, double theta_d_unc, double theta_l, double theta_d) {
  return ratio_eif(theta_l_unc, theta_d_unc, theta_l, theta_d, "psi");
}

inline double eif_omega(double gamma_unc, double chi_unc, double gamma_j, double chi_j) {
  return ratio_eif(gamma_unc, chi_unc, gamma_j, chi_j, "omega");
}

}  // namespace tevim
