#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tevim/core/error.hpp"
#include "tevim/nuisance/cate.hpp"
#include "tevim/nuisance/learners.hpp"
#include "tevim/nuisance/models.hpp"

namespace tevim {

enum class TargetKind { theta_l, theta_d, psi_l, zeta_l, gamma_j, chi_j, omega_j };

inline bool is_subset_target(TargetKind k) {
  return k == TargetKind::theta_l || k == TargetKind::psi_l || k == TargetKind::zeta_l;
}
inline bool is_projection_target(TargetKind k) {
  return k == TargetKind::gamma_j || k == TargetKind::chi_j || k == TargetKind::omega_j;
}

inline std::string to_string(TargetKind k) {
  switch (k) {
    case TargetKind::theta_l: return "theta";
    case TargetKind::theta_d: return "theta_d";
    case TargetKind::psi_l: return "psi";
    case TargetKind::zeta_l: return "zeta";
    case TargetKind::gamma_j: return "gamma";
    case TargetKind::chi_j: return "chi";
    case TargetKind::omega_j: return "omega";
  }
  return "?";
}

inline TargetKind target_from_string(const std::string& s) {
  if (s == "theta" || s == "theta_l") return TargetKind::theta_l;
  if (s == "theta_d" || s == "vte") return TargetKind::theta_d;
  if (s == "psi" || s == "psi_l") return TargetKind::psi_l;
  if (s == "zeta" || s == "zeta_l") return TargetKind::zeta_l;
  if (s == "gamma" || s == "gamma_j") return TargetKind::gamma_j;
  if (s == "chi" || s == "chi_j") return TargetKind::chi_j;
  if (s == "omega" || s == "omega_j") return TargetKind::omega_j;
  throw Error("estimators", "unknown target '" + s + "' (expected theta, theta_d, psi, zeta, gamma, chi or omega)");
}

/// Nuisances supplied from outside instead of being fitted (oracle runs and
/// fixtures). Unset members are fitted with the configured learners.
struct InjectedNuisances {
  std::shared_ptr<const HazardModel> event;
  std::shared_ptr<const HazardModel> censoring;
  std::shared_ptr<const PropensityModel> propensity;
  CateFunction cate;             ///< replaces the S-learner contrast of `event`
  CateFunction cate_projection;  ///< τ_l, or τ_j for projection targets
  CateFunction covariate_mean;   ///< E(X_j | X_{-j}) as a function of the full x
};

struct TargetSpec {
  TargetKind kind = TargetKind::psi_l;
  std::vector<std::size_t> subset;  ///< l, 0-based
  std::size_t covariate = 0;        ///< j, 0-based
  double horizon = 1.0;
  Estimand estimand = Estimand::survival;
  std::size_t folds = 10;
  std::size_t inner_folds = 5;
  std::uint64_t seed = 0;
  LearnerConfig learners;
  bool cross_fit = true;      ///< false: nuisances fitted and evaluated on the full sample
  bool fast_theta_d = false;  ///< τ̂_{d,-k} as the in-sample mean of φ̂_{-k}
  double epsilon = 0.05;
  std::optional<InjectedNuisances> injected;

  bool needs_projection() const { return kind != TargetKind::theta_d; }
  bool needs_tau_d() const {
    return kind == TargetKind::theta_d || kind == TargetKind::psi_l || kind == TargetKind::zeta_l;
  }

  /// Columns removed from x when regressing on X_{-l} (or X_{-j}).
  std::vector<std::size_t> dropped_columns() const {
    if (is_projection_target(kind)) return {covariate};
    return subset;
  }

  void validate(std::size_t d) const {
    if (is_subset_target(kind)) {
      if (subset.empty()) throw Error("estimators", "subset l must be nonempty");
      for (auto j : subset) {
        if (j >= d) throw Error("estimators", "subset index " + std::to_string(j + 1) + " exceeds d = " + std::to_string(d));
      }
      auto s = subset;
      std::sort(s.begin(), s.end());
      if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw Error("estimators", "subset l has repeated indices");
    }
    if (is_projection_target(kind) && covariate >= d) {
      throw Error("estimators", "covariate j = " + std::to_string(covariate + 1) + " exceeds d = " + std::to_string(d));
    }
    if (!(horizon > 0.0)) throw Error("estimators", "horizon must be positive");
    if (cross_fit && folds < 2) throw Error("estimators", "K must be at least 2");
    if (!(epsilon >= 0.0 && epsilon < 0.5)) throw Error("estimators", "epsilon must lie in [0, 0.5)");
  }

  /// "psi_1", "theta_1_3", "theta_d", "omega_2" (1-based indices).
  std::string label() const {
    std::string s = to_string(kind);
    if (is_subset_target(kind)) {
      for (auto j : subset) s += "_" + std::to_string(j + 1);
    } else if (is_projection_target(kind)) {
      s += "_" + std::to_string(covariate + 1);
    }
    return s;
  }
};

struct FoldEstimate {
  std::size_t fold = 0;
  std::size_t size = 0;
  double estimate = 0.0;
  bool dropped = false;
};

struct Diagnostics {
  long long truncated_weights = 0;
  long long truncated_propensity = 0;
  std::vector<std::size_t> dropped_folds;
  std::vector<std::string> learner_warnings;
};

struct EstimateReport {
  std::string target;
  double point = 0.0;
  double se = 0.0;
  std::array<double, 2> ci{0.0, 0.0};
  std::optional<double> statistic;
  std::optional<double> p_value;
  std::vector<FoldEstimate> folds;
  std::map<std::string, double> components;  ///< e.g. theta_l and theta_d behind psi
  std::optional<double> psi_point;           ///< zeta: expit back-transform
  std::optional<std::array<double, 2>> psi_ci;
  Diagnostics diagnostics;
  std::vector<double> eif;  ///< centered influence values per subject (not serialised)
  std::size_t n = 0;
};

inline double expit(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Two-sided standard-normal p-value.
inline double normal_p_value(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

inline nlohmann::json report_to_json(const EstimateReport& r) {
  nlohmann::json j;
  j["target"] = r.target;
  j["n"] = r.n;
  j["point"] = r.point;
  j["se"] = r.se;
  j["ci"] = {r.ci[0], r.ci[1]};
  j["statistic"] = r.statistic ? nlohmann::json(*r.statistic) : nlohmann::json(nullptr);
  j["p_value"] = r.p_value ? nlohmann::json(*r.p_value) : nlohmann::json(nullptr);
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold + 1}, {"size", f.size}, {"estimate", f.estimate}, {"dropped", f.dropped}});
  }
  j["folds"] = folds;
  j["components"] = r.components;
  if (r.psi_point) {
    j["psi_point"] = *r.psi_point;
    j["psi_ci"] = {(*r.psi_ci)[0], (*r.psi_ci)[1]};
  }
  nlohmann::json dropped = nlohmann::json::array();
  for (auto k : r.diagnostics.dropped_folds) dropped.push_back(k + 1);
  j["diagnostics"] = {{"truncated_weights", r.diagnostics.truncated_weights},
                      {"truncated_propensity", r.diagnostics.truncated_propensity},
                      {"dropped_folds", dropped},
                      {"learner_warnings", r.diagnostics.learner_warnings}};
  return j;
}

}  // namespace tevim
