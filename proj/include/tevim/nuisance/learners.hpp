#pragma once

// Learner selection and fitting dispatch, plus its JSON form:
//
//   {"event_model":      {"kind": "cox" | "rsf",             "params": {...}},
//    "censoring_model":  {...},   // defaults to the event learner
//    "propensity_model": {"kind": "logistic" | "forest",     "params": {...}},
//    "tau_l_regressor":  {"kind": "kernel" | "forest",       "params": {...}},
//    "xj_regressor":     {"kind": "kernel" | "forest",       "params": {...}}}
//
// Covariate indices in JSON are 1-based.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tevim/core/error.hpp"
#include "tevim/core/rng.hpp"
#include "tevim/data/dataset.hpp"
#include "tevim/nuisance/cox.hpp"
#include "tevim/nuisance/forest.hpp"
#include "tevim/nuisance/kernel.hpp"
#include "tevim/nuisance/logistic.hpp"
#include "tevim/nuisance/models.hpp"

namespace tevim {

struct HazardLearner {
  enum class Kind { cox, rsf } kind = Kind::cox;
  std::optional<CovariateSpec> formula;  ///< cox; nullopt = all covariates, treatment and interactions
  ForestParams forest = survival_forest_defaults();
};

struct PropensityLearner {
  enum class Kind { logistic, forest } kind = Kind::logistic;
  std::optional<std::vector<std::size_t>> covariates;  ///< logistic; nullopt = all
  ForestParams forest;
};

struct RegressorLearner {
  enum class Kind { kernel, forest } kind = Kind::kernel;
  KernelParams kernel;
  ForestParams forest;
};

struct LearnerConfig {
  HazardLearner event;
  std::optional<HazardLearner> censoring;
  PropensityLearner propensity;
  RegressorLearner tau_l;
  RegressorLearner xj;
  /// τ̂_l regresses φ̂ instead of τ̂ on X_{-l} (DR-learner variant).
  bool dr_learner = false;

  const HazardLearner& censoring_learner() const { return censoring ? *censoring : event; }
};

inline std::shared_ptr<const HazardModel> fit_hazard(const HazardLearner& learner, const SurvivalDataset& data,
                                                     std::span<const std::size_t> rows, HazardTarget target,
                                                     std::uint64_t seed) {
  if (learner.kind == HazardLearner::Kind::cox) {
    const auto spec = learner.formula.value_or(CovariateSpec::saturated(data.d()));
    return std::make_shared<CoxModel>(fit_cox(data, rows, target, spec));
  }
  auto params = learner.forest;
  params.seed = derive_seed(params.seed, seed);
  return std::make_shared<SurvivalForest>(SurvivalForest::fit(data, rows, target, params));
}

inline std::shared_ptr<const PropensityModel> fit_propensity(const PropensityLearner& learner,
                                                             const SurvivalDataset& data,
                                                             std::span<const std::size_t> rows,
                                                             std::uint64_t seed) {
  if (learner.kind == PropensityLearner::Kind::logistic) {
    std::vector<std::size_t> cols;
    if (learner.covariates) {
      cols = *learner.covariates;
    } else {
      for (std::size_t j = 0; j < data.d(); ++j) cols.push_back(j);
    }
    return std::make_shared<LogisticModel>(fit_logistic(data, rows, cols));
  }
  auto params = learner.forest;
  params.seed = derive_seed(params.seed, seed);
  return std::make_shared<ForestPropensity>(fit_forest_propensity(data, rows, params));
}

/// Regression of `y` on the row-major `features` (dim columns).
inline std::shared_ptr<const RegressionModel> fit_regressor(const RegressorLearner& learner, std::size_t dim,
                                                            std::span<const double> features,
                                                            std::span<const double> y, std::uint64_t seed) {
  if (y.size() < 2) throw Error("nuisance", "regression needs at least 2 rows");
  if (learner.kind == RegressorLearner::Kind::kernel) {
    auto params = learner.kernel;
    params.seed = derive_seed(params.seed, seed);
    return std::make_shared<KernelRegressor>(KernelRegressor::fit(dim, features, y, params));
  }
  auto params = learner.forest;
  params.seed = derive_seed(params.seed, seed);
  return std::make_shared<RegressionForest>(RegressionForest::fit(dim, features, y, params));
}

namespace detail {

inline std::vector<std::size_t> one_based(const nlohmann::json& j) {
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    const long long k = v.get<long long>();
    if (k < 1) throw Error("nuisance", "covariate indices are 1-based");
    out.push_back(static_cast<std::size_t>(k - 1));
  }
  return out;
}

inline nlohmann::json to_one_based(const std::vector<std::size_t>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (auto k : v) out.push_back(k + 1);
  return out;
}

inline ForestParams forest_from_json(const nlohmann::json& p, ForestParams base) {
  base.n_trees = p.value("n_trees", base.n_trees);
  base.mtry = p.value("mtry", base.mtry);
  base.min_node = p.value("min_node", base.min_node);
  if (p.contains("max_depth") && !p.at("max_depth").is_null()) base.max_depth = p.at("max_depth").get<std::size_t>();
  base.nsplit = p.value("nsplit", base.nsplit);
  base.bootstrap = p.value("bootstrap", base.bootstrap);
  base.seed = p.value("seed", base.seed);
  return base;
}

inline nlohmann::json forest_to_json(const ForestParams& f) {
  nlohmann::json j{{"n_trees", f.n_trees}, {"mtry", f.mtry},         {"min_node", f.min_node},
                   {"nsplit", f.nsplit},   {"bootstrap", f.bootstrap}, {"seed", f.seed}};
  j["max_depth"] = f.max_depth == std::numeric_limits<std::size_t>::max() ? nlohmann::json(nullptr)
                                                                          : nlohmann::json(f.max_depth);
  return j;
}

inline HazardLearner hazard_learner_from_json(const nlohmann::json& j) {
  HazardLearner h;
  const auto kind = j.at("kind").get<std::string>();
  const auto params = j.value("params", nlohmann::json::object());
  if (kind == "cox") {
    h.kind = HazardLearner::Kind::cox;
    if (params.contains("covariates") || params.contains("interactions") || params.contains("treatment")) {
      CovariateSpec s;
      s.main = one_based(params.value("covariates", nlohmann::json::array()));
      s.treatment = params.value("treatment", true);
      s.interactions = one_based(params.value("interactions", nlohmann::json::array()));
      h.formula = s;
    }
  } else if (kind == "rsf") {
    h.kind = HazardLearner::Kind::rsf;
    h.forest = forest_from_json(params, survival_forest_defaults());
  } else {
    throw Error("nuisance", "unknown hazard learner kind '" + kind + "' (expected cox or rsf)");
  }
  return h;
}

inline nlohmann::json hazard_learner_to_json(const HazardLearner& h) {
  if (h.kind == HazardLearner::Kind::rsf) return {{"kind", "rsf"}, {"params", forest_to_json(h.forest)}};
  nlohmann::json params = nlohmann::json::object();
  if (h.formula) {
    params["covariates"] = to_one_based(h.formula->main);
    params["treatment"] = h.formula->treatment;
    params["interactions"] = to_one_based(h.formula->interactions);
  }
  return {{"kind", "cox"}, {"params", params}};
}

inline RegressorLearner regressor_from_json(const nlohmann::json& j) {
  RegressorLearner r;
  const auto kind = j.at("kind").get<std::string>();
  const auto params = j.value("params", nlohmann::json::object());
  if (kind == "kernel") {
    r.kind = RegressorLearner::Kind::kernel;
    r.kernel.multipliers = params.value("multipliers", r.kernel.multipliers);
    r.kernel.cv_folds = params.value("cv_folds", r.kernel.cv_folds);
    r.kernel.seed = params.value("seed", r.kernel.seed);
  } else if (kind == "forest") {
    r.kind = RegressorLearner::Kind::forest;
    r.forest = forest_from_json(params, r.forest);
  } else {
    throw Error("nuisance", "unknown regressor kind '" + kind + "' (expected kernel or forest)");
  }
  return r;
}

inline nlohmann::json regressor_to_json(const RegressorLearner& r) {
  if (r.kind == RegressorLearner::Kind::forest) return {{"kind", "forest"}, {"params", forest_to_json(r.forest)}};
  return {{"kind", "kernel"},
          {"params", {{"multipliers", r.kernel.multipliers}, {"cv_folds", r.kernel.cv_folds}, {"seed", r.kernel.seed}}}};
}

}  // namespace detail

inline LearnerConfig learners_from_json(const nlohmann::json& j) {
  try {
    LearnerConfig c;
    if (j.contains("event_model")) c.event = detail::hazard_learner_from_json(j.at("event_model"));
    if (j.contains("censoring_model")) c.censoring = detail::hazard_learner_from_json(j.at("censoring_model"));
    if (j.contains("propensity_model")) {
      const auto& p = j.at("propensity_model");
      const auto kind = p.at("kind").get<std::string>();
      const auto params = p.value("params", nlohmann::json::object());
      if (kind == "logistic") {
        c.propensity.kind = PropensityLearner::Kind::logistic;
        if (params.contains("covariates")) c.propensity.covariates = detail::one_based(params.at("covariates"));
      } else if (kind == "forest") {
        c.propensity.kind = PropensityLearner::Kind::forest;
        c.propensity.forest = detail::forest_from_json(params, c.propensity.forest);
      } else {
        throw Error("nuisance", "unknown propensity learner kind '" + kind + "' (expected logistic or forest)");
      }
    }
    if (j.contains("tau_l_regressor")) c.tau_l = detail::regressor_from_json(j.at("tau_l_regressor"));
    if (j.contains("xj_regressor")) c.xj = detail::regressor_from_json(j.at("xj_regressor"));
    c.dr_learner = j.value("dr_learner", false);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error("nuisance", std::string("learner config: ") + e.what());
  }
}

inline nlohmann::json learners_to_json(const LearnerConfig& c) {
  nlohmann::json j;
  j["event_model"] = detail::hazard_learner_to_json(c.event);
  j["censoring_model"] = detail::hazard_learner_to_json(c.censoring_learner());
  nlohmann::json prop;
  if (c.propensity.kind == PropensityLearner::Kind::logistic) {
    prop = {{"kind", "logistic"}, {"params", nlohmann::json::object()}};
    if (c.propensity.covariates) prop["params"]["covariates"] = detail::to_one_based(*c.propensity.covariates);
  } else {
    prop = {{"kind", "forest"}, {"params", detail::forest_to_json(c.propensity.forest)}};
  }
  j["propensity_model"] = prop;
  j["tau_l_regressor"] = detail::regressor_to_json(c.tau_l);
  j["xj_regressor"] = detail::regressor_to_json(c.xj);
  j["dr_learner"] = c.dr_learner;
  return j;
}

}  // namespace tevim
