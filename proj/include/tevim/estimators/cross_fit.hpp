#pragma once

// Fold-wise nuisance fitting and the per-subject evaluation cache shared by
// all estimators.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/core/rng.hpp"
#include "tevim/data/dataset.hpp"
#include "tevim/data/folds.hpp"
#include "tevim/eif/phi.hpp"
#include "tevim/estimators/target.hpp"
#include "tevim/nuisance/cate.hpp"
#include "tevim/nuisance/learners.hpp"

namespace tevim {

struct FoldFit {
  NuisanceBundle bundle;
  std::vector<std::size_t> training;
  std::vector<std::size_t> validation;
  double tau_d = 0.0;     ///< τ̂_{d,-k}
  double theta0_l = 0.0;  ///< P_{-k}(τ̂ − τ̂_l)²
  double theta0_d = 0.0;  ///< P_{-k}(τ̂ − P_{-k}τ̂)²
};

/// Everything the estimators read: fold fits and, for each subject, the
/// quantities evaluated with the nuisances of the fold that holds it out.
struct CrossFitResult {
  FoldPlan plan;
  std::vector<FoldFit> folds;
  std::vector<PhiValue> phi;
  std::vector<double> cate;             ///< τ̂_{-k}(X_i)
  std::vector<double> cate_projection;  ///< τ̂_{l,-k}(X_i) or τ̂_{j,-k}(X_i)
  std::vector<double> covariate_mean;   ///< Ê^j_{-k}(X_{i,-j})
  Diagnostics diagnostics;
};

namespace detail {

struct Evaluation {
  PhiValue phi;
  double cate = 0.0;
};

inline Evaluation evaluate_subject(const Subject& s, const NuisanceBundle& b, bool cate_from_plugins) {
  Evaluation out;
  out.phi = phi(s, b);
  out.cate = cate_from_plugins ? out.phi.arm1.plug_in - out.phi.arm0.plug_in : b.cate(s.x);
  return out;
}

struct FittedCore {
  NuisanceBundle bundle;
  bool cate_from_plugins = true;
};

inline FittedCore fit_core(const SurvivalDataset& data, std::span<const std::size_t> rows, const TargetSpec& spec,
                           std::uint64_t seed) {
  FittedCore f;
  const auto* inj = spec.injected ? &*spec.injected : nullptr;
  const auto& L = spec.learners;
  f.bundle.event = inj && inj->event ? inj->event : fit_hazard(L.event, data, rows, HazardTarget::event, derive_seed(seed, 1));
  f.bundle.censoring = inj && inj->censoring
                           ? inj->censoring
                           : fit_hazard(L.censoring_learner(), data, rows, HazardTarget::censoring, derive_seed(seed, 2));
  f.bundle.propensity = inj && inj->propensity ? inj->propensity : fit_propensity(L.propensity, data, rows, derive_seed(seed, 3));
  if (inj && inj->cate) {
    f.bundle.cate = inj->cate;
    f.cate_from_plugins = false;
  } else {
    f.bundle.cate = build_cate(f.bundle.event, spec.horizon, spec.estimand);
  }
  f.bundle.horizon = spec.horizon;
  f.bundle.estimand = spec.estimand;
  f.bundle.epsilon = spec.epsilon;
  return f;
}

inline std::string fold_context(std::size_t k, const char* what) {
  return "fold " + std::to_string(k + 1) + " (" + what + "): ";
}

inline void count_truncation(const PhiValue& v, Diagnostics& d) {
  d.truncated_weights += v.truncated_weights;
  d.truncated_propensity += v.truncated_propensity ? 1 : 0;
}

/// Regression of `target` (one value per row) on x with `drop` removed.
inline CateFunction fit_projection(const RegressorLearner& learner, const SurvivalDataset& data,
                                   std::span<const std::size_t> rows, std::span<const double> target,
                                   const std::vector<std::size_t>& drop, std::uint64_t seed) {
  const std::size_t dim = data.d() - drop.size();
  std::vector<double> feats;
  feats.reserve(rows.size() * dim);
  for (auto i : rows) {
    const auto z = drop_columns(data.x(i), drop);
    feats.insert(feats.end(), z.begin(), z.end());
  }
  std::shared_ptr<const RegressionModel> model = fit_regressor(learner, dim, feats, target, seed);
  return [model, drop](std::span<const double> x) { return model->predict(drop_columns(x, drop)); };
}

}  // namespace detail

/// The fold plan implied by the spec: K outer folds with K₂ inner folds
/// when τ̂_d is cross-fitted, or the single full-sample "fold".
inline FoldPlan plan_for(const SurvivalDataset& data, const TargetSpec& spec) {
  if (!spec.cross_fit) return FoldPlan::full_sample(data.n());
  std::optional<std::size_t> inner;
  if (spec.needs_tau_d() && !spec.fast_theta_d) inner = spec.inner_folds;
  return make_folds(data.n(), spec.folds, spec.seed, inner);
}

/// Fits every nuisance on each V_{-k} and evaluates φ̂, τ̂, τ̂_l (τ̂_j) and
/// Ê^j on V_k. τ̂_{d,-k} comes from nested cross-fitting over the inner
/// plan when present, else from the in-sample mean of φ̂_{-k} over V_{-k}.
inline CrossFitResult cross_fit_nuisances(const SurvivalDataset& data, const TargetSpec& spec, const FoldPlan& plan) {
  spec.validate(data.d());
  if (plan.n() != data.n()) throw Error("estimators", "fold plan size does not match the dataset");
  const std::size_t n = data.n();
  CrossFitResult out;
  out.plan = plan;
  out.phi.resize(n);
  out.cate.resize(n);
  if (spec.needs_projection()) out.cate_projection.resize(n);
  if (is_projection_target(spec.kind)) out.covariate_mean.resize(n);
  const auto drop = spec.dropped_columns();
  const auto* inj = spec.injected ? &*spec.injected : nullptr;

  for (std::size_t k = 0; k < plan.folds(); ++k) {
    FoldFit fold;
    fold.training = plan.training(k);
    fold.validation = plan.validation(k);
    const std::uint64_t fold_seed = derive_seed(spec.seed, 1000 + k);
    detail::FittedCore core;
    try {
      core = detail::fit_core(data, fold.training, spec, fold_seed);
    } catch (const Error& e) {
      throw Error("estimators", detail::fold_context(k, "nuisance fit") + e.what());
    }
    fold.bundle = core.bundle;

    // τ̂ (and φ̂ when needed) on the training rows
    const bool in_sample_phi = spec.learners.dr_learner || (spec.needs_tau_d() && !plan.has_inner());
    std::vector<double> train_cate(fold.training.size());
    std::vector<double> train_phi(in_sample_phi ? fold.training.size() : 0);
    if (spec.needs_projection() || in_sample_phi) {
      for (std::size_t r = 0; r < fold.training.size(); ++r) {
        const auto s = data.subject(fold.training[r]);
        if (in_sample_phi) {
          const auto ev = detail::evaluate_subject(s, core.bundle, core.cate_from_plugins);
          train_phi[r] = ev.phi.phi;
          train_cate[r] = ev.cate;
        } else {
          train_cate[r] = core.bundle.cate(s.x);
        }
      }
    }

    if (spec.needs_projection()) {
      if (inj && inj->cate_projection) {
        fold.bundle.cate_projection = inj->cate_projection;
      } else {
        try {
          fold.bundle.cate_projection =
              detail::fit_projection(spec.learners.tau_l, data, fold.training,
                                     spec.learners.dr_learner ? std::span<const double>(train_phi)
                                                              : std::span<const double>(train_cate),
                                     drop, derive_seed(fold_seed, 4));
        } catch (const Error& e) {
          throw Error("estimators", detail::fold_context(k, "cate projection") + e.what());
        }
      }
    }
    if (is_projection_target(spec.kind)) {
      if (inj && inj->covariate_mean) {
        fold.bundle.covariate_mean = inj->covariate_mean;
      } else {
        std::vector<double> xj(fold.training.size());
        for (std::size_t r = 0; r < fold.training.size(); ++r) xj[r] = data.x(fold.training[r], spec.covariate);
        try {
          fold.bundle.covariate_mean = detail::fit_projection(spec.learners.xj, data, fold.training, xj, drop,
                                                              derive_seed(fold_seed, 5));
        } catch (const Error& e) {
          throw Error("estimators", detail::fold_context(k, "covariate regression") + e.what());
        }
      }
    }

    if (spec.needs_tau_d()) {
      if (plan.has_inner()) {
        double sum = 0.0;
        for (std::size_t r = 0; r < plan.inner_folds(); ++r) {
          const auto inner_train = plan.inner_training(k, r);
          detail::FittedCore inner;
          try {
            inner = detail::fit_core(data, inner_train, spec, derive_seed(fold_seed, 100 + r));
          } catch (const Error& e) {
            throw Error("estimators", detail::fold_context(k, "nested tau_d fit") + e.what());
          }
          for (auto i : plan.inner_validation(k, r)) sum += phi(data.subject(i), inner.bundle).phi;
        }
        fold.tau_d = sum / static_cast<double>(fold.training.size());
      } else {
        fold.tau_d = std::accumulate(train_phi.begin(), train_phi.end(), 0.0) / static_cast<double>(train_phi.size());
      }
    }

    // training-sample plug-ins, read by the logit-scale estimator
    if (spec.kind == TargetKind::zeta_l || spec.kind == TargetKind::psi_l) {
      const double m = static_cast<double>(fold.training.size());
      const double mean_cate = std::accumulate(train_cate.begin(), train_cate.end(), 0.0) / m;
      double tl = 0.0, td = 0.0;
      for (std::size_t r = 0; r < fold.training.size(); ++r) {
        const double proj = fold.bundle.cate_projection(data.x(fold.training[r]));
        tl += (train_cate[r] - proj) * (train_cate[r] - proj);
        td += (train_cate[r] - mean_cate) * (train_cate[r] - mean_cate);
      }
      fold.theta0_l = tl / m;
      fold.theta0_d = td / m;
    }

    for (auto i : fold.validation) {
      const auto s = data.subject(i);
      const auto ev = detail::evaluate_subject(s, fold.bundle, core.cate_from_plugins);
      out.phi[i] = ev.phi;
      out.cate[i] = ev.cate;
      detail::count_truncation(ev.phi, out.diagnostics);
      if (spec.needs_projection()) out.cate_projection[i] = fold.bundle.cate_projection(s.x);
      if (is_projection_target(spec.kind)) out.covariate_mean[i] = fold.bundle.covariate_mean(s.x);
    }
    out.folds.push_back(std::move(fold));
  }
  if (out.diagnostics.truncated_propensity > 0) {
    out.diagnostics.learner_warnings.push_back("propensity truncated to [eps, 1-eps] for " +
                                               std::to_string(out.diagnostics.truncated_propensity) + " subjects");
  }
  return out;
}

inline CrossFitResult cross_fit_nuisances(const SurvivalDataset& data, const TargetSpec& spec) {
  spec.validate(data.d());
  return cross_fit_nuisances(data, spec, plan_for(data, spec));
}

}  // namespace tevim
