#pragma once

#include <functional>
#include <memory>
#include <span>

#include "tevim/core/error.hpp"
#include "tevim/core/step_cumhaz.hpp"
#include "tevim/nuisance/models.hpp"

namespace tevim {

/// Ŝ(t) or ∫₀ᵗ Ŝ(u) du for one arm's cumulative hazard.
inline double arm_functional(const StepCumHazard& cumhaz, double horizon, Estimand estimand) {
  return estimand == Estimand::survival ? cumhaz.survival(horizon) : cumhaz.restricted_mean(horizon);
}

using CateFunction = std::function<double(std::span<const double>)>;

/// S-learner: τ̂(x) = functional(Λ̂(·|1,x)) − functional(Λ̂(·|0,x)).
inline CateFunction build_cate(std::shared_ptr<const HazardModel> model, double horizon, Estimand estimand) {
  if (!model) throw Error("nuisance", "build_cate: unfitted hazard model");
  if (!(horizon > 0.0)) throw Error("nuisance", "build_cate: horizon must be positive");
  return [model = std::move(model), horizon, estimand](std::span<const double> x) {
    return arm_functional(model->predict(1, x), horizon, estimand) -
           arm_functional(model->predict(0, x), horizon, estimand);
  };
}

}  // namespace tevim
