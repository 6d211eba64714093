#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/core/step_cumhaz.hpp"

namespace tevim {

enum class HazardTarget { event, censoring };
enum class Estimand { survival, rmst };

inline std::string to_string(Estimand e) { return e == Estimand::survival ? "survival" : "rmst"; }

inline Estimand estimand_from_string(const std::string& s) {
  if (s == "survival") return Estimand::survival;
  if (s == "rmst") return Estimand::rmst;
  throw Error("nuisance", "unknown estimand '" + s + "' (expected survival or rmst)");
}

/// Which columns enter a parametric working model: main covariate effects,
/// a treatment main effect and treatment × covariate interactions (all
/// 0-based covariate indices).
struct CovariateSpec {
  std::vector<std::size_t> main;
  bool treatment = true;
  std::vector<std::size_t> interactions;

  static CovariateSpec saturated(std::size_t d) {
    CovariateSpec s;
    for (std::size_t j = 0; j < d; ++j) {
      s.main.push_back(j);
      s.interactions.push_back(j);
    }
    return s;
  }

  std::size_t width() const { return main.size() + (treatment ? 1 : 0) + interactions.size(); }

  void validate(std::size_t d) const {
    for (auto j : main) {
      if (j >= d) throw Error("nuisance", "covariate index out of range in model formula");
    }
    for (auto j : interactions) {
      if (j >= d) throw Error("nuisance", "interaction index out of range in model formula");
    }
  }

  void fill(int a, std::span<const double> x, std::span<double> out) const {
    std::size_t c = 0;
    for (auto j : main) out[c++] = x[j];
    if (treatment) out[c++] = a;
    for (auto j : interactions) out[c++] = a * x[j];
  }
};

/// Conditional cumulative hazard u ↦ Λ̂(u | a, x) (event or censoring).
class HazardModel {
 public:
  virtual ~HazardModel() = default;
  virtual StepCumHazard predict(int a, std::span<const double> x) const = 0;
  virtual std::string kind() const = 0;

  double cumhaz(double u, int a, std::span<const double> x) const { return predict(a, x)(u); }
  double cumhaz_left(double u, int a, std::span<const double> x) const {
    return predict(a, x).left_limit(u);
  }
};

/// x ↦ π̂(1 | x).
class PropensityModel {
 public:
  virtual ~PropensityModel() = default;
  virtual double predict_raw(std::span<const double> x) const = 0;
  virtual std::string kind() const = 0;

  /// π̂(1|x) truncated to [ε, 1−ε].
  double predict(std::span<const double> x, double epsilon) const {
    return std::clamp(predict_raw(x), epsilon, 1.0 - epsilon);
  }
};

/// z ↦ Ê(Y | Z = z).
class RegressionModel {
 public:
  virtual ~RegressionModel() = default;
  virtual double predict(std::span<const double> z) const = 0;
  virtual std::string kind() const = 0;
};

/// Wraps a callable; used for injected (oracle or fixture) nuisances.
class FunctionHazard final : public HazardModel {
 public:
  using Fn = std::function<StepCumHazard(int, std::span<const double>)>;
  explicit FunctionHazard(Fn fn, std::string name = "function") : fn_(std::move(fn)), name_(std::move(name)) {}
  StepCumHazard predict(int a, std::span<const double> x) const override { return fn_(a, x); }
  std::string kind() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

class FunctionPropensity final : public PropensityModel {
 public:
  using Fn = std::function<double(std::span<const double>)>;
  explicit FunctionPropensity(Fn fn) : fn_(std::move(fn)) {}
  double predict_raw(std::span<const double> x) const override { return fn_(x); }
  std::string kind() const override { return "function"; }

 private:
  Fn fn_;
};

class FunctionRegression final : public RegressionModel {
 public:
  using Fn = std::function<double(std::span<const double>)>;
  explicit FunctionRegression(Fn fn) : fn_(std::move(fn)) {}
  double predict(std::span<const double> z) const override { return fn_(z); }
  std::string kind() const override { return "function"; }

 private:
  Fn fn_;
};

/// x with the columns in `drop` (sorted or not) removed.
inline std::vector<double> drop_columns(std::span<const double> x, std::span<const std::size_t> drop) {
  std::vector<double> out;
  out.reserve(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (std::find(drop.begin(), drop.end(), j) == drop.end()) out.push_back(x[j]);
  }
  return out;
}

}  // namespace tevim
