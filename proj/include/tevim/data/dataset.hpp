#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tevim/core/error.hpp"

namespace tevim {

/// One subject's observed data O = (T̃, Δ, A, X).
struct Subject {
  double time = 0.0;
  int event = 0;
  int treatment = 0;
  std::span<const double> x;
};

/// Right-censored observational data: n records of follow-up time, event
/// indicator, binary treatment and a d-dimensional covariate vector.
/// Immutable after construction; covariates are stored row-major.
class SurvivalDataset {
 public:
  SurvivalDataset() = default;

  SurvivalDataset(std::vector<double> time, std::vector<int> event, std::vector<int> treatment,
                  std::vector<double> covariates, std::vector<std::string> covariate_names)
      : time_(std::move(time)),
        event_(std::move(event)),
        treatment_(std::move(treatment)),
        x_(std::move(covariates)),
        names_(std::move(covariate_names)) {
    const std::size_t n = time_.size();
    if (event_.size() != n || treatment_.size() != n) {
      throw Error("data", "time, event and treatment columns differ in length");
    }
    const std::size_t d = names_.size();
    if (x_.size() != n * d) {
      throw Error("data", "covariate block does not hold exactly d values per record");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!(time_[i] >= 0.0) || std::isnan(time_[i])) {
        throw Error("data", "record " + std::to_string(i + 1) + ": time must be nonnegative");
      }
      if (event_[i] != 0 && event_[i] != 1) {
        throw Error("data", "record " + std::to_string(i + 1) + ": event must be 0 or 1");
      }
      if (treatment_[i] != 0 && treatment_[i] != 1) {
        throw Error("data", "record " + std::to_string(i + 1) + ": treatment must be 0 or 1");
      }
    }
    for (std::size_t k = 0; k < x_.size(); ++k) {
      if (!std::isfinite(x_[k])) {
        throw Error("data", "record " + std::to_string(k / d + 1) + ", covariate " +
                                names_[k % d] + ": value is not finite");
      }
    }
  }

  std::size_t n() const noexcept { return time_.size(); }
  std::size_t d() const noexcept { return names_.size(); }

  double time(std::size_t i) const { return time_[i]; }
  int event(std::size_t i) const { return event_[i]; }
  int treatment(std::size_t i) const { return treatment_[i]; }
  std::span<const double> x(std::size_t i) const { return {x_.data() + i * d(), d()}; }
  double x(std::size_t i, std::size_t j) const { return x_[i * d() + j]; }
  Subject subject(std::size_t i) const { return {time_[i], event_[i], treatment_[i], x(i)}; }

  std::span<const double> times() const noexcept { return time_; }
  std::span<const int> events() const noexcept { return event_; }
  std::span<const int> treatments() const noexcept { return treatment_; }
  std::span<const double> covariates() const noexcept { return x_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }

  /// Hazard fitting needs at least one observed event in each treatment arm.
  void require_events_in_both_arms() const {
    bool seen[2] = {false, false};
    for (std::size_t i = 0; i < n(); ++i) {
      if (event_[i] == 1) seen[treatment_[i]] = true;
    }
    if (!seen[0] || !seen[1]) {
      throw Error("data", std::string("no observed event in the ") +
                              (seen[0] ? "treated" : "control") + " arm");
    }
  }

  friend bool operator==(const SurvivalDataset&, const SurvivalDataset&) = default;

 private:
  std::vector<double> time_;
  std::vector<int> event_;
  std::vector<int> treatment_;
  std::vector<double> x_;
  std::vector<std::string> names_;
};

inline std::vector<std::string> default_covariate_names(std::size_t d) {
  std::vector<std::string> names;
  names.reserve(d);
  for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

}  // namespace tevim
