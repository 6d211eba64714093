#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tevim/core/error.hpp"

namespace tevim {

/// Right-continuous, piecewise-constant cumulative hazard
///
///   Λ(u)  = Σ_{t_k ≤ u} Δ_k,      Λ(u−) = Σ_{t_k < u} Δ_k,
///
/// with survival S(u) = exp(−Λ(u)). Jump times are strictly increasing and
/// nonnegative, jump sizes strictly positive. Duplicate times passed to the
/// constructor are merged and zero jumps dropped, so two representations of
/// the same measure compare equal.
class StepCumHazard {
 public:
  StepCumHazard() = default;

  StepCumHazard(std::vector<double> times, std::vector<double> sizes) {
    if (times.size() != sizes.size()) {
      throw Error("nuisance", "cumulative hazard: times and sizes differ in length");
    }
    std::vector<std::size_t> order(times.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
    for (std::size_t idx : order) {
      const double t = times[idx];
      const double s = sizes[idx];
      if (!(t >= 0.0) || !std::isfinite(t)) {
        throw Error("nuisance", "cumulative hazard: jump time must be finite and nonnegative");
      }
      if (!(s >= 0.0) || !std::isfinite(s)) {
        throw Error("nuisance", "cumulative hazard: jump size must be finite and nonnegative");
      }
      if (s == 0.0) continue;
      if (!times_.empty() && times_.back() == t) {
        sizes_.back() += s;
      } else {
        times_.push_back(t);
        sizes_.push_back(s);
      }
    }
    rebuild_cumulative();
  }

  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }
  std::span<const double> jump_times() const noexcept { return times_; }
  std::span<const double> jump_sizes() const noexcept { return sizes_; }
  /// cumulative()[k] = Λ(t_k).
  std::span<const double> cumulative() const noexcept { return cum_; }

  /// Number of jumps at times ≤ horizon.
  std::size_t jumps_up_to(double horizon) const {
    return static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), horizon) -
                                    times_.begin());
  }

  double operator()(double u) const {
    const std::size_t k = jumps_up_to(u);
    return k == 0 ? 0.0 : cum_[k - 1];
  }

  double left_limit(double u) const {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(times_.begin(), times_.end(), u) - times_.begin());
    return k == 0 ? 0.0 : cum_[k - 1];
  }

  double survival(double u) const { return std::exp(-(*this)(u)); }
  double survival_left(double u) const { return std::exp(-left_limit(u)); }

  /// H(u,t) = ∫_u^t S(v) dv, exact for the step survival curve. Zero if t ≤ u.
  double restricted_mean(double from, double to) const {
    if (!(to > from)) return 0.0;
    std::size_t k = jumps_up_to(from);
    double level = k == 0 ? 1.0 : std::exp(-cum_[k - 1]);
    double prev = from;
    double area = 0.0;
    for (; k < times_.size() && times_[k] <= to; ++k) {
      area += level * (times_[k] - prev);
      prev = times_[k];
      level = std::exp(-cum_[k]);
    }
    return area + level * (to - prev);
  }

  /// ∫_0^t S(v) dv.
  double restricted_mean(double to) const { return restricted_mean(0.0, to); }

  StepCumHazard scaled(double factor) const {
    if (!(factor > 0.0) || !std::isfinite(factor)) {
      throw Error("nuisance", "cumulative hazard: scale factor must be positive and finite");
    }
    StepCumHazard out;
    out.times_ = times_;
    out.sizes_.reserve(sizes_.size());
    for (double s : sizes_) out.sizes_.push_back(s * factor);
    out.rebuild_cumulative();
    return out;
  }

  friend bool operator==(const StepCumHazard&, const StepCumHazard&) = default;

 private:
  void rebuild_cumulative() {
    cum_.resize(sizes_.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < sizes_.size(); ++k) {
      acc += sizes_[k];
      cum_[k] = acc;
    }
  }

  std::vector<double> times_;
  std::vector<double> sizes_;
  std::vector<double> cum_;
};

}  // namespace tevim
