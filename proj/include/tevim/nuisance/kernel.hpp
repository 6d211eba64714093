#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/core/rng.hpp"
#include "tevim/nuisance/models.hpp"

namespace tevim {

struct KernelParams {
  std::vector<double> multipliers{0.5, 1.0, 2.0};
  std::size_t cv_folds = 5;
  std::uint64_t seed = 0;
};

/// Nadaraya-Watson smoother with a Gaussian product kernel and bandwidths
/// h_m = c · σ̂_m · n^{-1/(4+q)}; c is chosen by K-fold CV on squared error.
/// Predictions are convex combinations of the training targets.
class KernelRegressor final : public RegressionModel {
 public:
  static KernelRegressor fit(std::size_t dim, std::span<const double> features, std::span<const double> y,
                             const KernelParams& params = {}) {
    const std::size_t n = y.size();
    if (n == 0) throw Error("nuisance", "kernel regressor: zero training rows");
    if (features.size() != n * dim) throw Error("nuisance", "kernel regressor: feature shape mismatch");
    for (double v : features) {
      if (!std::isfinite(v)) throw Error("nuisance", "kernel regressor: non-finite feature");
    }
    KernelRegressor k;
    k.dim_ = dim;
    k.z_.assign(features.begin(), features.end());
    k.y_.assign(y.begin(), y.end());
    k.scale_.assign(dim, 0.0);
    const double rate = std::pow(static_cast<double>(n), -1.0 / (4.0 + static_cast<double>(dim)));
    for (std::size_t m = 0; m < dim; ++m) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += features[i * dim + m];
      mean /= static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) ss += (features[i * dim + m] - mean) * (features[i * dim + m] - mean);
      const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
      k.scale_[m] = sd * rate;  // bandwidth for c = 1; 0 marks a constant column
    }
    k.multiplier_ = params.multipliers.empty() ? 1.0 : params.multipliers.front();
    if (dim > 0 && n >= 2 && params.multipliers.size() > 1) {
      const std::size_t folds = std::min(params.cv_folds, n);
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Engine g(derive_seed(params.seed, 0xcf));
      shuffle(std::span<std::size_t>(perm), g);
      std::vector<std::size_t> fold(n);
      for (std::size_t r = 0; r < n; ++r) fold[perm[r]] = r % folds;
      double best = std::numeric_limits<double>::infinity();
      for (double c : params.multipliers) {
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double pred = k.smooth({features.data() + i * dim, dim}, c,
                                       [&](std::size_t r) { return fold[r] != fold[i]; });
          sse += (pred - y[i]) * (pred - y[i]);
        }
        if (sse < best) {
          best = sse;
          k.multiplier_ = c;
        }
      }
    }
    return k;
  }

  double predict(std::span<const double> z) const override {
    return smooth(z, multiplier_, [](std::size_t) { return true; });
  }
  std::string kind() const override { return "kernel"; }

  double multiplier() const noexcept { return multiplier_; }

 private:
  template <class Use>
  double smooth(std::span<const double> q, double c, Use use) const {
    const std::size_t n = y_.size();
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> logw(n, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
      if (!use(i)) continue;
      double s = 0.0;
      for (std::size_t m = 0; m < dim_; ++m) {
        if (scale_[m] <= 0.0) continue;
        const double u = (q[m] - z_[i * dim_ + m]) / (c * scale_[m]);
        s += u * u;
      }
      logw[i] = -0.5 * s;
      max_log = std::max(max_log, logw[i]);
    }
    if (!std::isfinite(max_log)) {
      return std::accumulate(y_.begin(), y_.end(), 0.0) / static_cast<double>(n);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(logw[i])) continue;
      const double w = std::exp(logw[i] - max_log);
      num += w * y_[i];
      den += w;
    }
    return num / den;
  }

  std::size_t dim_ = 0;
  std::vector<double> z_;
  std::vector<double> y_;
  std::vector<double> scale_;
  double multiplier_ = 1.0;
};

}  // namespace tevim
