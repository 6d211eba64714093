#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/core/rng.hpp"

namespace tevim {

/// Partition of record indices {0..n-1} into K validation folds V_1..V_K.
/// Training set for fold k is the complement V_{-k}. Optionally each
/// complement carries an inner K2-fold partition (nested cross-fitting of
/// the ATE). The degenerate `full_sample` plan has one fold whose training
/// set is the whole sample, which gives the non-cross-fitted estimators.
class FoldPlan {
 public:
  FoldPlan() = default;

  /// Plan from explicit folds (each a list of record indices).
  FoldPlan(std::size_t n, std::vector<std::vector<std::size_t>> folds,
           std::vector<std::vector<std::vector<std::size_t>>> inner = {})
      : n_(n), folds_(std::move(folds)), inner_(std::move(inner)) {
    fold_of_.assign(n_, SIZE_MAX);
    for (std::size_t k = 0; k < folds_.size(); ++k) {
      std::sort(folds_[k].begin(), folds_[k].end());
      for (std::size_t i : folds_[k]) {
        if (i >= n_ || fold_of_[i] != SIZE_MAX) {
          throw Error("data", "fold plan: folds must be disjoint subsets of the index set");
        }
        fold_of_[i] = k;
      }
    }
    if (std::find(fold_of_.begin(), fold_of_.end(), SIZE_MAX) != fold_of_.end()) {
      throw Error("data", "fold plan: folds do not cover the index set");
    }
    for (auto& per_fold : inner_) {
      for (auto& f : per_fold) std::sort(f.begin(), f.end());
    }
  }

  static FoldPlan full_sample(std::size_t n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    FoldPlan plan(n, {all});
    plan.full_sample_ = true;
    return plan;
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t folds() const noexcept { return folds_.size(); }
  bool is_full_sample() const noexcept { return full_sample_; }
  std::size_t fold_of(std::size_t i) const { return fold_of_[i]; }
  const std::vector<std::size_t>& validation(std::size_t k) const { return folds_[k]; }

  std::vector<std::size_t> training(std::size_t k) const {
    if (full_sample_) return folds_[0];
    std::vector<std::size_t> out;
    out.reserve(n_ - folds_[k].size());
    for (std::size_t i = 0; i < n_; ++i) {
      if (fold_of_[i] != k) out.push_back(i);
    }
    return out;
  }

  bool has_inner() const noexcept { return !inner_.empty(); }
  std::size_t inner_folds() const { return inner_.empty() ? 0 : inner_.front().size(); }
  const std::vector<std::size_t>& inner_validation(std::size_t k, std::size_t i) const {
    return inner_[k][i];
  }
  std::vector<std::size_t> inner_training(std::size_t k, std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < inner_[k].size(); ++m) {
      if (m != i) out.insert(out.end(), inner_[k][m].begin(), inner_[k][m].end());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t max_fold_size() const {
    std::size_t m = 0;
    for (const auto& f : folds_) m = std::max(m, f.size());
    return m;
  }

  /// Same membership with fold ids permuted: fold k of the result is fold
  /// perm[k] of this plan.
  FoldPlan relabeled(const std::vector<std::size_t>& perm) const {
    std::vector<std::vector<std::size_t>> f;
    std::vector<std::vector<std::vector<std::size_t>>> in;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      f.push_back(folds_.at(perm[k]));
      if (has_inner()) in.push_back(inner_.at(perm[k]));
    }
    FoldPlan out(n_, std::move(f), std::move(in));
    out.full_sample_ = full_sample_;
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::vector<std::size_t>> folds_;
  std::vector<std::vector<std::vector<std::size_t>>> inner_;
  std::vector<std::size_t> fold_of_;
  bool full_sample_ = false;
};

namespace detail {

// Random permutation cut into `k` contiguous blocks whose sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> random_blocks(std::vector<std::size_t> items,
                                                           std::size_t k, Engine& g) {
  shuffle(std::span<std::size_t>(items), g);
  std::vector<std::vector<std::size_t>> out(k);
  const std::size_t base = items.size() / k;
  const std::size_t extra = items.size() % k;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < k; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    out[b].assign(items.begin() + static_cast<std::ptrdiff_t>(pos),
                  items.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

}  // namespace detail

inline FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed,
                           std::optional<std::size_t> nested_k2 = std::nullopt) {
  if (k < 2) throw Error("data", "fold count K must be at least 2");
  if (k > n) {
    throw Error("data", "fold count K=" + std::to_string(k) + " exceeds sample size n=" +
                            std::to_string(n));
  }
  Engine g(derive_seed(seed, 0));
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto folds = detail::random_blocks(all, k, g);

  std::vector<std::vector<std::vector<std::size_t>>> inner;
  if (nested_k2) {
    const std::size_t max_fold = (n + k - 1) / k;
    if (*nested_k2 < 2 || *nested_k2 > n - max_fold) {
      throw Error("data", "inner fold count K2 must lie in [2, n - max fold size]");
    }
    for (std::size_t f = 0; f < k; ++f) {
      std::vector<std::size_t> complement;
      complement.reserve(n);
      std::vector<char> in_fold(n, 0);
      for (std::size_t i : folds[f]) in_fold[i] = 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (!in_fold[i]) complement.push_back(i);
      }
      Engine gi(derive_seed(seed, 1 + f));
      inner.push_back(detail::random_blocks(std::move(complement), *nested_k2, gi));
    }
  }
  return FoldPlan(n, std::move(folds), std::move(inner));
}

}  // namespace tevim
