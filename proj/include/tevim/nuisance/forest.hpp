#pragma once

// Random forests: CART regression forest (variance-reduction splits), its
// 0/1 use as a probability forest for the propensity, and a random survival
// forest with log-rank splits and Nelson-Aalen leaves.
//
// Split candidates follow the randomized scheme of common survival-forest
// packages: `nsplit` random thresholds per candidate feature (all thresholds
// when the feature has at most nsplit+1 distinct values in the node).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/core/rng.hpp"
#include "tevim/core/step_cumhaz.hpp"
#include "tevim/data/dataset.hpp"
#include "tevim/nuisance/models.hpp"

namespace tevim {

struct ForestParams {
  std::size_t n_trees = 300;
  std::size_t mtry = 0;  ///< 0: learner default
  std::size_t min_node = 5;
  std::size_t max_depth = std::numeric_limits<std::size_t>::max();
  std::size_t nsplit = 10;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

/// Survival-forest defaults: 300 trees, mtry = ⌈√d⌉ + 1 over (treatment, x),
/// at least 15 target events per child.
inline ForestParams survival_forest_defaults() {
  ForestParams p;
  p.min_node = 15;
  return p;
}

namespace detail {

struct FeatureMatrix {
  std::vector<double> values;  // row-major
  std::size_t rows = 0;
  std::size_t cols = 0;
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t leaf = 0;  // payload id for leaves
};

template <class Row>
std::uint32_t find_leaf(const std::vector<TreeNode>& nodes, const Row& row) {
  std::uint32_t id = 0;
  while (nodes[id].feature >= 0) {
    id = row[static_cast<std::size_t>(nodes[id].feature)] <= nodes[id].threshold ? nodes[id].left
                                                                                : nodes[id].right;
  }
  return nodes[id].leaf;
}

inline std::vector<double> candidate_thresholds(std::vector<double> values, std::size_t nsplit, Engine& g) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> out;
  if (values.size() < 2) return out;
  if (values.size() - 1 <= nsplit) {
    for (std::size_t k = 0; k + 1 < values.size(); ++k) out.push_back(0.5 * (values[k] + values[k + 1]));
    return out;
  }
  for (std::size_t s = 0; s < nsplit; ++s) {
    out.push_back(values[static_cast<std::size_t>(uniform_index(g, values.size() - 1))]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Grows one tree on `samples` (row ids, duplicates allowed). Criterion:
//   bool splittable(span<const size_t>) const
//   void prepare(span<const size_t>)
//   double score(span<const size_t>, const std::vector<char>& left) const  (-inf: inadmissible)
//   uint32_t make_leaf(span<const size_t>)
template <class Criterion>
std::vector<TreeNode> grow_tree(const FeatureMatrix& x, std::vector<std::size_t> samples,
                                const ForestParams& params, std::size_t mtry, Engine& g,
                                Criterion& crit) {
  struct Task {
    std::uint32_t node;
    std::size_t begin;
    std::size_t end;
    std::size_t depth;
  };
  std::vector<TreeNode> nodes(1);
  std::vector<Task> stack{{0, 0, samples.size(), 0}};
  std::vector<std::size_t> features(x.cols);
  std::vector<char> left;
  std::vector<double> vals;
  while (!stack.empty()) {
    const Task task = stack.back();
    stack.pop_back();
    std::span<std::size_t> node(samples.data() + task.begin, task.end - task.begin);
    double best = -std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    if (task.depth < params.max_depth && crit.splittable(node)) {
      crit.prepare(node);
      std::iota(features.begin(), features.end(), std::size_t{0});
      const std::size_t tries = std::min(mtry, features.size());
      for (std::size_t f = 0; f < tries; ++f) {
        const auto pick = f + static_cast<std::size_t>(uniform_index(g, features.size() - f));
        std::swap(features[f], features[pick]);
        const std::size_t feat = features[f];
        vals.clear();
        for (std::size_t r : node) vals.push_back(x(r, feat));
        for (double thr : candidate_thresholds(vals, params.nsplit, g)) {
          left.assign(node.size(), 0);
          for (std::size_t s = 0; s < node.size(); ++s) left[s] = x(node[s], feat) <= thr ? 1 : 0;
          const double sc = crit.score(node, left);
          if (sc > best) {
            best = sc;
            best_feature = static_cast<int>(feat);
            best_threshold = thr;
          }
        }
      }
    }
    if (best_feature < 0) {
      nodes[task.node].leaf = crit.make_leaf(node);
      continue;
    }
    auto mid = std::stable_partition(node.begin(), node.end(), [&](std::size_t r) {
      return x(r, static_cast<std::size_t>(best_feature)) <= best_threshold;
    });
    const std::size_t split = task.begin + static_cast<std::size_t>(mid - node.begin());
    const auto l = static_cast<std::uint32_t>(nodes.size());
    nodes.push_back({});
    nodes.push_back({});
    nodes[task.node].feature = best_feature;
    nodes[task.node].threshold = best_threshold;
    nodes[task.node].left = l;
    nodes[task.node].right = l + 1;
    stack.push_back({l + 1, split, task.end, task.depth + 1});
    stack.push_back({l, task.begin, split, task.depth + 1});
  }
  return nodes;
}

inline std::vector<std::size_t> draw_samples(std::size_t n, bool bootstrap, Engine& g) {
  std::vector<std::size_t> s(n);
  if (bootstrap) {
    for (auto& v : s) v = static_cast<std::size_t>(uniform_index(g, n));
    std::sort(s.begin(), s.end());
  } else {
    std::iota(s.begin(), s.end(), std::size_t{0});
  }
  return s;
}

struct VarianceCriterion {
  const std::vector<double>* y;
  std::size_t min_node;
  std::vector<double>* leaf_values;

  bool splittable(std::span<const std::size_t> node) const { return node.size() >= 2 * min_node; }
  void prepare(std::span<const std::size_t>) {}
  double score(std::span<const std::size_t> node, const std::vector<char>& left) const {
    double sl = 0.0, sr = 0.0;
    std::size_t nl = 0;
    for (std::size_t s = 0; s < node.size(); ++s) {
      const double v = (*y)[node[s]];
      if (left[s]) {
        sl += v;
        ++nl;
      } else {
        sr += v;
      }
    }
    const std::size_t nr = node.size() - nl;
    if (nl < min_node || nr < min_node || nl == 0 || nr == 0) return -std::numeric_limits<double>::infinity();
    return sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr);
  }
  std::uint32_t make_leaf(std::span<const std::size_t> node) {
    double s = 0.0;
    for (std::size_t r : node) s += (*y)[r];
    leaf_values->push_back(node.empty() ? 0.0 : s / static_cast<double>(node.size()));
    return static_cast<std::uint32_t>(leaf_values->size() - 1);
  }
};

}  // namespace detail

/// Regression forest on a dense feature matrix; prediction is the mean of
/// the per-tree leaf means.
class RegressionForest final : public RegressionModel {
 public:
  static RegressionForest fit(std::size_t dim, std::span<const double> features, std::span<const double> y,
                              ForestParams params) {
    if (y.empty()) throw Error("nuisance", "regression forest: zero training rows");
    if (features.size() != y.size() * dim) throw Error("nuisance", "regression forest: feature shape mismatch");
    if (params.n_trees == 0) throw Error("nuisance", "regression forest: n_trees must be positive");
    if (params.min_node == 0) params.min_node = 1;
    RegressionForest f;
    f.dim_ = dim;
    f.mean_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    if (dim == 0) return f;
    detail::FeatureMatrix x{{features.begin(), features.end()}, y.size(), dim};
    const std::vector<double> targets(y.begin(), y.end());
    const std::size_t mtry = params.mtry > 0 ? params.mtry : std::max<std::size_t>(1, (dim + 2) / 3);
    for (std::size_t t = 0; t < params.n_trees; ++t) {
      Engine g(derive_seed(params.seed, t));
      auto samples = detail::draw_samples(y.size(), params.bootstrap, g);
      std::vector<double> leaves;
      detail::VarianceCriterion crit{&targets, params.min_node, &leaves};
      f.trees_.push_back(detail::grow_tree(x, std::move(samples), params, mtry, g, crit));
      f.leaves_.push_back(std::move(leaves));
    }
    return f;
  }

  double predict(std::span<const double> z) const override {
    if (trees_.empty()) return mean_;
    double s = 0.0;
    for (std::size_t t = 0; t < trees_.size(); ++t) s += leaves_[t][detail::find_leaf(trees_[t], z)];
    return s / static_cast<double>(trees_.size());
  }
  std::string kind() const override { return "forest"; }

 private:
  std::size_t dim_ = 0;
  double mean_ = 0.0;
  std::vector<std::vector<detail::TreeNode>> trees_;
  std::vector<std::vector<double>> leaves_;
};

/// Probability forest for π̂(1|x): a regression forest on the 0/1 treatment.
class ForestPropensity final : public PropensityModel {
 public:
  explicit ForestPropensity(RegressionForest forest) : forest_(std::move(forest)) {}
  double predict_raw(std::span<const double> x) const override { return forest_.predict(x); }
  std::string kind() const override { return "forest"; }

 private:
  RegressionForest forest_;
};

inline ForestPropensity fit_forest_propensity(const SurvivalDataset& data, std::span<const std::size_t> rows,
                                              const ForestParams& params) {
  std::vector<double> feats;
  std::vector<double> y;
  int treated = 0;
  for (std::size_t i : rows) {
    const auto xi = data.x(i);
    feats.insert(feats.end(), xi.begin(), xi.end());
    y.push_back(data.treatment(i));
    treated += data.treatment(i);
  }
  if (treated == 0 || treated == static_cast<int>(rows.size())) {
    throw Error("nuisance", "propensity forest: single arm, both treatment arms required");
  }
  return ForestPropensity(RegressionForest::fit(data.d(), feats, y, params));
}

namespace detail {

struct LogRankCriterion {
  const std::vector<double>* time;
  const std::vector<int>* status;
  const std::vector<double>* grid;
  std::size_t min_node;
  // leaf storage: flat (grid index, increment) with offsets per leaf
  std::vector<std::uint32_t>* leaf_grid;
  std::vector<double>* leaf_jump;
  std::vector<std::uint32_t>* leaf_offset;

  std::vector<std::size_t> order;  // positions into the node, descending time

  std::size_t events(std::span<const std::size_t> node) const {
    std::size_t e = 0;
    for (std::size_t r : node) e += static_cast<std::size_t>((*status)[r]);
    return e;
  }

  bool splittable(std::span<const std::size_t> node) const {
    return node.size() >= 2 && events(node) >= 2 * min_node;
  }

  void prepare(std::span<const std::size_t> node) {
    order.resize(node.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return (*time)[node[a]] > (*time)[node[b]]; });
  }

  // Two-sample log-rank statistic U²/V between the left and right children.
  double score(std::span<const std::size_t> node, const std::vector<char>& left) const {
    std::size_t ev_left = 0, ev_right = 0;
    for (std::size_t s = 0; s < node.size(); ++s) {
      if ((*status)[node[s]]) (left[s] ? ev_left : ev_right) += 1;
    }
    if (ev_left < min_node || ev_right < min_node) return -std::numeric_limits<double>::infinity();
    double y = 0.0, y_left = 0.0, u = 0.0, v = 0.0;
    std::size_t k = 0;
    while (k < order.size()) {
      const double t = (*time)[node[order[k]]];
      double d = 0.0, d_left = 0.0;
      while (k < order.size() && (*time)[node[order[k]]] == t) {
        const std::size_t s = order[k];
        y += 1.0;
        if (left[s]) y_left += 1.0;
        if ((*status)[node[s]]) {
          d += 1.0;
          if (left[s]) d_left += 1.0;
        }
        ++k;
      }
      if (d > 0.0) {
        u += d_left - y_left * d / y;
        if (y > 1.0) v += (y_left / y) * (1.0 - y_left / y) * d * (y - d) / (y - 1.0);
      }
    }
    if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
    return u * u / v;
  }

  std::uint32_t make_leaf(std::span<const std::size_t> node) {
    std::vector<std::size_t> sorted(node.begin(), node.end());
    std::sort(sorted.begin(), sorted.end(),
              [&](std::size_t a, std::size_t b) { return (*time)[a] < (*time)[b]; });
    double at_risk = static_cast<double>(sorted.size());
    std::size_t k = 0;
    while (k < sorted.size()) {
      const double t = (*time)[sorted[k]];
      double d = 0.0, leaving = 0.0;
      while (k < sorted.size() && (*time)[sorted[k]] == t) {
        d += (*status)[sorted[k]];
        leaving += 1.0;
        ++k;
      }
      if (d > 0.0) {
        const auto idx = std::lower_bound(grid->begin(), grid->end(), t) - grid->begin();
        leaf_grid->push_back(static_cast<std::uint32_t>(idx));
        leaf_jump->push_back(d / at_risk);
      }
      at_risk -= leaving;
    }
    leaf_offset->push_back(static_cast<std::uint32_t>(leaf_grid->size()));
    return static_cast<std::uint32_t>(leaf_offset->size() - 2);
  }
};

}  // namespace detail

/// Random survival forest. Features are (treatment, x_1..x_d); each leaf
/// holds the Nelson-Aalen cumulative hazard of its in-bag records and the
/// ensemble prediction is the pointwise mean of the per-tree leaf curves.
class SurvivalForest final : public HazardModel {
 public:
  static SurvivalForest fit(const SurvivalDataset& data, std::span<const std::size_t> rows, HazardTarget target,
                            ForestParams params) {
    if (params.n_trees == 0) throw Error("nuisance", "survival forest: n_trees must be positive");
    params.min_node = std::max<std::size_t>(params.min_node, 1);
    const std::size_t m = rows.size();
    const std::size_t cols = data.d() + 1;
    detail::FeatureMatrix x;
    x.rows = m;
    x.cols = cols;
    x.values.reserve(m * cols);
    std::vector<double> time(m);
    std::vector<int> status(m);
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t i = rows[r];
      x.values.push_back(data.treatment(i));
      const auto xi = data.x(i);
      x.values.insert(x.values.end(), xi.begin(), xi.end());
      time[r] = data.time(i);
      status[r] = target == HazardTarget::event ? data.event(i) : 1 - data.event(i);
    }
    SurvivalForest f;
    for (std::size_t r = 0; r < m; ++r) {
      if (status[r]) f.grid_.push_back(time[r]);
    }
    if (f.grid_.empty()) throw Error("nuisance", "survival forest: no target events to fit");
    std::sort(f.grid_.begin(), f.grid_.end());
    f.grid_.erase(std::unique(f.grid_.begin(), f.grid_.end()), f.grid_.end());

    const auto d = static_cast<double>(data.d());
    const std::size_t mtry =
        params.mtry > 0 ? params.mtry : static_cast<std::size_t>(std::ceil(std::sqrt(d))) + 1;
    for (std::size_t t = 0; t < params.n_trees; ++t) {
      Engine g(derive_seed(params.seed, t));
      auto samples = detail::draw_samples(m, params.bootstrap, g);
      Tree tree;
      tree.leaf_offset.push_back(0);
      detail::LogRankCriterion crit{&time, &status, &f.grid_, params.min_node,
                                    &tree.leaf_grid, &tree.leaf_jump, &tree.leaf_offset, {}};
      tree.nodes = detail::grow_tree(x, std::move(samples), params, mtry, g, crit);
      f.trees_.push_back(std::move(tree));
    }
    return f;
  }

  StepCumHazard predict(int a, std::span<const double> x) const override {
    std::vector<double> row;
    row.reserve(x.size() + 1);
    row.push_back(a);
    row.insert(row.end(), x.begin(), x.end());
    std::vector<double> acc(grid_.size(), 0.0);
    for (const auto& tree : trees_) {
      const std::uint32_t leaf = detail::find_leaf(tree.nodes, row);
      for (std::uint32_t k = tree.leaf_offset[leaf]; k < tree.leaf_offset[leaf + 1]; ++k) {
        acc[tree.leaf_grid[k]] += tree.leaf_jump[k];
      }
    }
    const double inv = 1.0 / static_cast<double>(trees_.size());
    std::vector<double> times, sizes;
    for (std::size_t k = 0; k < acc.size(); ++k) {
      if (acc[k] > 0.0) {
        times.push_back(grid_[k]);
        sizes.push_back(acc[k] * inv);
      }
    }
    return StepCumHazard(std::move(times), std::move(sizes));
  }
  std::string kind() const override { return "rsf"; }

  std::size_t trees() const noexcept { return trees_.size(); }
  /// Feature used at the root of tree t (0 = treatment, j+1 = x_j), -1 if the tree is a stump.
  int root_feature(std::size_t t) const { return trees_.at(t).nodes.front().feature; }

 private:
  struct Tree {
    std::vector<detail::TreeNode> nodes;
    std::vector<std::uint32_t> leaf_grid;
    std::vector<double> leaf_jump;
    std::vector<std::uint32_t> leaf_offset;
  };
  std::vector<double> grid_;
  std::vector<Tree> trees_;
};

}  // namespace tevim
