#pragma once

/**
 * @file forest.hpp
 * @brief Random-forest regressor with leaf-capped, best-first trees.
 *
 * Each tree is grown best-first: every frontier leaf carries its best
 * candidate split (largest SSE reduction over the features sampled for it),
 * and the leaf with the largest reduction is split next, until the leaf cap
 * is reached or no split improves SSE. Thresholds are midpoints between
 * consecutive distinct feature values; rows with x <= threshold go left.
 * Reduction ties resolve to the lower feature index, then the lower
 * threshold; frontier ties resolve to the leaf created first.
 *
 * Tree k draws from Rng(derive_seed(seed, k)), so the forest is identical
 * for any thread count.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "factor_timing/error.hpp"
#include "factor_timing/model_spec.hpp"
#include "factor_timing/rng.hpp"

namespace factor_timing {

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean target of the node's rows
  std::size_t n_rows = 0;

  bool is_leaf() const noexcept { return feature < 0; }
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  template <class Vec>
  double predict(const Vec& x) const {
    int i = 0;
    while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].value;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) {
      return n.is_leaf();
    }));
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<TreeNode> nodes_;
};

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;  // SSE reduction
};

/// Best split of `rows` over `features` (ascending). nullopt when the node's
/// targets are constant or no threshold exists.
inline std::optional<SplitCandidate> best_split(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                std::span<const std::size_t> rows, std::span<const int> features) {
  if (rows.size() < 2) return std::nullopt;
  const double first = y(static_cast<Eigen::Index>(rows.front()));
  if (std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return y(static_cast<Eigen::Index>(r)) == first; }))
    return std::nullopt;

  double mean = 0.0;
  for (auto r : rows) mean += y(static_cast<Eigen::Index>(r));
  const double n = static_cast<double>(rows.size());
  mean /= n;

  // With centered targets the reduction is L^2 n / (nl nr), L the left sum.
  // Candidates within a relative 1e-9 are ties, so equal partitions reached
  // through different features resolve to the lower index despite rounding.
  std::optional<SplitCandidate> best;
  std::vector<std::pair<double, double>> xy(rows.size());
  for (int f : features) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(rows[i]);
      xy[i] = {X(r, f), y(r) - mean};
    }
    std::sort(xy.begin(), xy.end());
    double left_sum = 0.0;
    for (std::size_t i = 0; i + 1 < xy.size(); ++i) {
      left_sum += xy[i].second;
      if (xy[i].first == xy[i + 1].first) continue;
      const double nl = static_cast<double>(i + 1);
      const double gain = left_sum * left_sum * n / (nl * (n - nl));
      if (!(gain > 0.0)) continue;
      if (!best || gain > best->gain * (1.0 + 1e-9)) best = SplitCandidate{f, 0.5 * (xy[i].first + xy[i + 1].first), gain};
    }
  }
  return best;
}

/// Draws `k` distinct features out of `p`, returned ascending.
inline std::vector<int> sample_features(int p, int k, Rng& rng) {
  std::vector<int> all(static_cast<std::size_t>(p));
  std::iota(all.begin(), all.end(), 0);
  if (k >= p) return all;
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(p - i)));
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
  }
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

/// Grows one best-first tree over `rows` (duplicates allowed, as produced by
/// bootstrap sampling).
inline RegressionTree grow_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::size_t> rows,
                                int max_leaf_nodes, int feature_subsample, Rng& rng) {
  struct Frontier {
    int node;
    std::vector<std::size_t> rows;
    std::optional<SplitCandidate> split;
  };
  const int p = static_cast<int>(X.cols());
  std::vector<TreeNode> nodes;
  auto make_node = [&](std::vector<std::size_t> node_rows) {
    TreeNode n;
    double s = 0.0;
    for (auto r : node_rows) s += y(static_cast<Eigen::Index>(r));
    n.value = s / static_cast<double>(node_rows.size());
    n.n_rows = node_rows.size();
    nodes.push_back(n);
    const auto feats = sample_features(p, feature_subsample, rng);
    auto cand = best_split(X, y, node_rows, feats);
    return Frontier{static_cast<int>(nodes.size()) - 1, std::move(node_rows), cand};
  };

  std::vector<Frontier> frontier;
  frontier.push_back(make_node(std::move(rows)));
  std::size_t leaves = 1;
  while (leaves < static_cast<std::size_t>(max_leaf_nodes)) {
    // Frontier is kept in node-creation order, so strict > keeps the earliest.
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < frontier.size(); ++i)
      if (frontier[i].split && (!pick || frontier[i].split->gain > frontier[*pick].split->gain)) pick = i;
    if (!pick) break;

    Frontier leaf = std::move(frontier[*pick]);
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(*pick));
    std::vector<std::size_t> lrows, rrows;
    for (auto r : leaf.rows)
      (X(static_cast<Eigen::Index>(r), leaf.split->feature) <= leaf.split->threshold ? lrows : rrows).push_back(r);

    auto left = make_node(std::move(lrows));
    auto right = make_node(std::move(rrows));
    auto& parent = nodes[static_cast<std::size_t>(leaf.node)];
    parent.feature = leaf.split->feature;
    parent.threshold = leaf.split->threshold;
    parent.left = left.node;
    parent.right = right.node;
    frontier.push_back(std::move(left));
    frontier.push_back(std::move(right));
    ++leaves;
  }
  return RegressionTree(std::move(nodes));
}

struct ForestFit {
  std::vector<RegressionTree> trees;

  template <class Vec>
  double predict(const Vec& x) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
  }
};

inline ForestFit forest_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                            std::uint64_t seed) {
  if (X.rows() < 2) throw Error(ErrorCode::too_few_rows, "random forest needs at least 2 rows");
  if (X.rows() != y.size()) throw Error(ErrorCode::arity_mismatch, "X rows differ from y length");
  if (params.max_leaf_nodes < 2) throw Error(ErrorCode::invalid_argument, "max_leaf_nodes must be >= 2");
  if (!X.allFinite() || !y.allFinite()) throw Error(ErrorCode::invalid_argument, "non-finite value in fitting data");

  const auto n = static_cast<std::size_t>(X.rows());
  const int subsample = std::min(params.feature_subsample, static_cast<int>(X.cols()));
  ForestFit forest;
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));

  auto grow = [&](std::size_t k) {
    Rng rng(derive_seed(seed, k));
    std::vector<std::size_t> rows(n);
    if (params.bootstrap) {
      for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    forest.trees[k] = grow_tree(X, y, std::move(rows), params.max_leaf_nodes, subsample, rng);
  };

  const auto n_trees = forest.trees.size();
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, params.n_threads)), n_trees);
  if (n_threads <= 1) {
    for (std::size_t k = 0; k < n_trees; ++k) grow(k);
    return forest;
  }
  std::vector<std::exception_ptr> errors(n_threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t k = t; k < n_trees; k += n_threads) grow(k);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return forest;
}

}  // namespace factor_timing
