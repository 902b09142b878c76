#pragma once

// Gradient-boosted regression trees on logistic loss. Exact greedy splits
// over presorted columns, leaf-wise growth.

#include <cstdint>
#include <span>
#include <vector>

#include "tefb/features.hpp"

namespace tefb {

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // rows with x < threshold go left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;         // leaf output (before shrinkage)
  double cover = 0.0;         // training weight reaching the node

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const float> x) const;
  std::size_t leaf_index(std::span<const float> x) const;
  std::size_t depth() const;
  std::size_t leaf_count() const;
  bool operator==(const RegressionTree&) const = default;
};

struct GbdtConfig {
  std::size_t num_boosting_rounds = 100;
  double learning_rate = 0.1;
  std::size_t num_leaves = 31;
  std::size_t max_depth = 8;
  std::size_t min_child_samples = 20;
  double feature_fraction = 1.0;
  double min_sum_hessian = 1e-3;
  double lambda_l2 = 0.0;
  std::uint64_t seed = 0;
};

struct GbdtModel {
  std::vector<RegressionTree> trees;
  double shrinkage = 0.1;
  double base_score = 0.0;  // log-odds

  /// base + shrinkage * sum of tree outputs.
  double margin(std::span<const float> x) const;
  double score(std::span<const float> x) const;
  bool operator==(const GbdtModel&) const = default;
};

struct GbdtTrainLog {
  std::vector<double> loss_per_round;  // weighted mean log-loss after each round; [0] is the base model
};

/// Trains on X.labels. `weights` may be empty (all ones). A single-class
/// label set yields a constant model at the clipped class prior.
GbdtModel train_gbdt(const FeatureMatrix& X, std::span<const double> weights, const GbdtConfig& cfg,
                     GbdtTrainLog* log = nullptr);

namespace detail {

struct SplitCandidate {
  double gain = 0.0;
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::size_t left_count = 0;

  bool valid() const { return feature >= 0; }
};

struct SplitProblem {
  // column-major feature values, cols[f * n + row]
  const float* cols = nullptr;
  std::size_t n = 0;
  const double* grad = nullptr;
  const double* hess = nullptr;
  std::size_t min_child_samples = 1;
  double min_sum_hessian = 0.0;
  double lambda_l2 = 0.0;
};

/// Best split of one node. sorted[k] lists the node's rows in ascending
/// order of feature features[k]. Ties resolve to the lowest feature, then
/// the lowest threshold.
SplitCandidate find_best_split(const SplitProblem& p, std::span<const std::int32_t> features,
                               const std::vector<std::vector<std::uint32_t>>& sorted);
SplitCandidate find_best_split_serial(const SplitProblem& p, std::span<const std::int32_t> features,
                                      const std::vector<std::vector<std::uint32_t>>& sorted);

}  // namespace detail

}  // namespace tefb
