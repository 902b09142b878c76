#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tefb/detector.hpp"

namespace tefb {

using Attribution = std::array<double, kFeatureDim>;

/// Cover-weighted mean margin: base + shrinkage * sum of E[tree].
double expected_margin(const GbdtModel& m);

/// Exact path-dependent tree Shapley values of the margin. Local accuracy:
/// sum(phi) + expected_margin(m) == m.margin(x).
Attribution tree_shap(const GbdtModel& m, std::span<const float> x);
/// Throws NotTreeModel for non-tree models.
Attribution tree_shap(const Model& m, std::span<const float> x);

struct FeatureRanking {
  std::vector<std::int32_t> order;  // most important first, ties by lower index
  std::vector<double> importance;   // indexed by feature
};

FeatureRanking rank_features(std::span<const double> importance);

/// Tree models: mean |tree_shap| over X_sample. Other models: permutation
/// importance (mean log-loss increase over `permutations` shuffles).
FeatureRanking global_importance(const Model& m, const FeatureMatrix& X_sample, std::size_t permutations = 10,
                                 std::uint64_t seed = 0);

}  // namespace tefb
