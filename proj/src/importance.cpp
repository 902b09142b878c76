#include <algorithm>
#include <cmath>
#include <numeric>

#include "tefb/nn.hpp"
#include "tefb/rng.hpp"
#include "tefb/shap.hpp"

namespace tefb {

FeatureRanking rank_features(std::span<const double> importance) {
  FeatureRanking r;
  r.importance.assign(importance.begin(), importance.end());
  r.order.resize(importance.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::int32_t a, std::int32_t b) { return r.importance[a] > r.importance[b]; });
  return r;
}

namespace {

double mean_log_loss(const Model& m, const std::vector<float>& rows, std::size_t n, std::span<const std::uint8_t> y) {
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(model_score(m, std::span<const float>(rows.data() + i * kFeatureDim, kFeatureDim)),
                                1e-12, 1.0 - 1e-12);
    loss -= y[i] ? std::log(p) : std::log(1.0 - p);
  }
  return loss / static_cast<double>(n);
}

}  // namespace

FeatureRanking global_importance(const Model& m, const FeatureMatrix& X, std::size_t permutations,
                                 std::uint64_t seed) {
  std::vector<double> imp(kFeatureDim, 0.0);
  if (X.rows == 0) throw Error(Errc::InvalidArgument, "empty sample for importance");

  if (const auto* g = std::get_if<GbdtModel>(&m)) {
    std::vector<Attribution> phis(X.rows);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < X.rows; ++i) phis[i] = tree_shap(*g, X.row(i));
    for (const auto& phi : phis) {
      for (std::size_t f = 0; f < kFeatureDim; ++f) imp[f] += std::abs(phi[f]);
    }
    for (auto& v : imp) v /= static_cast<double>(X.rows);
    return rank_features(imp);
  }

  const double base = mean_log_loss(m, X.data, X.rows, X.labels);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t f = 0; f < kFeatureDim; ++f) {
    std::vector<float> rows = X.data;
    std::vector<std::size_t> perm(X.rows);
    Rng rng(derive_seed(seed, {f}));
    double total = 0.0;
    for (std::size_t p = 0; p < permutations; ++p) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < X.rows; ++i) rows[i * kFeatureDim + f] = X.data[perm[i] * kFeatureDim + f];
      total += mean_log_loss(m, rows, X.rows, X.labels) - base;
    }
    imp[f] = permutations ? total / static_cast<double>(permutations) : 0.0;
  }
  return rank_features(imp);
}

}  // namespace tefb
