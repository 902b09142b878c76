#include <algorithm>
#include <cmath>
#include <vector>

#include "tefb/detector.hpp"

namespace tefb {

double calibrate_threshold(std::span<const double> benign_scores, double fpr_target) {
  if (!(fpr_target > 0.0 && fpr_target < 1.0)) throw Error(Errc::InvalidArgument, "fpr_target must be in (0,1)");
  if (benign_scores.size() < 100) {
    throw Error(Errc::InsufficientHoldout, std::to_string(benign_scores.size()) + " benign samples, need >= 100");
  }
  std::vector<double> s(benign_scores.begin(), benign_scores.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const auto allowed = static_cast<std::size_t>(std::floor(fpr_target * static_cast<double>(n) * (1.0 + 1e-9)));
  // Walk distinct values upward; #{s >= s[i]} = n - i for the first index i of a value.
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && s[i] == s[i - 1]) continue;
    if (n - i <= allowed) return std::max(s[i], std::nextafter(0.0, 1.0));
  }
  return std::min(1.0, std::nextafter(s.back(), 2.0));
}

double calibrate_threshold(const Model& model, const FeatureMatrix& benign, double fpr_target) {
  std::vector<double> scores(benign.rows);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < benign.rows; ++i) scores[i] = model_score(model, benign.row(i));
  return calibrate_threshold(scores, fpr_target);
}

double empirical_fpr(const Model& model, const FeatureMatrix& benign, double threshold) {
  if (benign.rows == 0) return 0.0;
  std::size_t fp = 0;
#pragma omp parallel for reduction(+ : fp) schedule(static)
  for (std::size_t i = 0; i < benign.rows; ++i) fp += model_score(model, benign.row(i)) >= threshold ? 1 : 0;
  return static_cast<double>(fp) / static_cast<double>(benign.rows);
}

}  // namespace tefb
