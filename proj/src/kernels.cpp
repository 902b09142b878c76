#include "tefb/kernels.hpp"

namespace tefb {

namespace {

FeatureMatrix assemble(std::vector<FeatureVector>& rows, std::span<const std::uint8_t> labels) {
  FeatureMatrix m;
  m.data.reserve(rows.size() * kFeatureDim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.push_back(rows[i], labels.empty() ? 0 : labels[i]);
  return m;
}

std::vector<std::uint8_t> entry_labels(const std::vector<CorpusEntry>& entries) {
  std::vector<std::uint8_t> y;
  y.reserve(entries.size());
  for (const auto& e : entries) y.push_back(static_cast<std::uint8_t>(e.label));
  return y;
}

}  // namespace

FeatureMatrix extract_features_batch(std::span<const ToyBinary> binaries, std::span<const std::uint8_t> labels) {
  std::vector<FeatureVector> rows(binaries.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < binaries.size(); ++i) rows[i] = extract_features(binaries[i]);
  return assemble(rows, labels);
}

FeatureMatrix extract_features_batch_serial(std::span<const ToyBinary> binaries, std::span<const std::uint8_t> labels) {
  std::vector<FeatureVector> rows(binaries.size());
  for (std::size_t i = 0; i < binaries.size(); ++i) rows[i] = extract_features(binaries[i]);
  return assemble(rows, labels);
}

FeatureMatrix corpus_features(const Corpus& corpus, const std::vector<CorpusEntry>& entries) {
  std::vector<FeatureVector> rows(entries.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < entries.size(); ++i) rows[i] = extract_features(corpus.binary(entries[i]));
  return assemble(rows, entry_labels(entries));
}

FeatureMatrix corpus_features_serial(const Corpus& corpus, const std::vector<CorpusEntry>& entries) {
  std::vector<FeatureVector> rows(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) rows[i] = extract_features(corpus.binary(entries[i]));
  return assemble(rows, entry_labels(entries));
}

std::vector<double> score_batch(const Model& m, const FeatureMatrix& X) {
  std::vector<double> s(X.rows);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < X.rows; ++i) s[i] = model_score(m, X.row(i));
  return s;
}

std::vector<double> score_batch_serial(const Model& m, const FeatureMatrix& X) {
  std::vector<double> s(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) s[i] = model_score(m, X.row(i));
  return s;
}

std::vector<Attribution> tree_shap_batch(const GbdtModel& m, const FeatureMatrix& X) {
  std::vector<Attribution> out(X.rows);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < X.rows; ++i) out[i] = tree_shap(m, X.row(i));
  return out;
}

std::vector<Attribution> tree_shap_batch_serial(const GbdtModel& m, const FeatureMatrix& X) {
  std::vector<Attribution> out(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) out[i] = tree_shap(m, X.row(i));
  return out;
}

}  // namespace tefb
