#pragma once

// Data-parallel batch kernels. Each OpenMP kernel has a serial reference
// with identical results; tests compare the two and bench/ times them.

#include <span>
#include <vector>

#include "tefb/corpus.hpp"
#include "tefb/detector.hpp"
#include "tefb/features.hpp"
#include "tefb/shap.hpp"

namespace tefb {

FeatureMatrix extract_features_batch(std::span<const ToyBinary> binaries, std::span<const std::uint8_t> labels);
FeatureMatrix extract_features_batch_serial(std::span<const ToyBinary> binaries, std::span<const std::uint8_t> labels);

/// Generates (or reads) the binaries of `entries` and extracts their features, labelled by entry label.
FeatureMatrix corpus_features(const Corpus& corpus, const std::vector<CorpusEntry>& entries);
FeatureMatrix corpus_features_serial(const Corpus& corpus, const std::vector<CorpusEntry>& entries);

std::vector<double> score_batch(const Model& m, const FeatureMatrix& X);
std::vector<double> score_batch_serial(const Model& m, const FeatureMatrix& X);

std::vector<Attribution> tree_shap_batch(const GbdtModel& m, const FeatureMatrix& X);
std::vector<Attribution> tree_shap_batch_serial(const GbdtModel& m, const FeatureMatrix& X);

}  // namespace tefb
