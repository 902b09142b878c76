#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tefb/corpus.hpp"
#include "tefb/tbf.hpp"

namespace tefb {

inline constexpr std::size_t kFeatureDim = 128;

using FeatureVector = std::array<float, kFeatureDim>;

// Coordinate layout.
namespace feat {
inline constexpr std::size_t kByteHist = 0;         // 64 bins
inline constexpr std::size_t kEntropyHist = 64;     // 16 bins
inline constexpr std::size_t kTimestamp = 80;
inline constexpr std::size_t kChecksumValid = 81;
inline constexpr std::size_t kOsMajor = 82;
inline constexpr std::size_t kOsMinor = 83;
inline constexpr std::size_t kMachine = 84;         // 4 one-hot
inline constexpr std::size_t kDebug = 88;
inline constexpr std::size_t kPacked = 89;
inline constexpr std::size_t kVersion = 90;
inline constexpr std::size_t kDebugSize = 91;
inline constexpr std::size_t kSectionCount = 92;
inline constexpr std::size_t kPayloadEntropy = 93;
inline constexpr std::size_t kMeanSectionEntropy = 94;
inline constexpr std::size_t kMaxSectionEntropy = 95;
inline constexpr std::size_t kTotalSize = 96;
inline constexpr std::size_t kCaveFraction = 97;
inline constexpr std::size_t kOverlaySize = 98;
inline constexpr std::size_t kSectionNameBins = 99;  // 9 bins
inline constexpr std::size_t kImportLibCount = 108;
inline constexpr std::size_t kImportSymCount = 109;
inline constexpr std::size_t kImportLibBins = 110;   // 8 bins
inline constexpr std::size_t kStringCount = 118;
inline constexpr std::size_t kStringMeanLen = 119;
inline constexpr std::size_t kMarkerHitFraction = 120;
inline constexpr std::size_t kBenignHitFraction = 121;
inline constexpr std::size_t kStringBins = 122;      // 6 bins
}  // namespace feat

/// min(1, ln(1+x) / ln(1+2^24)).
double log_scale(double x);

/// Shannon entropy in bits of a byte sequence (0 for empty input).
double byte_entropy(ByteView bytes);

FeatureVector extract_features(const ToyBinary& b);
/// Features of an already-serialized, parsed binary (avoids re-encoding).
FeatureVector extract_features(const ToyBinary& b, ByteView file_bytes);

/// Row-major float matrix of feature vectors with byte labels.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::vector<float> data;  // rows * kFeatureDim
  std::vector<std::uint8_t> labels;

  std::span<const float> row(std::size_t i) const { return {data.data() + i * kFeatureDim, kFeatureDim}; }
  void push_back(const FeatureVector& v, std::uint8_t label);
  void append(const FeatureMatrix& other);
  FeatureMatrix select(const std::vector<std::size_t>& idx) const;
};

/// Writes `path` (u32 rows, u32 dim, f32 row-major) and `path + ".labels"`.
void write_feature_matrix(const std::string& path, const FeatureMatrix& m);
FeatureMatrix read_feature_matrix(const std::string& path);

}  // namespace tefb
