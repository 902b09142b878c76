#include "tefb/features.hpp"

#include <algorithm>
#include <cmath>

namespace tefb {

namespace {

const double kLogCap = std::log1p(static_cast<double>(1u << 24));

std::size_t machine_slot(std::uint16_t m) {
  switch (m) {
    case 0x14c: return 0;
    case 0x8664: return 1;
    case 0xaa64: return 2;
    default: return 3;
  }
}

bool contains_any(const std::string& s, auto&& words) {
  for (std::string_view w : words) {
    if (s.find(w) != std::string::npos) return true;
  }
  return false;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

double log_scale(double x) { return std::min(1.0, std::log1p(std::max(0.0, x)) / kLogCap); }

double byte_entropy(ByteView bytes) {
  if (bytes.empty()) return 0.0;
  std::array<std::uint32_t, 256> hist{};
  for (auto b : bytes) ++hist[b];
  const double n = static_cast<double>(bytes.size());
  double h = 0.0;
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = c / n;
    h -= p * std::log2(p);
  }
  return h;
}

FeatureVector extract_features(const ToyBinary& b) {
  Bytes raw = serialize(b);
  return extract_features(b, raw);
}

FeatureVector extract_features(const ToyBinary& b, ByteView file_bytes) {
  FeatureVector f{};
  const double size = static_cast<double>(file_bytes.size());

  // Byte-level statistics see section names and the checksum zeroed; names only
  // enter through the hashed bins, the checksum through its validity bit.
  Bytes masked(file_bytes.begin(), file_bytes.end());
  if (masked.size() >= kChecksumOffset + 4) std::fill_n(masked.begin() + kChecksumOffset, 4, 0);
  for (std::size_t i = 0; i < b.sections.size(); ++i) {
    const std::size_t at = kHeaderSize + i * kSectionEntrySize;
    if (at + 8 <= masked.size()) std::fill_n(masked.begin() + static_cast<std::ptrdiff_t>(at), 8, 0);
  }
  const ByteView raw(masked);

  // Byte histogram, 64 bins of 4 byte values.
  {
    std::array<std::uint32_t, 64> hist{};
    for (auto byte : raw) ++hist[byte >> 2];
    for (std::size_t i = 0; i < 64; ++i) f[feat::kByteHist + i] = clamp01(hist[i] / size);
  }

  // Entropy of consecutive 256-byte windows, bucketed over [0,8] bits.
  {
    std::array<std::uint32_t, 16> hist{};
    std::size_t windows = 0;
    for (std::size_t off = 0; off < raw.size(); off += 256) {
      const std::size_t len = std::min<std::size_t>(256, raw.size() - off);
      const double h = byte_entropy(raw.subspan(off, len));
      ++hist[std::min<std::size_t>(15, static_cast<std::size_t>(h / 8.0 * 16.0))];
      ++windows;
    }
    for (std::size_t i = 0; i < 16; ++i) f[feat::kEntropyHist + i] = clamp01(windows ? hist[i] / double(windows) : 0.0);
  }

  // Header.
  {
    const double span = double(kPlausibleTimestampHi) - double(kPlausibleTimestampLo);
    const double t = std::clamp((double(b.timestamp) - kPlausibleTimestampLo) / span, 0.0, 1.0);
    f[feat::kTimestamp] = static_cast<float>(std::min(31.0, std::floor(t * 32.0)) / 31.0);
    std::uint32_t sum = 0;
    for (std::size_t i = 0; i < file_bytes.size(); ++i) {
      if (i < kChecksumOffset || i >= kChecksumOffset + 4) sum += file_bytes[i];
    }
    f[feat::kChecksumValid] = sum == b.checksum ? 1.0f : 0.0f;
    f[feat::kOsMajor] = clamp01(b.os_major / 15.0);
    f[feat::kOsMinor] = clamp01(b.os_minor / 15.0);
    f[feat::kMachine + machine_slot(b.machine_type)] = 1.0f;
    f[feat::kDebug] = b.debug_present ? 1.0f : 0.0f;
    f[feat::kPacked] = b.packed ? 1.0f : 0.0f;
    f[feat::kVersion] = clamp01(b.version / 8.0);
    f[feat::kDebugSize] = clamp01(log_scale(double(b.debug_blob.size())));
  }

  // Sections.
  {
    f[feat::kSectionCount] = clamp01(b.sections.size() / 32.0);
    double sum_h = 0.0, max_h = 0.0, alloc = 0.0, cave = 0.0;
    for (const auto& s : b.sections) {
      const double h = byte_entropy(s.data);
      sum_h += h;
      max_h = std::max(max_h, h);
      alloc += s.alloc_len;
      cave += s.cave();
      if (s.is_exec()) f[feat::kPayloadEntropy] = clamp01(h / 8.0);
      f[feat::kSectionNameBins + fnv1a32(s.name) % 9] = 1.0f;
    }
    if (!b.sections.empty()) f[feat::kMeanSectionEntropy] = clamp01(sum_h / b.sections.size() / 8.0);
    f[feat::kMaxSectionEntropy] = clamp01(max_h / 8.0);
    f[feat::kTotalSize] = clamp01(log_scale(size));
    f[feat::kCaveFraction] = clamp01(alloc > 0 ? cave / alloc : 0.0);
    f[feat::kOverlaySize] = clamp01(log_scale(double(b.overlay.size())));
  }

  // Imports.
  {
    std::size_t symbols = 0;
    for (const auto& imp : b.imports) {
      symbols += imp.symbols.size();
      f[feat::kImportLibBins + fnv1a32(imp.library) % 8] = 1.0f;
    }
    f[feat::kImportLibCount] = clamp01(log_scale(double(b.imports.size())));
    f[feat::kImportSymCount] = clamp01(log_scale(double(symbols)));
  }

  // Strings.
  {
    const auto strings = printable_runs(raw, 5);
    const double n = static_cast<double>(strings.size());
    f[feat::kStringCount] = clamp01(log_scale(n));
    if (!strings.empty()) {
      double len = 0.0, marker = 0.0, benign = 0.0;
      std::array<double, 6> bins{};
      for (const auto& s : strings) {
        len += s.size();
        if (contains_any(s, marker_ngrams())) marker += 1.0;
        if (contains_any(s, benign_words())) benign += 1.0;
        bins[fnv1a32(s) % 6] += 1.0;
      }
      f[feat::kStringMeanLen] = clamp01(len / n / 64.0);
      f[feat::kMarkerHitFraction] = clamp01(marker / n);
      f[feat::kBenignHitFraction] = clamp01(benign / n);
      for (std::size_t i = 0; i < 6; ++i) f[feat::kStringBins + i] = clamp01(bins[i] / n);
    }
  }
  return f;
}

void FeatureMatrix::push_back(const FeatureVector& v, std::uint8_t label) {
  data.insert(data.end(), v.begin(), v.end());
  labels.push_back(label);
  ++rows;
}

void FeatureMatrix::append(const FeatureMatrix& other) {
  data.insert(data.end(), other.data.begin(), other.data.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  rows += other.rows;
}

FeatureMatrix FeatureMatrix::select(const std::vector<std::size_t>& idx) const {
  FeatureMatrix out;
  out.data.reserve(idx.size() * kFeatureDim);
  for (auto i : idx) {
    auto r = row(i);
    out.data.insert(out.data.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  out.rows = idx.size();
  return out;
}

void write_feature_matrix(const std::string& path, const FeatureMatrix& m) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(kFeatureDim));
  for (float v : m.data) w.f32(v);
  write_file(path, w.buffer());
  write_file(path + ".labels", m.labels);
}

FeatureMatrix read_feature_matrix(const std::string& path) {
  Bytes raw = read_file(path);
  ByteReader r(raw);
  FeatureMatrix m;
  try {
    m.rows = r.u32();
    const std::uint32_t dim = r.u32();
    if (dim != kFeatureDim) throw Error(Errc::MalformedInput, path + ": feature dim " + std::to_string(dim));
    m.data.resize(m.rows * kFeatureDim);
    for (auto& v : m.data) v = r.f32();
  } catch (const ParseError& e) {
    throw Error(Errc::MalformedInput, path + ": " + e.what());
  }
  m.labels = read_file(path + ".labels");
  if (m.labels.size() != m.rows) throw Error(Errc::MalformedInput, path + ".labels: row count mismatch");
  return m;
}

}  // namespace tefb
