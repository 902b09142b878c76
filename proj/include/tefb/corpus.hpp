#pragma once

// Procedural benign/malicious TEF corpora, split planning and the benign
// ingredient pools that mutation actions draw from.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tefb/tbf.hpp"

namespace tefb {

enum class Label : std::uint8_t { Benign = 0, Malicious = 1 };

struct CorpusConfig {
  std::uint64_t seed = 1;
  std::size_t n_target_train_per_class = 2000;
  std::size_t n_target_calib_benign = 10000;
  std::size_t n_aux_per_class = 2000;
  std::size_t n_aux_calib_benign = 10000;
  std::size_t n_eval_per_class = 1000;
  std::size_t n_attack_malware = 1000;
  std::size_t n_benign_ingredients = 100;
  std::size_t n_attack_seeds = 5;
  double attack_train_fraction = 0.7;

  // Class-separation knobs.
  std::size_t malicious_markers_min = 1;
  std::size_t malicious_markers_max = 3;
  double benign_marker_rate = 0.10;
  double benign_random_frac_max = 0.30;
  double malicious_random_frac_min = 0.20;
  double malicious_random_frac_max = 0.75;
  double malicious_packed_rate = 0.25;
  double benign_debug_rate = 0.35;
  double malicious_debug_rate = 0.5;
  double malicious_overlay_rate = 0.5;
  /// Shifts the aux splits' entropy knobs by up to this fraction.
  double aux_shift = 0.0;
};

/// Throws InvalidArgument when a count is zero or a knob is out of range.
void check_config(const CorpusConfig& cfg);

/// The 16 fixed 8-byte malicious marker n-grams.
const std::array<std::string_view, 16>& marker_ngrams();
/// Dictionary words benign strings are built from.
const std::vector<std::string_view>& benign_words();
const std::vector<std::string_view>& benign_libraries();
const std::vector<std::string_view>& suspicious_libraries();
const std::vector<std::string_view>& benign_section_names();
/// Plausible symbols for a library name (deterministic).
std::vector<std::string> library_symbols(std::string_view library);

/// Deterministic in (label, rng_seed, cfg); output is always valid with no warnings.
ToyBinary gen_binary(Label label, std::uint64_t rng_seed, const CorpusConfig& cfg);

struct CorpusEntry {
  std::string path;  // relative to the corpus root
  Label label = Label::Benign;
  std::uint64_t class_seed = 0;
  std::string split;

  bool operator==(const CorpusEntry&) const = default;
};

struct AttackSplit {
  std::vector<CorpusEntry> train;
  std::vector<CorpusEntry> test;
};

struct CorpusSplits {
  std::vector<CorpusEntry> target_train;
  std::vector<CorpusEntry> target_calib;
  std::vector<CorpusEntry> aux;
  std::vector<CorpusEntry> aux_calib;
  std::vector<CorpusEntry> eval;
  std::vector<CorpusEntry> attack;
  std::vector<CorpusEntry> ingredients;
  std::vector<AttackSplit> attack_splits;  // one per attack seed

  std::vector<const CorpusEntry*> all() const;
};

/// Plans n_benign + n_malicious entries of a named split on its own seed stream.
std::vector<CorpusEntry> plan_split(const CorpusConfig& cfg, std::string_view split, std::size_t n_benign,
                                    std::size_t n_malicious);

/// 70/30 partition of the attack set controlled by `seed`.
AttackSplit split_attack_set(const CorpusConfig& cfg, const std::vector<CorpusEntry>& attack, std::uint64_t seed);

CorpusSplits plan_corpus(const CorpusConfig& cfg);

/// Regenerates the binary an entry describes.
ToyBinary materialize(const CorpusEntry& e, const CorpusConfig& cfg);

/// Writes every .tef file, manifest.jsonl, corpus_config.json and the
/// per-seed attack split files under `dir`.
CorpusSplits build_corpus(const CorpusConfig& cfg, const std::filesystem::path& dir);

/// A corpus either regenerated in memory or read back from a directory.
class Corpus {
 public:
  static Corpus in_memory(const CorpusConfig& cfg);
  static Corpus load(const std::filesystem::path& dir);

  const CorpusConfig& config() const { return cfg_; }
  const CorpusSplits& splits() const { return splits_; }
  const std::optional<std::filesystem::path>& root() const { return root_; }

  ToyBinary binary(const CorpusEntry& e) const;
  std::vector<ToyBinary> binaries(const std::vector<CorpusEntry>& entries) const;

 private:
  CorpusConfig cfg_;
  CorpusSplits splits_;
  std::optional<std::filesystem::path> root_;
};

std::string config_to_json(const CorpusConfig& cfg);
/// Rejects unknown keys.
CorpusConfig config_from_json(const std::string& text);

struct HeaderSample {
  std::uint8_t os_major = 0;
  std::uint8_t os_minor = 0;
  std::uint16_t version = 0;
  std::uint32_t timestamp = 0;
};

struct SectionBlob {
  std::uint8_t flags = 0;
  Bytes data;
};

struct BenignIngredients {
  std::vector<std::string> strings;
  std::vector<SectionBlob> section_datas;  // payload blobs first
  std::size_t payload_blob_count = 0;
  std::vector<Bytes> whole_binaries;
  std::vector<Import> import_entries;
  std::vector<HeaderSample> headers;
};

/// Printable ASCII runs (0x20..0x7e) of at least `min_len` bytes.
std::vector<std::string> printable_runs(ByteView bytes, std::size_t min_len = 5);

BenignIngredients extract_ingredients(const std::vector<ToyBinary>& benign);
BenignIngredients extract_ingredients(const std::vector<std::filesystem::path>& benign_paths);

}  // namespace tefb
