#pragma once

// Subcommand implementations behind the tefb executable.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tefb/corpus.hpp"
#include "tefb/ffnn.hpp"
#include "tefb/gbdt.hpp"
#include "tefb/meme.hpp"

namespace tefb {

struct RunConfig {
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::optional<double> wall_clock_s;
  std::filesystem::path out = "out";
  std::filesystem::path corpus_dir;
  std::filesystem::path model_path;
  std::string mode = "meme";
  std::string target = "gbdt";
  double fpr = 0.01;

  CorpusConfig corpus;
  GbdtConfig target_gbdt;
  LinearConfig linear;
  FfnnConfig ffnn;
  MemeConfig meme;
};

/// Effective configuration as JSON (stable key order).
std::string run_config_to_json(const RunConfig& cfg);
/// Overlays keys from `text` onto `base`; unknown keys raise InvalidArgument.
RunConfig run_config_from_json(const std::string& text, RunConfig base = {});

/// Returns the manifest path.
std::filesystem::path cmd_gen_corpus(const RunConfig& cfg);
/// Returns the saved model path.
std::filesystem::path cmd_train_target(const RunConfig& cfg);
/// Returns the written report paths (per seed, then aggregate JSON/CSV).
std::vector<std::filesystem::path> cmd_attack(const RunConfig& cfg);
/// Returns the comparison CSV path.
std::filesystem::path cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out);

inline constexpr const char* kComparisonHeader =
    "method,seeds,evasion_mean,evasion_std,modifications_mean,modifications_std,label_agreement_mean,"
    "feature_agreement_10_mean,feature_agreement_20_mean";

std::string aggregate_csv_row(const Aggregate& a);

}  // namespace tefb
