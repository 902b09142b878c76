#pragma once

// Episodic mutation environment: applies functionality-preserving actions to
// a working binary and asks the wrapped detector for a hard label after each.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <string_view>
#include <vector>

#include "tefb/corpus.hpp"
#include "tefb/detector.hpp"
#include "tefb/features.hpp"
#include "tefb/rng.hpp"

namespace tefb {

enum class ActionId : std::uint8_t {
  PadOverlay = 0,
  AppendBenignDataOverlay,
  AppendBenignBinaryOverlay,
  AddBytesToSectionCave,
  AddSectionStrings,
  AddSectionBenignData,
  AddStringsToOverlay,
  AddImports,
  RenameSection,
  RemoveDebug,
  ModifyOptionalHeader,
  ModifyTimestamp,
  BreakChecksum,
  ToyPackToggle,
};

inline constexpr std::size_t kNumActions = 14;
inline constexpr std::size_t kDefaultMaxTurns = 15;
inline constexpr double kEvasionReward = 10.0;

std::string_view action_name(ActionId a);
ActionId action_from_index(std::size_t i);
const std::array<ActionId, kNumActions>& all_actions();

/// Applies one mutation. Always returns a valid binary with the input's digest;
/// an action that cannot apply returns the input unchanged.
ToyBinary apply_action(const ToyBinary& b, ActionId a, const BenignIngredients& ing, Rng& rng);

/// Thread-safe (observation, label) sink for D_sur.
class CaptureBuffer {
 public:
  void add(const FeatureVector& obs, std::uint8_t label);
  std::size_t size() const;
  FeatureMatrix snapshot() const;
  void clear();

 private:
  mutable std::mutex mu_;
  FeatureMatrix rows_;
};

/// JSON-lines step log: {episode_id, turn, action, reward, label, done}.
class EpisodeLog {
 public:
  explicit EpisodeLog(std::ostream& out) : out_(&out) {}
  std::uint64_t next_episode_id();
  void write(std::uint64_t episode_id, std::size_t turn, ActionId a, double reward, std::uint8_t label, bool done);

 private:
  std::mutex mu_;
  std::ostream* out_;
  std::uint64_t next_id_ = 0;
};

struct ResetResult {
  FeatureVector observation{};
  bool initially_detected = false;
};

struct StepRecord {
  FeatureVector observation{};
  ActionId action = ActionId::PadOverlay;
  double reward = 0.0;
  bool done = false;
  std::uint8_t label = 1;
};

struct EnvConfig {
  std::size_t max_turns = kDefaultMaxTurns;
};

class Environment {
 public:
  Environment(const Detector& detector, const BenignIngredients& ingredients, EnvConfig cfg, std::uint64_t seed,
              CaptureBuffer* capture = nullptr, EpisodeLog* log = nullptr);

  /// Starts an episode. Queries the detector once; an undetected input marks the episode skipped.
  ResetResult reset(const ToyBinary& b);
  /// Throws MalformedInput when the file does not parse or validate.
  ResetResult reset(const std::filesystem::path& path);

  /// Throws EpisodeFinished when no episode is active.
  StepRecord step(ActionId a);

  bool active() const { return started_ && !skipped_ && !done_; }
  bool skipped() const { return skipped_; }
  bool done() const { return done_; }
  bool evaded() const { return evaded_; }
  bool exhausted() const { return done_ && !evaded_; }
  std::size_t turn() const { return turn_; }
  std::size_t max_turns() const { return cfg_.max_turns; }
  const ToyBinary& working() const { return working_; }
  const FeatureVector& observation() const { return obs_; }
  std::uint64_t episodes_started() const { return episodes_; }
  /// Largest detector query count of any episode so far (reset included).
  std::size_t max_episode_queries() const { return max_episode_queries_; }
  const Detector& detector() const { return *detector_; }

 private:
  std::uint8_t query(const FeatureVector& obs);

  const Detector* detector_;
  const BenignIngredients* ing_;
  EnvConfig cfg_;
  std::uint64_t seed_;
  CaptureBuffer* capture_;
  EpisodeLog* log_;

  Rng rng_;
  ToyBinary working_;
  FeatureVector obs_{};
  FunctionalDigest digest_;
  std::uint64_t episodes_ = 0;
  std::uint64_t episode_id_ = 0;
  std::size_t turn_ = 0;
  std::size_t max_episode_queries_ = 0;
  bool started_ = false, skipped_ = false, done_ = false, evaded_ = false;
};

}  // namespace tefb
