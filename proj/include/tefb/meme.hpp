#pragma once

// Model-extraction-guided attack loop: PPO on the target, surrogate fitting on
// captured hard labels, PPO on the surrogate, and evaluation on the target.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tefb/agents.hpp"
#include "tefb/corpus.hpp"
#include "tefb/detector.hpp"
#include "tefb/env.hpp"
#include "tefb/shap.hpp"

namespace tefb {

struct SurrogateConfig {
  double alpha = 1.26;  // weight multiplier on D_sur rows
  GbdtConfig gbdt{200, 0.05, 1250, 15, 20, 1.0, 1e-3, 0.0, 0};
  double fpr = 0.01;
  bool dedup = false;
};

struct MemeConfig {
  std::size_t n = 1024;
  std::size_t k = 2;
  std::size_t m = 2048;
  std::size_t query_budget = 2048;
  SurrogateConfig surrogate;
  PpoConfig ppo;
  EnvConfig env;
  std::uint64_t seed = 0;
  std::size_t feature_sample = 100;
};

void check_config(const MemeConfig& cfg);

/// Everything one attack seed needs besides the target.
struct AttackData {
  BenignIngredients ingredients;
  std::vector<ToyBinary> train;
  std::vector<ToyBinary> test;
  FeatureMatrix aux;         // ground-truth labelled
  FeatureMatrix aux_calib;   // benign holdout for surrogate thresholds
  FeatureMatrix eval;        // agreement evaluation
};

/// seed_index selects the attack split (modulo the corpus' attack seeds).
AttackData prepare_attack(const Corpus& corpus, std::size_t seed_index);
/// Swaps in another attack split, keeping the shared matrices.
void select_attack_split(AttackData& data, const Corpus& corpus, std::size_t seed_index);

/// D_sur rows are weighted by alpha, D_aux rows by 1. Calibrated on
/// aux_calib at cfg.fpr when given, else threshold 0.5.
Detector train_surrogate(const FeatureMatrix& d_sur, const FeatureMatrix& d_aux, const SurrogateConfig& cfg,
                         const FeatureMatrix* aux_calib = nullptr);

struct EpisodeOutcome {
  bool initially_detected = false;
  bool evaded = false;
  std::size_t modifications = 0;
};

struct EvasionReport {
  std::size_t n_tested = 0;
  std::size_t n_detected = 0;
  std::size_t n_evaded = 0;
  double evasion_rate = 0.0;
  double mean_modifications = 0.0;
};

/// Throws EmptyEvaluation when no binary was initially detected.
EvasionReport evasion_rate(const std::vector<EpisodeOutcome>& outcomes, std::size_t max_turns = kDefaultMaxTurns);

struct AgreementReport {
  double label_agreement = 0.0;
  double feature_agreement_10 = 0.0;
  double feature_agreement_20 = 0.0;
};

/// Unmetered on both detectors.
double label_agreement(const Detector& f, const Detector& g, const FeatureMatrix& X);
/// |top_k(a) ∩ top_k(b)| / k; throws KTooLarge.
double feature_agreement(const FeatureRanking& a, const FeatureRanking& b, std::size_t k);
AgreementReport agreement(const Detector& target, const Detector& surrogate, const FeatureMatrix& eval,
                          std::size_t sample_rows, std::uint64_t seed);

using ActionChooser = std::function<ActionId(std::span<const float>, Rng&)>;

ActionChooser policy_chooser(const Policy& p, bool greedy = false);
ActionChooser random_chooser();

/// One episode per binary against `detector`, metered.
std::vector<EpisodeOutcome> evaluate(const Detector& detector, const BenignIngredients& ing,
                                     const std::vector<ToyBinary>& binaries, const ActionChooser& choose,
                                     const EnvConfig& env_cfg, std::uint64_t seed, EpisodeLog* log = nullptr);

struct AttackResult {
  std::string method;
  std::uint64_t seed = 0;
  EvasionReport evasion;
  std::optional<AgreementReport> agreement;
  std::uint64_t training_queries = 0;
  std::uint64_t eval_queries = 0;
  std::size_t max_episode_queries = 0;
  std::vector<EpisodeOutcome> outcomes;
  std::vector<PhaseStats> stats;
  std::optional<Policy> policy;
  std::vector<Detector> surrogates;  // one per round
  FeatureMatrix d_sur;
};

AttackResult run_meme(const MemeConfig& cfg, const Detector& target, const AttackData& data,
                      EpisodeLog* log = nullptr);
/// PPO trained directly on the target with the same query budget.
AttackResult run_ppo_baseline(const MemeConfig& cfg, const Detector& target, const AttackData& data,
                              EpisodeLog* log = nullptr);
AttackResult run_random_baseline(const MemeConfig& cfg, const Detector& target, const AttackData& data,
                                 EpisodeLog* log = nullptr);

std::string evasion_csv_header();
std::string result_csv_row(const AttackResult& r);
/// Deterministic JSON (no timing fields).
std::string result_json(const AttackResult& r);
/// Restores the summary fields written by result_json.
AttackResult result_from_json(const std::string& text);

struct Aggregate {
  std::string method;
  std::size_t seeds = 0;
  double evasion_mean = 0.0, evasion_std = 0.0;
  double modifications_mean = 0.0, modifications_std = 0.0;
  std::optional<double> label_agreement_mean, feature_agreement_10_mean, feature_agreement_20_mean;
};

/// Population std over seeds.
Aggregate aggregate(const std::string& method, const std::vector<AttackResult>& per_seed);

}  // namespace tefb
