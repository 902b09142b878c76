#pragma once

// Random baseline and a from-scratch PPO actor-critic.

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tefb/env.hpp"
#include "tefb/nn.hpp"

namespace tefb {

using ActionProbs = std::array<double, kNumActions>;

struct Policy {
  Mlp actor;   // 128-64-64-14 logits
  Mlp critic;  // 128-64-64-1

  static Policy make(Rng& rng, std::size_t hidden = 64);

  ActionProbs probs(std::span<const float> obs) const;
  double value(std::span<const float> obs) const;
  bool finite() const { return actor.finite() && critic.finite(); }
  bool operator==(const Policy& o) const {
    return actor.params() == o.actor.params() && critic.params() == o.critic.params();
  }
};

/// Numerically stable softmax of logits.
ActionProbs softmax(std::span<const double> logits);

struct ActionSample {
  ActionId action = ActionId::PadOverlay;
  double log_prob = 0.0;
  double value = 0.0;
};

/// Draws one index from `p` with a single uniform variate.
std::size_t sample_categorical(std::span<const double> p, Rng& rng);

/// Stochastic by default; greedy picks the argmax (lowest index on ties).
ActionSample sample_action(const Policy& policy, std::span<const float> obs, Rng& rng, bool greedy = false);

ActionId random_policy(std::span<const float> obs, Rng& rng);

struct PpoConfig {
  double gamma = 0.854;
  double learning_rate = 0.00138;
  double max_grad_norm = 0.4284;
  double clip_epsilon = 0.2;
  double gae_lambda = 0.95;
  std::size_t epochs_per_update = 10;
  std::size_t minibatch = 64;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  std::size_t rollout_horizon = 2048;
};

void check_config(const PpoConfig& cfg);

/// A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}, bootstrapping from last_value after the final step.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        std::span<const std::uint8_t> dones, double gamma, double lambda, double last_value = 0.0);

struct RolloutBuffer {
  std::vector<FeatureVector> observations;
  std::vector<ActionId> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;

  // Completed-episode bookkeeping for stats.
  std::vector<double> episode_rewards;
  std::vector<std::size_t> episode_lengths;
  std::uint64_t queries = 0;

  std::size_t size() const { return actions.size(); }
  void push(const FeatureVector& obs, ActionId a, double reward, bool done, double log_prob, double value);
  /// Computes advantages and returns, then normalizes advantages.
  void finish(double gamma, double lambda, double last_value);
};

struct LossParts {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

/// PPO loss over buffer rows `idx`. When grads are given, accumulates
/// dLoss/dparams (actor then critic) into them.
LossParts ppo_loss(const Policy& policy, const RolloutBuffer& buf, std::span<const std::size_t> idx,
                   const PpoConfig& cfg, std::span<double> actor_grad = {}, std::span<double> critic_grad = {});

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  std::size_t minibatches = 0;
};

class PpoTrainer {
 public:
  PpoTrainer(Policy policy, PpoConfig cfg, std::uint64_t seed);

  /// Throws NonFiniteLoss leaving the policy and optimizer untouched.
  PpoStats update(const RolloutBuffer& buf);

  Policy& policy() { return policy_; }
  const Policy& policy() const { return policy_; }
  const PpoConfig& config() const { return cfg_; }
  Rng& rng() { return rng_; }

 private:
  Policy policy_;
  PpoConfig cfg_;
  Adam actor_opt_, critic_opt_;
  Rng rng_;
};

/// Cycles through episode binaries in a seeded order, reshuffling each pass.
class EpisodeSource {
 public:
  EpisodeSource(std::vector<ToyBinary> binaries, std::uint64_t seed, bool cycle = true);
  /// nullptr when a non-cycling source is exhausted.
  const ToyBinary* next();
  std::size_t size() const { return binaries_.size(); }

 private:
  void reshuffle();

  std::vector<ToyBinary> binaries_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::uint64_t pass_ = 0;
  std::uint64_t seed_;
  bool cycle_;
};

struct RolloutLimit {
  enum class Kind { Steps, Queries } kind = Kind::Steps;
  std::size_t n = 0;
  static RolloutLimit steps(std::size_t n) { return {Kind::Steps, n}; }
  static RolloutLimit queries(std::size_t n) { return {Kind::Queries, n}; }
};

/// Runs the policy in `env` (continuing any active episode) until the limit.
/// Steps mode collects exactly n transitions; Queries mode stops once the
/// detector ledger has grown by n. Throws ExhaustedCorpus when no detected
/// binary can be found.
RolloutBuffer collect_rollout(Environment& env, EpisodeSource& source, const Policy& policy, Rng& rng,
                              RolloutLimit limit);

/// Trains for a phase, splitting it into rollouts of at most rollout_horizon.
/// Returns one stats row per update.
struct PhaseStats {
  std::size_t update = 0;
  std::size_t steps = 0;
  std::uint64_t queries = 0;
  PpoStats ppo;
  double mean_episode_reward = 0.0;
};

std::vector<PhaseStats> train_phase(PpoTrainer& trainer, Environment& env, EpisodeSource& source, RolloutLimit limit,
                                    std::size_t first_update_index = 0);

std::string stats_csv_header();
std::string stats_csv_row(const PhaseStats& s);

Bytes encode_policy(const Policy& p);
Policy decode_policy(ByteView bytes);
void save_policy(const std::string& path, const Policy& p);
Policy load_policy(const std::string& path);

}  // namespace tefb
