#include "tefb/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tefb/error.hpp"
#include "tefb/model_io.hpp"

namespace tefb {

Policy Policy::make(Rng& rng, std::size_t hidden) {
  Policy p;
  p.actor = Mlp({kFeatureDim, hidden, hidden, kNumActions}, Activation::Tanh);
  p.critic = Mlp({kFeatureDim, hidden, hidden, 1}, Activation::Tanh);
  p.actor.init(rng, std::sqrt(2.0), 0.01);
  p.critic.init(rng, std::sqrt(2.0), 1.0);
  return p;
}

ActionProbs softmax(std::span<const double> logits) {
  ActionProbs p{};
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < kNumActions; ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= z;
  return p;
}

ActionProbs Policy::probs(std::span<const float> obs) const { return softmax(actor.forward(obs)); }

double Policy::value(std::span<const float> obs) const { return critic.forward(obs)[0]; }

std::size_t sample_categorical(std::span<const double> p, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

ActionSample sample_action(const Policy& policy, std::span<const float> obs, Rng& rng, bool greedy) {
  const auto logits = policy.actor.forward(obs);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);

  std::size_t a;
  if (greedy) {
    a = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  } else {
    a = sample_categorical(softmax(logits), rng);
  }
  return {static_cast<ActionId>(a), logits[a] - lse, policy.value(obs)};
}

ActionId random_policy(std::span<const float>, Rng& rng) { return static_cast<ActionId>(uniform_index(rng, kNumActions)); }

void check_config(const PpoConfig& cfg) {
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw Error(Errc::InvalidArgument, "gamma must be in (0, 1]");
  if (!(cfg.gae_lambda >= 0.0 && cfg.gae_lambda <= 1.0)) throw Error(Errc::InvalidArgument, "gae_lambda must be in [0, 1]");
  if (!(cfg.clip_epsilon > 0.0)) throw Error(Errc::InvalidArgument, "clip_epsilon must be > 0");
  if (!(cfg.learning_rate > 0.0)) throw Error(Errc::InvalidArgument, "learning_rate must be > 0");
  if (!(cfg.max_grad_norm > 0.0)) throw Error(Errc::InvalidArgument, "max_grad_norm must be > 0");
  if (cfg.epochs_per_update == 0 || cfg.minibatch == 0 || cfg.rollout_horizon == 0) {
    throw Error(Errc::InvalidArgument, "epochs, minibatch and rollout_horizon must be > 0");
  }
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        std::span<const std::uint8_t> dones, double gamma, double lambda, double last_value) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw Error(Errc::InvalidArgument, "gae arrays differ in length");
  std::vector<double> adv(n);
  double next_adv = 0.0;
  double next_value = last_value;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    adv[t] = next_adv;
    next_value = values[t];
  }
  return adv;
}

void RolloutBuffer::push(const FeatureVector& obs, ActionId a, double reward, bool done, double log_prob,
                         double value) {
  observations.push_back(obs);
  actions.push_back(a);
  rewards.push_back(reward);
  dones.push_back(done ? 1 : 0);
  log_probs.push_back(log_prob);
  values.push_back(value);
}

void RolloutBuffer::finish(double gamma, double lambda, double last_value) {
  advantages = gae(rewards, values, dones, gamma, lambda, last_value);
  returns.resize(size());
  for (std::size_t i = 0; i < size(); ++i) returns[i] = advantages[i] + values[i];
  if (advantages.empty()) return;
  const double n = static_cast<double>(advantages.size());
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : advantages) a = sd > 1e-8 ? (a - mean) / sd : a - mean;
}

EpisodeSource::EpisodeSource(std::vector<ToyBinary> binaries, std::uint64_t seed, bool cycle)
    : binaries_(std::move(binaries)), seed_(seed), cycle_(cycle) {
  reshuffle();
}

void EpisodeSource::reshuffle() {
  order_.resize(binaries_.size());
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng(derive_seed(seed_, {pass_++}));
  std::shuffle(order_.begin(), order_.end(), rng);
  pos_ = 0;
}

const ToyBinary* EpisodeSource::next() {
  if (binaries_.empty()) return nullptr;
  if (pos_ == order_.size()) {
    if (!cycle_) return nullptr;
    reshuffle();
  }
  return &binaries_[order_[pos_++]];
}

std::string stats_csv_header() {
  return "update,steps,queries,policy_loss,value_loss,clip_fraction,grad_norm,mean_episode_reward";
}

std::string stats_csv_row(const PhaseStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%llu,%.9g,%.9g,%.9g,%.9g,%.9g", s.update, s.steps,
                static_cast<unsigned long long>(s.queries), s.ppo.policy_loss, s.ppo.value_loss,
                s.ppo.clip_fraction, s.ppo.grad_norm, s.mean_episode_reward);
  return buf;
}

Bytes encode_policy(const Policy& p) {
  ByteWriter w;
  write_mlp(w, p.actor);
  write_mlp(w, p.critic);
  TefmContainer c;
  c.kind = ModelKind::Policy;
  c.threshold = 0.0;
  c.payload = w.take();
  return encode_container(c);
}

Policy decode_policy(ByteView bytes) {
  const TefmContainer c = decode_container(bytes);
  if (c.kind != ModelKind::Policy) throw Error(Errc::MalformedInput, "container does not hold a policy");
  ByteReader r(c.payload);
  Policy p;
  p.actor = read_mlp(r);
  p.critic = read_mlp(r);
  if (!r.at_end()) throw Error(Errc::MalformedInput, "trailing bytes after policy");
  if (p.actor.in_dim() != kFeatureDim || p.actor.out_dim() != kNumActions || p.critic.in_dim() != kFeatureDim ||
      p.critic.out_dim() != 1) {
    throw Error(Errc::MalformedInput, "policy network shapes do not match");
  }
  return p;
}

void save_policy(const std::string& path, const Policy& p) { write_file(path, encode_policy(p)); }

Policy load_policy(const std::string& path) { return decode_policy(read_file(path)); }

}  // namespace tefb
