#include <algorithm>
#include <cmath>
#include <numeric>

#include "tefb/agents.hpp"
#include "tefb/error.hpp"

namespace tefb {

LossParts ppo_loss(const Policy& policy, const RolloutBuffer& buf, std::span<const std::size_t> idx,
                   const PpoConfig& cfg, std::span<double> actor_grad, std::span<double> critic_grad) {
  LossParts out;
  if (idx.empty()) return out;
  const bool want_grad = !actor_grad.empty();
  const double inv_b = 1.0 / static_cast<double>(idx.size());
  const double eps = cfg.clip_epsilon;

  Mlp::Cache ac, cc;
  std::vector<double> x(kFeatureDim);
  std::size_t clipped = 0;
  for (std::size_t i : idx) {
    std::copy(buf.observations[i].begin(), buf.observations[i].end(), x.begin());
    policy.actor.forward(x, ac);
    policy.critic.forward(x, cc);
    const auto& logits = ac.inputs.back();
    const double v = cc.inputs.back()[0];

    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    std::array<double, kNumActions> p{}, logp{};
    double entropy = 0.0;
    for (std::size_t j = 0; j < kNumActions; ++j) {
      logp[j] = logits[j] - lse;
      p[j] = std::exp(logp[j]);
      entropy -= p[j] * logp[j];
    }

    const std::size_t a = static_cast<std::size_t>(buf.actions[i]);
    const double adv = buf.advantages[i];
    const double ratio = std::exp(logp[a] - buf.log_probs[i]);
    const double surr1 = ratio * adv;
    const double surr2 = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    const bool unclipped = surr1 <= surr2;
    if (std::abs(ratio - 1.0) > eps) ++clipped;
    const double diff = v - buf.returns[i];

    out.policy -= std::min(surr1, surr2) * inv_b;
    out.value += diff * diff * inv_b;
    out.entropy += entropy * inv_b;

    if (!want_grad) continue;
    const double dlogp = unclipped ? -ratio * adv : 0.0;
    std::array<double, kNumActions> dz{};
    for (std::size_t j = 0; j < kNumActions; ++j) {
      const double dH = -p[j] * (logp[j] + entropy);
      dz[j] = (dlogp * ((j == a ? 1.0 : 0.0) - p[j]) - cfg.entropy_coef * dH) * inv_b;
    }
    policy.actor.backward(ac, dz, actor_grad);
    const double dv = cfg.value_coef * 2.0 * diff * inv_b;
    policy.critic.backward(cc, std::span<const double>(&dv, 1), critic_grad);
  }
  out.total = out.policy + cfg.value_coef * out.value - cfg.entropy_coef * out.entropy;
  out.clip_fraction = static_cast<double>(clipped) * inv_b;
  return out;
}

PpoTrainer::PpoTrainer(Policy policy, PpoConfig cfg, std::uint64_t seed)
    : policy_(std::move(policy)),
      cfg_(cfg),
      actor_opt_(policy_.actor.num_params(), cfg.learning_rate),
      critic_opt_(policy_.critic.num_params(), cfg.learning_rate),
      rng_(seed) {
  check_config(cfg_);
}

PpoStats PpoTrainer::update(const RolloutBuffer& buf) {
  PpoStats stats;
  const std::size_t n = buf.size();
  if (n == 0) return stats;
  if (buf.advantages.size() != n || buf.returns.size() != n) {
    throw Error(Errc::InvalidArgument, "rollout buffer has no advantages; call finish() first");
  }

  const Policy snapshot = policy_;
  const Adam actor_snap = actor_opt_, critic_snap = critic_opt_;
  auto abort = [&](const char* what) {
    policy_ = snapshot;
    actor_opt_ = actor_snap;
    critic_opt_ = critic_snap;
    throw Error(Errc::NonFiniteLoss, what);
  };

  const std::size_t na = policy_.actor.num_params();
  const std::size_t nc = policy_.critic.num_params();
  std::vector<double> grad(na + nc);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg_.epochs_per_update; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng_);
    for (std::size_t start = 0; start < n; start += cfg_.minibatch) {
      const std::size_t end = std::min(n, start + cfg_.minibatch);
      std::span<const std::size_t> idx(perm.data() + start, end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      std::span<double> g(grad);
      const LossParts loss = ppo_loss(policy_, buf, idx, cfg_, g.first(na), g.subspan(na));
      if (!std::isfinite(loss.total)) abort("PPO loss is not finite");
      const double norm = clip_global_norm(g, cfg_.max_grad_norm);
      if (!std::isfinite(norm)) abort("PPO gradient is not finite");
      actor_opt_.step(policy_.actor.params(), g.first(na));
      critic_opt_.step(policy_.critic.params(), g.subspan(na));

      stats.policy_loss += loss.policy;
      stats.value_loss += loss.value;
      stats.clip_fraction += loss.clip_fraction;
      stats.grad_norm += norm;
      ++stats.minibatches;
    }
  }
  if (!policy_.finite()) abort("PPO update produced non-finite parameters");
  const double m = static_cast<double>(stats.minibatches);
  stats.policy_loss /= m;
  stats.value_loss /= m;
  stats.clip_fraction /= m;
  stats.grad_norm /= m;
  return stats;
}

RolloutBuffer collect_rollout(Environment& env, EpisodeSource& source, const Policy& policy, Rng& rng,
                              RolloutLimit limit) {
  RolloutBuffer buf;
  const std::uint64_t start = env.detector().ledger();
  auto used = [&] { return env.detector().ledger() - start; };
  auto reached = [&] {
    return limit.kind == RolloutLimit::Kind::Steps ? buf.size() >= limit.n : used() >= limit.n;
  };

  std::size_t misses = 0;
  while (!reached()) {
    if (!env.active()) {
      const ToyBinary* b = source.next();
      if (!b) throw Error(Errc::ExhaustedCorpus, "no episode binaries remain");
      if (!env.reset(*b).initially_detected) {
        if (++misses > source.size()) throw Error(Errc::ExhaustedCorpus, "no episode binary is detected");
      } else {
        misses = 0;
      }
      continue;
    }
    const FeatureVector obs = env.observation();
    const ActionSample s = sample_action(policy, obs, rng);
    const StepRecord rec = env.step(s.action);
    buf.push(obs, s.action, rec.reward, rec.done, s.log_prob, s.value);
    if (rec.done) {
      buf.episode_rewards.push_back(rec.reward);
      buf.episode_lengths.push_back(env.turn());
    }
  }
  buf.queries = used();
  return buf;
}

std::vector<PhaseStats> train_phase(PpoTrainer& trainer, Environment& env, EpisodeSource& source, RolloutLimit limit,
                                    std::size_t first_update_index) {
  std::vector<PhaseStats> rows;
  const PpoConfig& cfg = trainer.config();
  std::size_t remaining = limit.n;
  while (remaining > 0) {
    const std::size_t chunk = std::min(remaining, cfg.rollout_horizon);
    RolloutBuffer buf = collect_rollout(env, source, trainer.policy(), trainer.rng(), {limit.kind, chunk});
    remaining -= chunk;
    const double last_value = env.active() ? trainer.policy().value(env.observation()) : 0.0;
    buf.finish(cfg.gamma, cfg.gae_lambda, last_value);

    PhaseStats row;
    row.update = first_update_index + rows.size();
    row.steps = buf.size();
    row.queries = buf.queries;
    if (!buf.episode_rewards.empty()) {
      row.mean_episode_reward = std::accumulate(buf.episode_rewards.begin(), buf.episode_rewards.end(), 0.0) /
                                static_cast<double>(buf.episode_rewards.size());
    }
    row.ppo = trainer.update(buf);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace tefb
