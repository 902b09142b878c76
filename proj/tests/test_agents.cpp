#include "doctest.h"

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "tefb/agents.hpp"
#include "tefb/error.hpp"

using namespace tefb;

namespace {

// Forward-sum form of GAE: A_t = sum_l (gamma*lambda)^l delta_{t+l}, truncated at episode ends.
std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v,
                               const std::vector<std::uint8_t>& d, double gamma, double lambda, double last) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : last;
    delta[t] = r[t] + gamma * next * (d[t] ? 0.0 : 1.0) - v[t];
  }
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      a[t] += w * delta[k];
      if (d[k]) break;
      w *= gamma * lambda;
    }
  }
  return a;
}

Policy small_policy(Rng& rng, std::size_t hidden = 8) {
  Policy p;
  p.actor = Mlp({kFeatureDim, hidden, hidden, kNumActions}, Activation::Tanh);
  p.critic = Mlp({kFeatureDim, hidden, hidden, 1}, Activation::Tanh);
  p.actor.init(rng, 1.0, 1.0);
  p.critic.init(rng, 1.0, 1.0);
  return p;
}

RolloutBuffer toy_buffer(Rng& rng, const Policy& p, std::size_t n, double spread) {
  RolloutBuffer b;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector obs{};
    for (auto& f : obs) f = static_cast<float>(uniform01(rng));
    const auto s = sample_action(p, obs, rng);
    b.push(obs, s.action, uniform01(rng) < 0.3 ? 10.0 : 0.0, uniform01(rng) < 0.2, s.log_prob + spread * (uniform01(rng) - 0.5), s.value);
  }
  b.finish(0.9, 0.95, 0.0);
  return b;
}

GbdtModel constant(double margin) {
  GbdtModel m;
  m.base_score = margin;
  return m;
}

const BenignIngredients& ingredients() {
  static const BenignIngredients ing = [] {
    std::vector<ToyBinary> benign;
    for (std::uint64_t i = 0; i < 20; ++i) benign.push_back(gen_binary(Label::Benign, 8000 + i, CorpusConfig{}));
    return extract_ingredients(benign);
  }();
  return ing;
}

}  // namespace

TEST_SUITE("agents") {
  TEST_CASE("softmax sums to one and uniform logits give 1/14") {
    std::vector<double> z(kNumActions, 0.3);
    for (double p : softmax(z)) CHECK(p == doctest::Approx(1.0 / 14.0).epsilon(1e-12));
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
      for (auto& v : z) v = 50.0 * (uniform01(rng) - 0.5);
      const auto p = softmax(z);
      CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9);
    }
  }

  TEST_CASE("log_prob matches the selected probability") {
    Rng rng(2);
    const Policy p = Policy::make(rng);
    for (int t = 0; t < 50; ++t) {
      FeatureVector obs{};
      for (auto& f : obs) f = static_cast<float>(uniform01(rng));
      const auto s = sample_action(p, obs, rng);
      CHECK(std::abs(std::exp(s.log_prob) - p.probs(obs)[std::size_t(s.action)]) <= 1e-9);
      CHECK(s.value == p.value(obs));
    }
  }

  TEST_CASE("greedy sampling breaks ties by the lowest index") {
    Rng rng(3);
    Policy p = small_policy(rng);
    std::fill(p.actor.params().begin(), p.actor.params().end(), 0.0);
    FeatureVector obs{};
    CHECK(sample_action(p, obs, rng, true).action == ActionId::PadOverlay);
    // Raise the bias of actions 5 and 9 equally.
    const std::size_t bias = p.actor.num_params() - kNumActions;
    p.actor.params()[bias + 5] = 1.0;
    p.actor.params()[bias + 9] = 1.0;
    CHECK(sample_action(p, obs, rng, true).action == ActionId::AddSectionBenignData);
  }

  TEST_CASE("sampled frequencies match the policy within 3 sigma") {
    Rng rng(4);
    const Policy pol = small_policy(rng);
    FeatureVector obs{};
    for (auto& f : obs) f = static_cast<float>(uniform01(rng));
    const auto p = pol.probs(obs);
    std::array<std::size_t, kNumActions> counts{};
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) ++counts[std::size_t(sample_action(pol, obs, rng).action)];
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const double sd = std::sqrt(n * p[a] * (1 - p[a]));
      CHECK(std::abs(double(counts[a]) - n * p[a]) <= 3.0 * sd + 1e-9);
    }
  }

  TEST_CASE("random policy passes a chi-square uniformity test") {
    Rng rng(5);
    std::array<std::size_t, kNumActions> counts{};
    const std::size_t n = 100000;
    FeatureVector obs{};
    for (std::size_t i = 0; i < n; ++i) ++counts[std::size_t(random_policy(obs, rng))];
    const double e = double(n) / kNumActions;
    double chi2 = 0.0;
    for (auto c : counts) chi2 += (c - e) * (c - e) / e;
    CHECK(chi2 < 34.528);  // chi-square(13) at alpha = 0.001

    Rng a(6), b(6);
    FeatureVector other{};
    other.fill(1.0f);
    for (int i = 0; i < 100; ++i) CHECK(random_policy(obs, a) == random_policy(other, b));
  }

  TEST_CASE("GAE trivial cases") {
    std::vector<double> z(5, 0.0);
    std::vector<std::uint8_t> d(5, 0);
    for (double a : gae(z, z, d, 0.9, 0.95)) CHECK(a == 0.0);
    std::vector<double> r = {2.5}, v = {0.75};
    std::vector<std::uint8_t> d1 = {0};
    CHECK(gae(r, v, d1, 0.0, 0.95)[0] == 2.5 - 0.75);
  }

  TEST_CASE("GAE equals the forward-sum oracle") {
    Rng rng(7);
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 32;
      std::vector<double> r(n), v(n);
      std::vector<std::uint8_t> d(n);
      for (std::size_t i = 0; i < n; ++i) {
        r[i] = 10.0 * uniform01(rng) - 2.0;
        v[i] = 4.0 * uniform01(rng) - 2.0;
        d[i] = uniform01(rng) < 0.15;
      }
      const double gamma = uniform01(rng), lambda = uniform01(rng), last = uniform01(rng);
      const auto a = gae(r, v, d, gamma, lambda, last);
      const auto o = gae_oracle(r, v, d, gamma, lambda, last);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a[i] - o[i]) <= 1e-12);
    }
  }

  TEST_CASE("advantages are normalized and returns use raw advantages") {
    Rng rng(8);
    const Policy p = small_policy(rng);
    const RolloutBuffer b = toy_buffer(rng, p, 64, 0.0);
    const double mean = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / 64.0;
    double var = 0.0;
    for (double a : b.advantages) var += (a - mean) * (a - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::sqrt(var / 64.0) == doctest::Approx(1.0));
    const auto raw = gae(b.rewards, b.values, b.dones, 0.9, 0.95, 0.0);
    for (std::size_t i = 0; i < 64; ++i) CHECK(b.returns[i] == doctest::Approx(raw[i] + b.values[i]));
  }

  TEST_CASE("clipped objective never exceeds the unclipped surrogate") {
    Rng rng(9);
    for (int t = 0; t < 1000; ++t) {
      const double r = 2.0 * uniform01(rng), A = 4.0 * uniform01(rng) - 2.0;
      const double clipped = std::min(r * A, std::clamp(r, 0.8, 1.2) * A);
      CHECK(clipped <= r * A);
    }
  }

  TEST_CASE("PPO loss gradient matches finite differences") {
    Rng rng(10);
    for (int trial = 0; trial < 6; ++trial) {
      Policy p = small_policy(rng, 6);
      RolloutBuffer b = toy_buffer(rng, p, 8, 0.6);
      PpoConfig cfg;
      cfg.entropy_coef = trial % 2 ? 0.01 : 0.0;
      std::vector<std::size_t> idx(8);
      std::iota(idx.begin(), idx.end(), 0);
      std::vector<double> ga(p.actor.num_params(), 0.0), gc(p.critic.num_params(), 0.0);
      ppo_loss(p, b, idx, cfg, ga, gc);
      double worst = 0.0;
      auto check = [&](std::vector<double>& params, const std::vector<double>& grad) {
        for (std::size_t k = 0; k < params.size(); k += 3) {
          const double h = 1e-6, keep = params[k];
          params[k] = keep + h;
          const double up = ppo_loss(p, b, idx, cfg).total;
          params[k] = keep - h;
          const double dn = ppo_loss(p, b, idx, cfg).total;
          params[k] = keep;
          const double fd = (up - dn) / (2 * h);
          worst = std::max(worst, std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-6}));
        }
      };
      check(p.actor.params(), ga);
      check(p.critic.params(), gc);
      CHECK(worst < 1e-3);
    }
  }

  TEST_CASE("zero advantages leave the actor untouched without entropy") {
    Rng rng(11);
    const Policy p0 = small_policy(rng);
    RolloutBuffer b = toy_buffer(rng, p0, 32, 0.3);
    std::fill(b.advantages.begin(), b.advantages.end(), 0.0);
    std::vector<std::size_t> idx(32);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> ga(p0.actor.num_params(), 0.0), gc(p0.critic.num_params(), 0.0);
    const LossParts l = ppo_loss(p0, b, idx, PpoConfig{}, ga, gc);
    CHECK(l.policy == 0.0);
    for (double g : ga) CHECK(g == 0.0);
    PpoTrainer tr(p0, PpoConfig{}, 1);
    tr.update(b);
    CHECK(tr.policy().actor.params() == p0.actor.params());
    CHECK(tr.policy().critic.params() != p0.critic.params());
  }

  TEST_CASE("global norm clipping") {
    Rng rng(12);
    std::vector<double> g(100);
    for (auto& v : g) v = 10.0 * uniform01(rng);
    const double before = clip_global_norm(g, 0.4284);
    CHECK(before > 0.4284);
    double n = 0;
    for (double v : g) n += v * v;
    CHECK(std::sqrt(n) <= 0.4284 + 1e-6);
  }

  TEST_CASE("non-finite loss aborts and restores the policy") {
    Rng rng(13);
    const Policy p0 = small_policy(rng);
    RolloutBuffer b = toy_buffer(rng, p0, 16, 0.3);
    b.returns[3] = std::numeric_limits<double>::quiet_NaN();
    PpoTrainer tr(p0, PpoConfig{}, 1);
    try {
      tr.update(b);
      FAIL("update accepted a NaN return");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NonFiniteLoss);
    }
    CHECK(tr.policy() == p0);
  }

  TEST_CASE("updates are reproducible with fixed seeds") {
    Rng r1(14), r2(14);
    const Policy a = small_policy(r1), b = small_policy(r2);
    RolloutBuffer ba = toy_buffer(r1, a, 100, 0.2), bb = toy_buffer(r2, b, 100, 0.2);
    PpoTrainer ta(a, PpoConfig{}, 3), tb(b, PpoConfig{}, 3);
    ta.update(ba);
    tb.update(bb);
    CHECK(ta.policy() == tb.policy());
  }

  TEST_CASE("rollout collection lengths and ledger accounting") {
    const Detector d(constant(5.0), 0.5);
    Rng rng(15);
    const Policy p = Policy::make(rng);
    std::vector<ToyBinary> bins;
    for (std::uint64_t i = 0; i < 10; ++i) bins.push_back(gen_binary(Label::Malicious, i, {}));
    {
      CaptureBuffer cap;
      Environment env(d, ingredients(), {}, 1, &cap);
      EpisodeSource src(bins, 2);
      CHECK(collect_rollout(env, src, p, rng, RolloutLimit::steps(0)).size() == 0);
      const auto before = d.ledger();
      const RolloutBuffer b = collect_rollout(env, src, p, rng, RolloutLimit::steps(100));
      CHECK(b.size() == 100);
      // Constant detector: 100 steps span 7 episodes of 15 (resets included).
      CHECK(d.ledger() - before == 100 + 7);
      CHECK(cap.size() == 107);
      CHECK(b.episode_lengths.size() == 6);
    }
    {
      Environment env(d, ingredients(), {}, 1);
      EpisodeSource src(bins, 2);
      const auto before = d.ledger();
      const RolloutBuffer b = collect_rollout(env, src, p, rng, RolloutLimit::queries(64));
      CHECK(d.ledger() - before == 64);
      CHECK(b.queries == 64);
      CHECK(b.size() == 64 - 4);
    }
  }

  TEST_CASE("a source with no detected binaries is exhausted") {
    const Detector d(constant(-5.0), 0.5);
    Rng rng(16);
    const Policy p = Policy::make(rng);
    Environment env(d, ingredients(), {}, 1);
    EpisodeSource src({gen_binary(Label::Malicious, 1, {})}, 1);
    CHECK_THROWS_AS(collect_rollout(env, src, p, rng, RolloutLimit::steps(5)), Error);
    EpisodeSource empty({}, 1);
    CHECK_THROWS_AS(collect_rollout(env, empty, p, rng, RolloutLimit::steps(5)), Error);
  }

  TEST_CASE("policy checkpoints round-trip") {
    Rng rng(17);
    const Policy p = Policy::make(rng);
    const Policy back = decode_policy(encode_policy(p));
    CHECK(back == p);
    const auto dir = testing::temp_dir("policy");
    save_policy((dir / "p.tefm").string(), p);
    CHECK(load_policy((dir / "p.tefm").string()) == p);
    CHECK(stats_csv_header().rfind("update,", 0) == 0);
  }
}
