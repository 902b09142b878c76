#include "tefb/meme.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

#include "tefb/error.hpp"
#include "tefb/kernels.hpp"

namespace tefb {

void check_config(const MemeConfig& cfg) {
  if (cfg.k == 0 || cfg.m == 0) throw Error(Errc::InvalidArgument, "k and m must be > 0");
  if (cfg.query_budget == 0) throw Error(Errc::InvalidArgument, "query_budget must be > 0");
  if (!(cfg.surrogate.alpha > 0.0)) throw Error(Errc::InvalidArgument, "alpha must be > 0");
  check_config(cfg.ppo);
}

AttackData prepare_attack(const Corpus& corpus, std::size_t seed_index) {
  const auto& sp = corpus.splits();
  AttackData d;
  d.ingredients = extract_ingredients(corpus.binaries(sp.ingredients));
  d.aux = corpus_features(corpus, sp.aux);
  d.aux_calib = corpus_features(corpus, sp.aux_calib);
  d.eval = corpus_features(corpus, sp.eval);
  select_attack_split(d, corpus, seed_index);
  return d;
}

void select_attack_split(AttackData& data, const Corpus& corpus, std::size_t seed_index) {
  const auto& splits = corpus.splits().attack_splits;
  if (splits.empty()) throw Error(Errc::MissingArtifacts, "corpus has no attack splits");
  const AttackSplit& s = splits[seed_index % splits.size()];
  data.train = corpus.binaries(s.train);
  data.test = corpus.binaries(s.test);
}

Detector train_surrogate(const FeatureMatrix& d_sur, const FeatureMatrix& d_aux, const SurrogateConfig& cfg,
                         const FeatureMatrix* aux_calib) {
  FeatureMatrix X;
  std::vector<double> w;
  if (cfg.dedup) {
    std::set<std::pair<std::vector<float>, std::uint8_t>> seen;
    for (std::size_t i = 0; i < d_sur.rows; ++i) {
      auto r = d_sur.row(i);
      if (!seen.insert({std::vector<float>(r.begin(), r.end()), d_sur.labels[i]}).second) continue;
      X.data.insert(X.data.end(), r.begin(), r.end());
      X.labels.push_back(d_sur.labels[i]);
      ++X.rows;
    }
  } else {
    X = d_sur;
  }
  w.assign(X.rows, cfg.alpha);
  X.append(d_aux);
  w.resize(X.rows, 1.0);

  const bool has0 = std::find(X.labels.begin(), X.labels.end(), 0) != X.labels.end();
  const bool has1 = std::find(X.labels.begin(), X.labels.end(), 1) != X.labels.end();
  if (!has0 || !has1) throw Error(Errc::SurrogateDegenerate, "surrogate training data has a single class");

  Model model = train_gbdt(X, w, cfg.gbdt);
  double thr = 0.5;
  if (aux_calib && aux_calib->rows > 0) thr = calibrate_threshold(model, *aux_calib, cfg.fpr);
  return Detector(std::move(model), thr);
}

ActionChooser policy_chooser(const Policy& p, bool greedy) {
  return [&p, greedy](std::span<const float> obs, Rng& rng) { return sample_action(p, obs, rng, greedy).action; };
}

ActionChooser random_chooser() { return [](std::span<const float> obs, Rng& rng) { return random_policy(obs, rng); }; }

std::vector<EpisodeOutcome> evaluate(const Detector& detector, const BenignIngredients& ing,
                                     const std::vector<ToyBinary>& binaries, const ActionChooser& choose,
                                     const EnvConfig& env_cfg, std::uint64_t seed, EpisodeLog* log) {
  Environment env(detector, ing, env_cfg, derive_seed(seed, {0}), nullptr, log);
  Rng rng(derive_seed(seed, {1}));
  std::vector<EpisodeOutcome> out;
  out.reserve(binaries.size());
  for (const auto& b : binaries) {
    EpisodeOutcome o;
    o.initially_detected = env.reset(b).initially_detected;
    while (env.active()) env.step(choose(env.observation(), rng));
    if (o.initially_detected) {
      o.evaded = env.evaded();
      o.modifications = env.turn();
    }
    out.push_back(o);
  }
  return out;
}

namespace {

std::size_t max_queries(const std::vector<EpisodeOutcome>& outcomes) {
  std::size_t mx = 0;
  for (const auto& o : outcomes) mx = std::max(mx, o.modifications + 1);
  return mx;
}

struct Streams {
  std::uint64_t policy_init, trainer, target_env, target_source, eval;
  std::uint64_t sur_env(std::size_t i) const { return derive_seed(root, {5, i}); }
  std::uint64_t sur_source(std::size_t i) const { return derive_seed(root, {6, i}); }
  std::uint64_t sur_gbdt(std::size_t i) const { return derive_seed(root, {7, i}); }
  std::uint64_t root;
};

Streams streams(std::uint64_t seed) {
  return {derive_seed(seed, {1}), derive_seed(seed, {2}), derive_seed(seed, {3}), derive_seed(seed, {4}),
          derive_seed(seed, {8}), seed};
}

void finish_eval(AttackResult& r, const MemeConfig& cfg, const Detector& target, const AttackData& data,
                 const ActionChooser& choose, std::uint64_t eval_seed, EpisodeLog* log) {
  const std::uint64_t before = target.ledger();
  r.outcomes = evaluate(target, data.ingredients, data.test, choose, cfg.env, eval_seed, log);
  r.eval_queries = target.ledger() - before;
  r.evasion = evasion_rate(r.outcomes, cfg.env.max_turns);
  r.max_episode_queries = std::max(r.max_episode_queries, max_queries(r.outcomes));
}

}  // namespace

AttackResult run_meme(const MemeConfig& cfg, const Detector& target, const AttackData& data, EpisodeLog* log) {
  check_config(cfg);
  if (cfg.k * cfg.n > cfg.query_budget) throw Error(Errc::BudgetExceeded, "k*n exceeds the query budget");
  const Streams st = streams(cfg.seed);

  AttackResult r;
  r.method = "meme";
  r.seed = cfg.seed;

  CaptureBuffer capture;
  Environment tenv(target, data.ingredients, cfg.env, st.target_env, &capture);
  EpisodeSource tsrc(data.train, st.target_source);
  Rng init(st.policy_init);
  PpoTrainer trainer(Policy::make(init), cfg.ppo, st.trainer);

  const std::uint64_t start = target.ledger();
  auto spend = [&](std::size_t q) {
    if (target.ledger() - start + q > cfg.query_budget) throw Error(Errc::BudgetExceeded, "target query budget");
  };

  if (cfg.n > 0) {
    spend(cfg.n);
    auto rows = train_phase(trainer, tenv, tsrc, RolloutLimit::queries(cfg.n));
    r.stats.insert(r.stats.end(), rows.begin(), rows.end());
  }
  for (std::size_t i = 1; i <= cfg.k; ++i) {
    SurrogateConfig sc = cfg.surrogate;
    sc.gbdt.seed = st.sur_gbdt(i);
    Detector sur = train_surrogate(capture.snapshot(), data.aux, sc, &data.aux_calib);
    spdlog::info("meme seed {} round {}: surrogate on {} captured rows, threshold {:.6f}", cfg.seed, i,
                 capture.size(), sur.threshold());
    {
      Environment senv(sur, data.ingredients, cfg.env, st.sur_env(i));
      EpisodeSource ssrc(data.train, st.sur_source(i));
      auto rows = train_phase(trainer, senv, ssrc, RolloutLimit::steps(cfg.m), r.stats.size());
      r.stats.insert(r.stats.end(), rows.begin(), rows.end());
    }
    r.surrogates.push_back(std::move(sur));
    if (i < cfg.k && cfg.n > 0) {
      spend(cfg.n);
      collect_rollout(tenv, tsrc, trainer.policy(), trainer.rng(), RolloutLimit::queries(cfg.n));
    }
  }
  r.training_queries = target.ledger() - start;
  if (r.training_queries > cfg.query_budget) throw Error(Errc::BudgetExceeded, "target query budget");
  r.d_sur = capture.snapshot();
  if (r.d_sur.rows != r.training_queries) {
    throw Error(Errc::InvariantViolation, "captured rows differ from training queries");
  }
  r.max_episode_queries = tenv.max_episode_queries();
  r.policy = trainer.policy();

  finish_eval(r, cfg, target, data, policy_chooser(*r.policy), st.eval, log);
  r.agreement = agreement(target, r.surrogates.back(), data.eval, cfg.feature_sample, cfg.seed);
  return r;
}

AttackResult run_ppo_baseline(const MemeConfig& cfg, const Detector& target, const AttackData& data,
                              EpisodeLog* log) {
  check_config(cfg);
  const Streams st = streams(cfg.seed);
  AttackResult r;
  r.method = "ppo";
  r.seed = cfg.seed;

  Environment tenv(target, data.ingredients, cfg.env, st.target_env);
  EpisodeSource tsrc(data.train, st.target_source);
  Rng init(st.policy_init);
  PpoTrainer trainer(Policy::make(init), cfg.ppo, st.trainer);
  const std::uint64_t start = target.ledger();
  r.stats = train_phase(trainer, tenv, tsrc, RolloutLimit::queries(cfg.query_budget));
  r.training_queries = target.ledger() - start;
  r.max_episode_queries = tenv.max_episode_queries();
  r.policy = trainer.policy();

  finish_eval(r, cfg, target, data, policy_chooser(*r.policy), st.eval, log);
  return r;
}

AttackResult run_random_baseline(const MemeConfig& cfg, const Detector& target, const AttackData& data,
                                 EpisodeLog* log) {
  const Streams st = streams(cfg.seed);
  AttackResult r;
  r.method = "random";
  r.seed = cfg.seed;
  finish_eval(r, cfg, target, data, random_chooser(), st.eval, log);
  return r;
}

}  // namespace tefb
