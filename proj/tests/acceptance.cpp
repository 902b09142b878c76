// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Usage: tefb_acceptance <path-to-tefb-binary>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "tefb/cli.hpp"
#include "tefb/error.hpp"
#include "tefb/kernels.hpp"
#include "tefb/log.hpp"
#include "tefb/model_io.hpp"

using namespace tefb;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances.
constexpr std::size_t kFuzzTrials = 10000;
constexpr double kFuzzSeconds = 120.0;
constexpr double kGradRelTol = 1e-3;
constexpr double kGaeTol = 1e-12;
constexpr double kShapTol = 1e-9;
constexpr double kFprTol = 0.005;
constexpr std::size_t kFreshBenign = 2000;
constexpr std::uint64_t kLedgerExpected = 2048;
constexpr std::size_t kMaxEpisodeQueries = 16;
constexpr double kAgreementMin = 0.95;
constexpr double kMemeOverPpo = 0.02;
constexpr std::size_t kMaxMods = 15;
const std::vector<std::uint64_t> kSeeds = {0, 1, 2, 3, 4};

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// ---- oracles ----

std::vector<double> gae_forward(const std::vector<double>& r, const std::vector<double>& v,
                                const std::vector<std::uint8_t>& d, double gamma, double lambda, double last) {
  const std::size_t n = r.size();
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next = k + 1 < n ? v[k + 1] : last;
      a[t] += w * (r[k] + gamma * next * (d[k] ? 0.0 : 1.0) - v[k]);
      if (d[k]) break;
      w *= gamma * lambda;
    }
  }
  return a;
}

double cond_expectation(const RegressionTree& t, std::size_t node, std::span<const float> x, const std::set<int>& S) {
  const TreeNode& n = t.nodes[node];
  if (n.is_leaf()) return n.value;
  if (S.count(n.feature)) return cond_expectation(t, double(x[n.feature]) < n.threshold ? n.left : n.right, x, S);
  const double cl = t.nodes[n.left].cover, cr = t.nodes[n.right].cover;
  return (cl * cond_expectation(t, n.left, x, S) + cr * cond_expectation(t, n.right, x, S)) / (cl + cr);
}

Attribution enumerate_shapley(const GbdtModel& m, std::span<const float> x) {
  std::set<int> used;
  for (const auto& t : m.trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) used.insert(n.feature);
  const std::vector<int> F(used.begin(), used.end());
  const std::size_t d = F.size();
  auto value = [&](const std::set<int>& S) {
    double s = 0.0;
    for (const auto& t : m.trees) s += cond_expectation(t, 0, x, S);
    return m.base_score + m.shrinkage * s;
  };
  std::vector<double> fact(d + 1, 1.0);
  for (std::size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * double(i);
  Attribution phi{};
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t mask = 0; mask < (1u << d); ++mask) {
      if (mask & (1u << i)) continue;
      std::set<int> S;
      for (std::size_t j = 0; j < d; ++j)
        if (mask & (1u << j)) S.insert(F[j]);
      std::set<int> Si = S;
      Si.insert(F[i]);
      phi[F[i]] += fact[S.size()] * fact[d - S.size() - 1] / fact[d] * (value(Si) - value(S));
    }
  }
  return phi;
}

FeatureVector random_features(Rng& rng) {
  FeatureVector v{};
  for (auto& f : v) f = static_cast<float>(uniform01(rng));
  return v;
}

// ---- criteria ----

void criterion_format(const BenignIngredients& ing) {
  const auto t0 = Clock::now();
  const CorpusConfig cfg;
  Rng rng(derive_seed(0xacce, {1}));
  std::size_t roundtrip = 0, valid = 0, digest = 0, steps = 0;
  for (std::size_t trial = 0; trial < kFuzzTrials; ++trial) {
    const Label l = trial % 2 ? Label::Malicious : Label::Benign;
    const ToyBinary b0 = gen_binary(l, derive_seed(0xf022, {trial}), cfg);
    const FunctionalDigest d0 = functional_digest(b0);
    const std::size_t len = 1 + std::uniform_int_distribution<std::size_t>(0, 14)(rng);
    ToyBinary b = b0;
    bool rt = true, ok = true, dg = true;
    for (std::size_t s = 0; s < len; ++s) {
      b = apply_action(b, action_from_index(std::uniform_int_distribution<std::size_t>(0, kNumActions - 1)(rng)), ing,
                       rng);
      ++steps;
      try {
        rt = rt && parse(serialize(b)) == b;
      } catch (const Error&) {
        rt = false;
      }
      ok = ok && validate(b).valid();
      dg = dg && functional_digest(b) == d0;
    }
    roundtrip += rt;
    valid += ok;
    digest += dg;
  }
  const double secs = seconds_since(t0);
  const bool pass = roundtrip == kFuzzTrials && valid == kFuzzTrials && digest == kFuzzTrials && secs < kFuzzSeconds;
  report(1, pass,
         "round-trip " + std::to_string(roundtrip) + "/" + std::to_string(kFuzzTrials) + ", valid " +
             std::to_string(valid) + ", digest " + std::to_string(digest) + ", " + std::to_string(steps) +
             " actions in " + fmt("%.1f", secs) + " s");
}

void criterion_gradients() {
  Rng rng(derive_seed(0xacce, {2}));
  double worst_ffnn = 0.0, worst_ppo = 0.0, worst_gae = 0.0;
  for (int c = 0; c < 20; ++c) {
    FfnnConfig fc;
    fc.hidden = 3 + c % 6;
    fc.activation = c % 2 ? Activation::Relu : Activation::Tanh;
    fc.seed = 100 + c;
    FfnnModel m = init_ffnn(fc);
    FeatureMatrix X;
    const std::size_t rows_n = 2 + c % 7;
    for (std::size_t i = 0; i < rows_n; ++i) X.push_back(random_features(rng), std::uint8_t(i % 2));
    std::vector<std::size_t> rows(rows_n);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> g(m.net.num_params(), 0.0);
    net_logistic_loss_grad(m.net, X, rows, g);
    auto& p = m.net.params();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double h = 1e-6, keep = p[k];
      p[k] = keep + h;
      const double up = net_logistic_loss(m.net, X);
      p[k] = keep - h;
      const double dn = net_logistic_loss(m.net, X);
      p[k] = keep;
      worst_ffnn = std::max(worst_ffnn, rel_err(g[k], (up - dn) / (2 * h)));
    }

    Policy pol;
    const std::size_t hid = 3 + c % 5;
    pol.actor = Mlp({kFeatureDim, hid, hid, kNumActions}, Activation::Tanh);
    pol.critic = Mlp({kFeatureDim, hid, hid, 1}, Activation::Tanh);
    pol.actor.init(rng, 1.0, 1.0);
    pol.critic.init(rng, 1.0, 1.0);
    RolloutBuffer buf;
    for (int i = 0; i < 8; ++i) {
      const FeatureVector obs = random_features(rng);
      const auto s = sample_action(pol, obs, rng);
      buf.push(obs, s.action, uniform01(rng) < 0.3 ? 10.0 : 0.0, uniform01(rng) < 0.25,
               s.log_prob + 0.8 * (uniform01(rng) - 0.5), s.value);
    }
    buf.finish(0.854, 0.95, 0.0);
    PpoConfig pc;
    pc.entropy_coef = c % 3 == 0 ? 0.01 : 0.0;
    std::vector<std::size_t> idx(8);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> ga(pol.actor.num_params(), 0.0), gc(pol.critic.num_params(), 0.0);
    ppo_loss(pol, buf, idx, pc, ga, gc);
    auto fd = [&](std::vector<double>& params, const std::vector<double>& grad) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        const double h = 1e-6, keep = params[k];
        params[k] = keep + h;
        const double up = ppo_loss(pol, buf, idx, pc).total;
        params[k] = keep - h;
        const double dn = ppo_loss(pol, buf, idx, pc).total;
        params[k] = keep;
        worst_ppo = std::max(worst_ppo, rel_err(grad[k], (up - dn) / (2 * h)));
      }
    };
    fd(pol.actor.params(), ga);
    fd(pol.critic.params(), gc);
  }
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + t % 64;
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = uniform01(rng) < 0.2 ? 10.0 : 0.0;
      v[i] = 10.0 * uniform01(rng) - 5.0;
      d[i] = uniform01(rng) < 0.1;
    }
    const double gamma = uniform01(rng), lambda = uniform01(rng), last = 5.0 * uniform01(rng);
    const auto a = gae(r, v, d, gamma, lambda, last);
    const auto o = gae_forward(r, v, d, gamma, lambda, last);
    for (std::size_t i = 0; i < n; ++i) worst_gae = std::max(worst_gae, std::abs(a[i] - o[i]));
  }
  report(2, worst_ffnn < kGradRelTol && worst_ppo < kGradRelTol && worst_gae <= kGaeTol,
         "ffnn max rel err " + fmt("%.2e", worst_ffnn) + ", ppo max rel err " + fmt("%.2e", worst_ppo) +
             ", gae max abs err " + fmt("%.2e", worst_gae));
}

void criterion_shap(const GbdtModel& target, const FeatureMatrix& eval) {
  double worst_local = 0.0;
  const std::size_t n = std::min<std::size_t>(1000, eval.rows);
  FeatureMatrix sample;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector v;
    std::copy(eval.row(i).begin(), eval.row(i).end(), v.begin());
    sample.push_back(v, eval.labels[i]);
  }
  const auto phis = tree_shap_batch(target, sample);
  const double base = expected_margin(target);
  for (std::size_t i = 0; i < n; ++i) {
    double s = base;
    for (std::size_t f = 0; f < kFeatureDim; ++f) s += phis[i][f];
    worst_local = std::max(worst_local, std::abs(s - target.margin(sample.row(i))));
  }

  Rng rng(derive_seed(0xacce, {3}));
  double worst_enum = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + trial % 4;
    std::vector<std::size_t> live;
    while (live.size() < d) {
      const std::size_t f = std::uniform_int_distribution<std::size_t>(0, kFeatureDim - 1)(rng);
      if (std::find(live.begin(), live.end(), f) == live.end()) live.push_back(f);
    }
    FeatureMatrix X;
    for (int i = 0; i < 400; ++i) {
      FeatureVector v{};
      double z = 0.0;
      for (std::size_t f : live) {
        v[f] = static_cast<float>(uniform01(rng));
        z += (v[f] - 0.5) * (f % 2 ? 3.0 : -4.0);
      }
      X.push_back(v, uniform01(rng) < 1.0 / (1.0 + std::exp(-z)));
    }
    GbdtConfig gc;
    gc.num_boosting_rounds = 10;
    gc.num_leaves = 10;
    gc.max_depth = 4;
    gc.min_child_samples = 5;
    gc.seed = trial;
    const GbdtModel m = train_gbdt(X, {}, gc);
    for (std::size_t i = 0; i < 25; ++i) {
      const Attribution a = tree_shap(m, X.row(i));
      const Attribution b = enumerate_shapley(m, X.row(i));
      for (std::size_t f = 0; f < kFeatureDim; ++f) worst_enum = std::max(worst_enum, std::abs(a[f] - b[f]));
      ++checked;
    }
  }
  report(3, worst_local <= kShapTol && worst_enum <= kShapTol,
         "local accuracy max err " + fmt("%.2e", worst_local) + " on " + std::to_string(n) +
             " samples, enumeration max err " + fmt("%.2e", worst_enum) + " on " + std::to_string(checked) +
             " samples with d <= 4");
}

void criterion_fpr(const CorpusConfig& cfg, const std::vector<std::pair<std::string, fs::path>>& models,
                   double fpr_target) {
  std::vector<ToyBinary> fresh;
  for (const auto& e : plan_split(cfg, "fresh", kFreshBenign, 0)) fresh.push_back(materialize(e, cfg));
  const FeatureMatrix X = extract_features_batch(fresh, std::vector<std::uint8_t>(fresh.size(), 0));
  bool ok = true;
  double worst = 0.0;
  std::string detail;
  for (const auto& [name, path] : models) {
    const Detector d = load_detector(path.string());
    std::size_t fp = 0;
    for (std::size_t i = 0; i < X.rows; ++i) fp += d.label_unmetered(X.row(i));
    const double fpr = double(fp) / double(X.rows);
    const double dev = std::abs(fpr - fpr_target);
    worst = std::max(worst, dev);
    if (dev > kFprTol) {
      ok = false;
      detail += " " + name + "=" + fmt("%.4f", fpr);
    }
  }
  report(4, ok,
         std::to_string(models.size()) + " detectors on " + std::to_string(X.rows) +
             " fresh benign, worst |fpr - " + fmt("%.3f", fpr_target) + "| = " + fmt("%.4f", worst) +
             (detail.empty() ? "" : ", out of tolerance:" + detail));
}

void criterion_budget(const fs::path& corpus_dir, const fs::path& model) {
  const Detector target = load_detector(model.string());
  const Corpus corpus = Corpus::load(corpus_dir);
  const AttackData data = prepare_attack(corpus, 0);
  MemeConfig cfg;
  cfg.seed = 0;
  const std::uint64_t before = target.ledger();
  const AttackResult r = run_meme(cfg, target, data);
  const std::uint64_t total = target.ledger() - before;
  const bool ok = r.training_queries == kLedgerExpected && r.d_sur.rows == kLedgerExpected &&
                  total == r.training_queries + r.eval_queries && r.eval_queries > 0 &&
                  r.evasion.n_tested == data.test.size() && r.max_episode_queries <= kMaxEpisodeQueries;
  report(5, ok,
         "training ledger " + std::to_string(r.training_queries) + ", captured rows " + std::to_string(r.d_sur.rows) +
             ", evaluation queries " + std::to_string(r.eval_queries) + " on " + std::to_string(r.evasion.n_tested) +
             " test binaries counted separately, max queries per episode " +
             std::to_string(r.max_episode_queries));
}

struct EpisodeCheck {
  bool ok = true;
  std::size_t episodes = 0;
  std::size_t max_turn = 0;
  std::string detail;
};

void check_episodes(const fs::path& seed_dir, EpisodeCheck& ec) {
  const auto rep = nlohmann::json::parse(slurp(seed_dir / "report.json"));
  std::map<std::uint64_t, std::pair<std::size_t, int>> eps;  // id -> (last turn, last label)
  std::istringstream in(slurp(seed_dir / "episodes.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    auto& e = eps[j["episode_id"].get<std::uint64_t>()];
    e.first = std::max(e.first, j["turn"].get<std::size_t>());
    if (j["done"].get<bool>()) e.second = j["label"].get<int>();
  }
  double mods = 0.0;
  for (const auto& [id, e] : eps) {
    ec.max_turn = std::max(ec.max_turn, e.first);
    mods += e.second == 0 ? double(e.first) : double(kMaxMods);
  }
  ec.episodes += eps.size();
  const auto& ev = rep.contains("evasion") ? rep["evasion"] : rep;
  const std::size_t detected = ev["n_detected"].get<std::size_t>();
  const double mean = eps.empty() ? 0.0 : mods / double(eps.size());
  if (eps.size() != detected || std::abs(mean - ev["mean_modifications"].get<double>()) > 1e-9 ||
      ec.max_turn > kMaxMods) {
    ec.ok = false;
    ec.detail += " " + seed_dir.string();
  }
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <tefb-binary>\n", argv[0]);
    return 2;
  }
  const fs::path cli = fs::absolute(argv[1]);
  const fs::path root = fs::temp_directory_path() / "tefb_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto t_all = Clock::now();

  try {
    RunConfig rc;
    rc.out = root / "corpus";
    cmd_gen_corpus(rc);
    rc.corpus_dir = root / "corpus";

    std::vector<std::pair<std::string, fs::path>> detectors;
    fs::path gbdt_model;
    for (const char* kind : {"gbdt", "linear", "ffnn"}) {
      RunConfig tc = rc;
      tc.target = kind;
      tc.out = root / "targets";
      const fs::path p = cmd_train_target(tc);
      detectors.emplace_back(std::string("target_") + kind, p);
      if (std::string(kind) == "gbdt") gbdt_model = p;
    }
    std::printf("setup: corpus and targets ready in %.1f s\n", seconds_since(t_all));

    const Corpus corpus = Corpus::load(rc.corpus_dir);
    const BenignIngredients ing = extract_ingredients(corpus.binaries(corpus.splits().ingredients));
    criterion_format(ing);
    criterion_gradients();
    const Detector target = load_detector(gbdt_model.string());
    criterion_shap(std::get<GbdtModel>(target.model()), corpus_features(corpus, corpus.splits().eval));

    // Full three-method comparison on the GBDT target.
    const auto t_cmp = Clock::now();
    std::map<std::string, double> evasion;
    EpisodeCheck ec;
    std::vector<double> agreements;
    for (const char* mode : {"random", "ppo", "meme"}) {
      RunConfig ac = rc;
      ac.model_path = gbdt_model;
      ac.out = root / "runs";
      ac.mode = mode;
      ac.seeds = kSeeds;
      cmd_attack(ac);
      const auto agg = nlohmann::json::parse(slurp(ac.out / mode / "aggregate.json"));
      evasion[mode] = agg["aggregate"]["evasion_mean"].get<double>();
      for (std::uint64_t s : kSeeds) {
        const fs::path sd = ac.out / mode / ("seed" + std::to_string(s));
        check_episodes(sd, ec);
        if (std::string(mode) == "meme") {
          const auto rep = nlohmann::json::parse(slurp(sd / "report.json"));
          agreements.push_back(rep["agreement"]["label_agreement"].get<double>());
          for (std::size_t i = 1; fs::exists(sd / ("surrogate_round" + std::to_string(i) + ".tefm")); ++i) {
            detectors.emplace_back("surrogate_seed" + std::to_string(s) + "_round" + std::to_string(i),
                                   sd / ("surrogate_round" + std::to_string(i) + ".tefm"));
          }
        }
      }
    }
    const double cmp_secs = seconds_since(t_cmp);

    criterion_fpr(corpus.config(), detectors, rc.fpr);
    criterion_budget(rc.corpus_dir, gbdt_model);

    const double agree = std::accumulate(agreements.begin(), agreements.end(), 0.0) / double(agreements.size());
    report(6, agreements.size() == kSeeds.size() && agree >= kAgreementMin,
           "mean label agreement " + fmt("%.4f", agree) + " over " + std::to_string(agreements.size()) + " seeds");

    const double em = evasion["meme"], ep = evasion["ppo"], er = evasion["random"];
    report(7, em > ep && ep > er && em - ep >= kMemeOverPpo,
           "mean evasion meme " + fmt("%.4f", em) + ", ppo " + fmt("%.4f", ep) + ", random " + fmt("%.4f", er) +
               ", meme - ppo " + fmt("%+.4f", em - ep) + ", comparison took " + fmt("%.0f", cmp_secs) + " s");

    report(8, ec.ok && ec.max_turn <= kMaxMods,
           std::to_string(ec.episodes) + " logged episodes, max modifications " + std::to_string(ec.max_turn) +
               ", reported means consistent with logs" + (ec.detail.empty() ? "" : ", mismatched:" + ec.detail));

    bool same = true;
    std::string files;
    for (int run = 0; run < 2; ++run) {
      const fs::path out = root / ("det" + std::to_string(run));
      const std::string cmd = "\"" + cli.string() + "\" attack --corpus \"" + rc.corpus_dir.string() + "\" --model \"" +
                              gbdt_model.string() + "\" --mode meme --seed 0 --out \"" + out.string() + "\"";
      if (std::system(cmd.c_str()) != 0) same = false;
    }
    for (const char* f : {"meme/seed0/report.json", "meme/seed0/report.csv", "meme/aggregate.json",
                          "meme/aggregate.csv", "meme/seed0/episodes.jsonl"}) {
      const fs::path a = root / "det0" / f, b = root / "det1" / f;
      const bool eq = fs::exists(a) && fs::exists(b) && slurp(a) == slurp(b);
      same = same && eq;
      files += std::string(" ") + f + (eq ? "" : "(differs)");
    }
    report(9, same, "two CLI invocations compared byte for byte:" + files);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }

  std::printf("acceptance: %d failing criteria, total %.0f s\n", failures, seconds_since(t_all));
  return failures == 0 ? 0 : 1;
}
