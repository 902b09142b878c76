#include "tefb/cli.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tefb/error.hpp"
#include "tefb/kernels.hpp"
#include "tefb/model_io.hpp"

namespace tefb {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

#define TEFB_GBDT_FIELDS(X) \
  X(num_boosting_rounds) X(learning_rate) X(num_leaves) X(max_depth) X(min_child_samples) X(feature_fraction) \
  X(min_sum_hessian) X(lambda_l2) X(seed)
#define TEFB_LINEAR_FIELDS(X) X(epochs) X(batch_size) X(learning_rate) X(momentum) X(seed)
#define TEFB_FFNN_FIELDS(X) X(hidden) X(epochs) X(batch_size) X(learning_rate) X(momentum) X(seed)
#define TEFB_PPO_FIELDS(X)                                                                                \
  X(gamma) X(learning_rate) X(max_grad_norm) X(clip_epsilon) X(gae_lambda) X(epochs_per_update) X(minibatch) \
  X(value_coef) X(entropy_coef) X(rollout_horizon)
#define TEFB_MEME_FIELDS(X) X(n) X(k) X(m) X(query_budget) X(feature_sample)

#define TEFB_TO(f) j[#f] = v.f;
#define TEFB_FROM(f) \
  if (j.contains(#f)) j.at(#f).get_to(v.f);
#define TEFB_KEY(f) #f,

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::InvalidArgument, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw Error(Errc::InvalidArgument, "unknown config key: " + where + it.key());
  }
}

json to_json(const GbdtConfig& v) {
  json j;
  TEFB_GBDT_FIELDS(TEFB_TO)
  return j;
}
void from_json(const json& j, GbdtConfig& v, const std::string& where) {
  reject_unknown(j, {TEFB_GBDT_FIELDS(TEFB_KEY)}, where);
  TEFB_GBDT_FIELDS(TEFB_FROM)
}

json to_json(const LinearConfig& v) {
  json j;
  TEFB_LINEAR_FIELDS(TEFB_TO)
  return j;
}
void from_json(const json& j, LinearConfig& v, const std::string& where) {
  reject_unknown(j, {TEFB_LINEAR_FIELDS(TEFB_KEY)}, where);
  TEFB_LINEAR_FIELDS(TEFB_FROM)
}

json to_json(const FfnnConfig& v) {
  json j;
  TEFB_FFNN_FIELDS(TEFB_TO)
  j["activation"] = v.activation == Activation::Tanh ? "tanh" : "relu";
  return j;
}
void from_json(const json& j, FfnnConfig& v, const std::string& where) {
  reject_unknown(j, {TEFB_FFNN_FIELDS(TEFB_KEY) "activation"}, where);
  TEFB_FFNN_FIELDS(TEFB_FROM)
  if (j.contains("activation")) {
    const auto a = j.at("activation").get<std::string>();
    if (a == "tanh") {
      v.activation = Activation::Tanh;
    } else if (a == "relu") {
      v.activation = Activation::Relu;
    } else {
      throw Error(Errc::InvalidArgument, "activation must be tanh or relu");
    }
  }
}

json to_json(const PpoConfig& v) {
  json j;
  TEFB_PPO_FIELDS(TEFB_TO)
  return j;
}
void from_json(const json& j, PpoConfig& v, const std::string& where) {
  reject_unknown(j, {TEFB_PPO_FIELDS(TEFB_KEY)}, where);
  TEFB_PPO_FIELDS(TEFB_FROM)
}

json to_json(const MemeConfig& v) {
  json j;
  TEFB_MEME_FIELDS(TEFB_TO)
  return j;
}
void from_json(const json& j, MemeConfig& v, const std::string& where) {
  reject_unknown(j, {TEFB_MEME_FIELDS(TEFB_KEY)}, where);
  TEFB_MEME_FIELDS(TEFB_FROM)
}

json surrogate_json(const SurrogateConfig& s) {
  return json{{"alpha", s.alpha}, {"dedup", s.dedup}, {"gbdt", to_json(s.gbdt)}};
}
void surrogate_from_json(const json& j, SurrogateConfig& s) {
  reject_unknown(j, {"alpha", "dedup", "gbdt"}, "surrogate.");
  if (j.contains("alpha")) j.at("alpha").get_to(s.alpha);
  if (j.contains("dedup")) j.at("dedup").get_to(s.dedup);
  if (j.contains("gbdt")) from_json(j.at("gbdt"), s.gbdt, "surrogate.gbdt.");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(Errc::IoFailure, "cannot write " + p.string());
  f << text;
  if (!f) throw Error(Errc::IoFailure, "write failed: " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(Errc::IoFailure, "cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void snapshot(const RunConfig& cfg, const std::string& command, const fs::path& dir) {
  fs::create_directories(dir);
  json j;
  j["command"] = command;
  j["config"] = json::parse(run_config_to_json(cfg));
  write_text(dir / "run_config.json", j.dump(2) + "\n");
}

Model train_model(const RunConfig& cfg, const FeatureMatrix& X) {
  if (cfg.target == "gbdt") return train_gbdt(X, {}, cfg.target_gbdt);
  if (cfg.target == "linear") return train_linear(X, cfg.linear);
  if (cfg.target == "ffnn") return train_ffnn(X, cfg.ffnn);
  throw Error(Errc::InvalidArgument, "unknown target kind: " + cfg.target);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seeds"] = cfg.seeds;
  j["wall_clock"] = cfg.wall_clock_s ? json(*cfg.wall_clock_s) : json(nullptr);
  j["mode"] = cfg.mode;
  j["target"] = cfg.target;
  j["fpr"] = cfg.fpr;
  j["max_turns"] = cfg.meme.env.max_turns;
  j["corpus_dir"] = cfg.corpus_dir.string();
  j["model"] = cfg.model_path.string();
  j["corpus"] = json::parse(config_to_json(cfg.corpus));
  j["target_gbdt"] = to_json(cfg.target_gbdt);
  j["linear"] = to_json(cfg.linear);
  j["ffnn"] = to_json(cfg.ffnn);
  j["meme"] = to_json(cfg.meme);
  j["surrogate"] = surrogate_json(cfg.meme.surrogate);
  j["ppo"] = to_json(cfg.meme.ppo);
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text, RunConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"seeds", "wall_clock", "mode", "target", "fpr", "max_turns", "corpus_dir", "model", "corpus",
                     "target_gbdt", "linear", "ffnn", "meme", "surrogate", "ppo"},
                 "");
  RunConfig c = std::move(base);
  try {
    if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
    if (j.contains("wall_clock") && !j.at("wall_clock").is_null()) c.wall_clock_s = j.at("wall_clock").get<double>();
    if (j.contains("mode")) j.at("mode").get_to(c.mode);
    if (j.contains("target")) j.at("target").get_to(c.target);
    if (j.contains("fpr")) j.at("fpr").get_to(c.fpr);
    if (j.contains("max_turns")) j.at("max_turns").get_to(c.meme.env.max_turns);
    if (j.contains("corpus_dir")) c.corpus_dir = j.at("corpus_dir").get<std::string>();
    if (j.contains("model")) c.model_path = j.at("model").get<std::string>();
    if (j.contains("corpus")) {
      json merged = json::parse(config_to_json(c.corpus));
      reject_unknown(j.at("corpus"), [&] {
        std::set<std::string> k;
        for (auto it = merged.begin(); it != merged.end(); ++it) k.insert(it.key());
        return k;
      }(), "corpus.");
      merged.update(j.at("corpus"));
      c.corpus = config_from_json(merged.dump());
    }
    if (j.contains("target_gbdt")) from_json(j.at("target_gbdt"), c.target_gbdt, "target_gbdt.");
    if (j.contains("linear")) from_json(j.at("linear"), c.linear, "linear.");
    if (j.contains("ffnn")) from_json(j.at("ffnn"), c.ffnn, "ffnn.");
    if (j.contains("meme")) from_json(j.at("meme"), c.meme, "meme.");
    if (j.contains("surrogate")) surrogate_from_json(j.at("surrogate"), c.meme.surrogate);
    if (j.contains("ppo")) from_json(j.at("ppo"), c.meme.ppo, "ppo.");
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  c.meme.surrogate.fpr = c.fpr;
  return c;
}

fs::path cmd_gen_corpus(const RunConfig& cfg) {
  build_corpus(cfg.corpus, cfg.out);
  snapshot(cfg, "gen-corpus", cfg.out);
  return cfg.out / "manifest.jsonl";
}

fs::path cmd_train_target(const RunConfig& cfg) {
  const Corpus corpus = Corpus::load(cfg.corpus_dir);
  const auto& sp = corpus.splits();
  const FeatureMatrix X = corpus_features(corpus, sp.target_train);
  const bool has0 = std::count(X.labels.begin(), X.labels.end(), 0) > 0;
  const bool has1 = std::count(X.labels.begin(), X.labels.end(), 1) > 0;
  if (!has0 || !has1) throw Error(Errc::DegenerateLabels, "target training split has a single class");

  Model model = train_model(cfg, X);
  const FeatureMatrix calib = corpus_features(corpus, sp.target_calib);
  const double thr = calibrate_threshold(model, calib, cfg.fpr);
  Detector det(std::move(model), thr);

  const FeatureMatrix eval = corpus_features(corpus, sp.eval);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < eval.rows; ++i) correct += det.label_unmetered(eval.row(i)) == eval.labels[i];

  fs::create_directories(cfg.out);
  const fs::path model_path = cfg.out / ("target_" + cfg.target + ".tefm");
  save_detector(model_path.string(), det);
  json rep;
  rep["target"] = cfg.target;
  rep["threshold"] = thr;
  rep["fpr_target"] = cfg.fpr;
  rep["calibration_fpr"] = empirical_fpr(det.model(), calib, thr);
  rep["eval_accuracy"] = eval.rows ? static_cast<double>(correct) / static_cast<double>(eval.rows) : 0.0;
  rep["train_rows"] = X.rows;
  write_text(cfg.out / ("target_" + cfg.target + "_report.json"), rep.dump(2) + "\n");
  snapshot(cfg, "train-target", cfg.out);
  spdlog::info("target {}: threshold {:.6f}, eval accuracy {:.4f}", cfg.target, thr, rep["eval_accuracy"].get<double>());
  return model_path;
}

std::string aggregate_csv_row(const Aggregate& a) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  return a.method + "," + std::to_string(a.seeds) + "," + num(a.evasion_mean) + "," + num(a.evasion_std) + "," +
         num(a.modifications_mean) + "," + num(a.modifications_std) + "," + opt(a.label_agreement_mean) + "," +
         opt(a.feature_agreement_10_mean) + "," + opt(a.feature_agreement_20_mean);
}

namespace {

json aggregate_json(const Aggregate& a) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["method"] = a.method;
  j["seeds"] = a.seeds;
  j["evasion_mean"] = a.evasion_mean;
  j["evasion_std"] = a.evasion_std;
  j["modifications_mean"] = a.modifications_mean;
  j["modifications_std"] = a.modifications_std;
  j["label_agreement_mean"] = opt(a.label_agreement_mean);
  j["feature_agreement_10_mean"] = opt(a.feature_agreement_10_mean);
  j["feature_agreement_20_mean"] = opt(a.feature_agreement_20_mean);
  return j;
}

void write_seed_artifacts(const fs::path& dir, const AttackResult& r) {
  write_text(dir / "report.json", result_json(r) + "\n");
  write_text(dir / "report.csv", evasion_csv_header() + "\n" + result_csv_row(r) + "\n");
  if (!r.stats.empty()) {
    std::string csv = stats_csv_header() + "\n";
    for (const auto& s : r.stats) csv += stats_csv_row(s) + "\n";
    write_text(dir / "training_stats.csv", csv);
  }
  if (r.policy) save_policy((dir / "policy.tefm").string(), *r.policy);
  for (std::size_t i = 0; i < r.surrogates.size(); ++i) {
    save_detector((dir / ("surrogate_round" + std::to_string(i + 1) + ".tefm")).string(), r.surrogates[i]);
  }
  if (r.d_sur.rows > 0) write_feature_matrix((dir / "d_sur.f32").string(), r.d_sur);
}

}  // namespace

std::vector<fs::path> cmd_attack(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  if (cfg.seeds.empty()) throw Error(Errc::InvalidArgument, "no seeds given");
  if (cfg.mode != "random" && cfg.mode != "ppo" && cfg.mode != "meme") {
    throw Error(Errc::InvalidArgument, "mode must be random, ppo or meme");
  }
  check_config(cfg.meme);
  const Detector target = load_detector(cfg.model_path.string());
  const Corpus corpus = Corpus::load(cfg.corpus_dir);
  AttackData data = prepare_attack(corpus, cfg.seeds.front());

  const fs::path dir = cfg.out / cfg.mode;
  fs::create_directories(dir);
  snapshot(cfg, "attack", dir);

  std::vector<fs::path> written;
  std::vector<AttackResult> results;
  json timing;
  timing["prepare_s"] = seconds_since(t0);
  bool timed_out = false;
  for (std::uint64_t seed : cfg.seeds) {
    if (cfg.wall_clock_s && seconds_since(t0) > *cfg.wall_clock_s) {
      timed_out = true;
      break;
    }
    const auto ts = Clock::now();
    select_attack_split(data, corpus, seed);
    MemeConfig mc = cfg.meme;
    mc.seed = seed;
    const fs::path sdir = dir / ("seed" + std::to_string(seed));
    fs::create_directories(sdir);
    std::ofstream episodes(sdir / "episodes.jsonl", std::ios::binary);
    EpisodeLog log(episodes);
    AttackResult r;
    if (cfg.mode == "meme") {
      r = run_meme(mc, target, data, &log);
    } else if (cfg.mode == "ppo") {
      r = run_ppo_baseline(mc, target, data, &log);
    } else {
      r = run_random_baseline(mc, target, data, &log);
    }
    write_seed_artifacts(sdir, r);
    written.push_back(sdir / "report.json");
    timing["seed" + std::to_string(seed) + "_s"] = seconds_since(ts);
    spdlog::info("{} seed {}: evasion {:.4f} ({}/{}), training queries {}", cfg.mode, seed, r.evasion.evasion_rate,
                 r.evasion.n_evaded, r.evasion.n_detected, r.training_queries);
    r.policy.reset();
    r.surrogates.clear();
    r.d_sur = {};
    results.push_back(std::move(r));
  }

  const Aggregate agg = aggregate(cfg.mode, results);
  json aj;
  aj["method"] = cfg.mode;
  aj["processed"] = results.size();
  aj["requested"] = cfg.seeds.size();
  aj["timed_out"] = timed_out;
  aj["aggregate"] = aggregate_json(agg);
  aj["per_seed"] = json::array();
  for (const auto& r : results) aj["per_seed"].push_back(json::parse(result_json(r)));
  write_text(dir / "aggregate.json", aj.dump(2) + "\n");
  std::string csv = evasion_csv_header() + "\n";
  for (const auto& r : results) csv += result_csv_row(r) + "\n";
  write_text(dir / "aggregate.csv", csv);
  written.push_back(dir / "aggregate.json");
  written.push_back(dir / "aggregate.csv");
  timing["total_s"] = seconds_since(t0);
  write_text(dir / "timing.json", timing.dump(2) + "\n");

  if (timed_out) {
    throw Error(Errc::TimedOut, "wall-clock limit reached after " + std::to_string(results.size()) + " of " +
                                    std::to_string(cfg.seeds.size()) + " seeds; partial report written");
  }
  return written;
}

fs::path cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out) {
  if (run_dirs.empty()) throw Error(Errc::MissingArtifacts, "no run directories given");
  std::vector<fs::path> files;
  for (const auto& d : run_dirs) {
    if (!fs::is_directory(d)) throw Error(Errc::MissingArtifacts, "not a directory: " + d.string());
    for (const auto& e : fs::recursive_directory_iterator(d)) {
      if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
    }
  }
  if (files.empty()) throw Error(Errc::MissingArtifacts, "no report.json found under the given directories");
  std::sort(files.begin(), files.end());

  std::map<std::string, std::vector<AttackResult>> by_method;
  for (const auto& f : files) {
    AttackResult r = result_from_json(read_text(f));
    by_method[r.method].push_back(std::move(r));
  }
  fs::create_directories(out);
  std::string csv = std::string(kComparisonHeader) + "\n";
  json j = json::array();
  for (const auto& [method, rs] : by_method) {
    const Aggregate a = aggregate(method, rs);
    csv += aggregate_csv_row(a) + "\n";
    j.push_back(aggregate_json(a));
  }
  write_text(out / "comparison.csv", csv);
  write_text(out / "comparison.json", j.dump(2) + "\n");
  return out / "comparison.csv";
}

}  // namespace tefb
